"""Budget enforcement: raise the sparsification rate uniformly until the total fits."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .sparsify import kept_count
from .volume import FLOAT_BYTES, communication_volume

RATE_STEP = 1e-3


@dataclass(frozen=True)
class CommBudget:
    """Upper bound on the summed feature bytes of all messages in one step (inf = unlimited)."""

    bytes: float = math.inf

    def __post_init__(self):
        if not self.bytes >= 0:
            raise ValueError(f"communication budget must be >= 0, got {self.bytes}")

    @property
    def finite(self) -> bool:
        return math.isfinite(self.bytes)


def _kept_after(payload, rate: float) -> int:
    H, W = payload.dims
    return min(payload.kept, kept_count(H * W, rate))


def fitting_rate(messages, budget: CommBudget, step: float = RATE_STEP) -> float:
    """Smallest rate on the ``step`` grid whose re-sparsified total fits the budget."""
    n = int(round(1.0 / step))
    payloads = [p for m in messages for p in m.payloads]
    for k in range(n + 1):
        r = min(1.0, k * step)
        total = sum(_kept_after(p, r) * p.features * FLOAT_BYTES for p in payloads)
        if total <= budget.bytes:
            return r
    return 1.0


def enforce_budget(messages, budget: CommBudget):
    """Return messages whose total CV is <= budget; unchanged if already within it."""
    messages = list(messages)
    if communication_volume(messages) <= budget.bytes:
        return messages
    r = fitting_rate(messages, budget)
    out = [m.replace_payloads(*(p.truncate(_kept_after(p, r)) for p in m.payloads)) for m in messages]
    assert communication_volume(out) <= budget.bytes
    return out


def budget_sweep(cv0: int, points: int = 20) -> np.ndarray:
    """Budgets from 0 to the unconstrained volume, inclusive."""
    return np.linspace(0.0, float(cv0), points)

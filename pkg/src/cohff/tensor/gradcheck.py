"""Central finite-difference verification of analytic gradients."""

from __future__ import annotations

import numpy as np

from .core import no_grad


def relative_error(a: np.ndarray, n: np.ndarray) -> float:
    """``|a - n| / (|a| + |n| + 1e-12)`` with Euclidean norms over the checked entries."""
    a, n = np.ravel(a), np.ravel(n)
    return float(np.linalg.norm(a - n) / (np.linalg.norm(a) + np.linalg.norm(n) + 1e-12))


def numeric_grad(f, param, h: float = 1e-5, entries=None) -> np.ndarray:
    flat = param.data.reshape(-1)
    idx = range(flat.size) if entries is None else entries
    out = np.zeros(len(idx))
    with no_grad():
        for k, i in enumerate(idx):
            old = flat[i]
            flat[i] = old + h
            fp = f().item()
            flat[i] = old - h
            fm = f().item()
            flat[i] = old
            out[k] = (fp - fm) / (2.0 * h)
    return out


def finite_diff_check(f, param, h: float = 1e-5, max_entries: int | None = None, seed: int = 0,
                      params=None) -> float:
    """Relative error between backward() and central differences for ``param``.

    ``f`` takes no arguments and rebuilds the scalar loss from current parameter
    values. With ``max_entries`` only a seeded random subset of entries is probed.
    ``params`` lists everything whose gradient must be cleared first (default: ``param``).
    """
    for p in (params or [param]):
        p.grad = None
    loss = f()
    loss.backward()
    analytic = np.zeros(param.size) if param.grad is None else param.grad.reshape(-1).copy()
    entries = None
    if max_entries is not None and param.size > max_entries:
        entries = np.sort(np.random.default_rng(seed).choice(param.size, max_entries, replace=False))
        analytic = analytic[entries]
    numeric = numeric_grad(f, param, h, entries)
    return relative_error(analytic, numeric)

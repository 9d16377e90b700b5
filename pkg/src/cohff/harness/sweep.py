"""Parameter sweeps over sparsification rate, GPS noise and communication budget."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from ..comm.volume import message_volume_ratio
from ..fusion import CoHFF
from ..metrics import CSV_COLUMNS, csv_row
from .config import RunConfig, with_changes
from .pipeline import prepare_world, run_scenario

SPARSIFICATION_RATES = (0.0, 0.5, 0.8, 0.95, 0.99)
GPS_SIGMAS = (0.0, 0.2, 0.4, 0.6)
VARIABLES = ("sparsification", "gps_sigma", "budget")
EXTRA_COLUMNS = ["variable", "value", "seed", "budget", "kept_fraction", "cv_ratio", "expected_cv_ratio"]
SWEEP_COLUMNS = EXTRA_COLUMNS + CSV_COLUMNS
RATIO_TOL = 0.01


class SweepError(RuntimeError):
    pass


@dataclass
class SweepResult:
    variable: str
    rows: list = field(default_factory=list)  # each a list of str in SWEEP_COLUMNS order
    columns: list = field(default_factory=lambda: list(SWEEP_COLUMNS))

    def column(self, name: str) -> list[str]:
        k = self.columns.index(name)
        return [r[k] for r in self.rows]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(self.columns)
            w.writerows(self.rows)

    @classmethod
    def read_csv(cls, path) -> "SweepResult":
        with open(path, newline="") as f:
            rows = list(csv.reader(f))
        if not rows:
            return cls("", [], list(SWEEP_COLUMNS))
        cols = rows[0]
        k = cols.index("variable") if "variable" in cols else None
        var = rows[1][k] if (k is not None and len(rows) > 1) else ""
        return cls(var, rows[1:], cols)


def default_values(variable: str, cv0: float | None = None, points: int = 20) -> list[float]:
    if variable == "sparsification":
        return list(SPARSIFICATION_RATES)
    if variable == "gps_sigma":
        return list(GPS_SIGMAS)
    if variable == "budget":
        if cv0 is None:
            raise SweepError("budget sweep needs the unconstrained volume or explicit values")
        return [float(b) for b in np.linspace(0.0, cv0, points)]
    raise SweepError(f"unknown sweep variable {variable!r}; expected one of {VARIABLES}")


def sweep(cfg: RunConfig, variable: str, model: CoHFF | None, values=None, seeds=None,
          check_ratio: bool = True, ego: int = 0) -> SweepResult:
    """run_scenario per (value, seed); one row per pair with the ego agent's metrics."""
    if model is None:
        raise SweepError("sweep needs trained weights (checkpoint missing)")
    if variable not in VARIABLES:
        raise SweepError(f"unknown sweep variable {variable!r}; expected one of {VARIABLES}")
    seeds = [cfg.seed] if seeds is None else list(seeds)
    worlds = {}
    cv0 = {}

    def world(seed, c):
        key = (seed, c.gps_sigma)
        if key not in worlds:
            worlds[key] = prepare_world(c, seed=seed)
        return worlds[key]

    for seed in seeds:
        base = with_changes(cfg, seed=seed, sparsification_rate=0.0, budget=None)
        cv0[seed] = run_scenario(model, world(seed, base), base).cv_bytes
    if values is None:
        values = default_values(variable, max(cv0.values()))
    res = SweepResult(variable)
    for v in values:
        for seed in seeds:
            if variable == "sparsification":
                c = with_changes(cfg, seed=seed, sparsification_rate=float(v))
            elif variable == "gps_sigma":
                c = with_changes(cfg, seed=seed, gps_sigma=float(v))
            else:
                c = with_changes(cfg, seed=seed, budget=float(v))
            out = run_scenario(model, world(seed, c), c)
            ratio = out.cv_bytes / cv0[seed] if cv0[seed] else float("nan")
            expected = message_volume_ratio(c.sparsification_rate, c.grid.dims)
            if variable == "sparsification" and check_ratio and abs(ratio - expected) > RATIO_TOL * expected:
                raise SweepError(f"CV ratio {ratio:.6f} at rate {v} deviates from closed form {expected:.6f}")
            m = out.agents[ego].metrics
            extra = [variable, f"{float(v):.6g}", str(seed),
                     "inf" if c.budget is None else f"{c.budget:.6g}",
                     f"{out.kept_fraction:.6f}", f"{ratio:.6f}", f"{expected:.6f}"]
            res.rows.append(extra + csv_row(f"{c.template}-{seed}", ego, c.sparsification_rate,
                                            c.gps_sigma, m, out.cv_bytes))
    return res

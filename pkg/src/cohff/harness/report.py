"""Sweep tables to CSV plus (x, y, series) TSV files for external plotting."""

from __future__ import annotations

import math
from pathlib import Path

from .sweep import SweepResult

# one TSV per metric; x = swept value, one series per seed plus their mean
PLOT_METRICS = ("miou", "iou", "ap50", "ap70", "bev_Vehicle", "bev_Road", "bev_Others", "cv_bytes")
PLOT_COLUMNS = ("x", "y", "series")


class ReportError(ValueError):
    pass


def _num(s: str) -> float:
    return math.nan if s in ("NA", "", "nan") else float(s)


def plot_series(res: SweepResult, metric: str) -> list[tuple[float, float, str]]:
    xs, ys, seeds = res.column("value"), res.column(metric), res.column("seed")
    rows = [(float(x), _num(y), f"seed{s}") for x, y, s in zip(xs, ys, seeds)]
    by_x: dict[float, list[float]] = {}
    for x, y, _ in rows:
        by_x.setdefault(x, []).append(y)
    for x in sorted(by_x):
        vals = [v for v in by_x[x] if not math.isnan(v)]
        rows.append((x, sum(vals) / len(vals) if vals else math.nan, "mean"))
    return rows


def report(res: SweepResult, out_dir, stem: str | None = None) -> list[Path]:
    """Write ``<stem>.csv`` and ``<stem>_<metric>.tsv`` files; returns the written paths."""
    if not res.rows:
        raise ReportError("empty sweep result: nothing to report")
    missing = [c for c in ("value", "seed") + PLOT_METRICS if c not in res.columns]
    if missing:
        raise ReportError(f"sweep table lacks columns {missing}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = stem or f"sweep_{res.variable or 'unknown'}"
    csv_path = out / f"{stem}.csv"
    res.write_csv(csv_path)
    paths = [csv_path]
    for metric in PLOT_METRICS:
        p = out / f"{stem}_{metric}.tsv"
        with open(p, "w") as f:
            f.write("\t".join(PLOT_COLUMNS) + "\n")
            for x, y, series in plot_series(res, metric):
                f.write(f"{x:.6g}\t{'NA' if math.isnan(y) else f'{y:.6g}'}\t{series}\n")
        paths.append(p)
    return paths

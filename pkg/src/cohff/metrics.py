"""Evaluation: per-class IoU / mIoU, voxel-based vehicle AP and BEV IoU."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .scene.types import CLASS_NAMES, NUM_CLASSES, SemanticClass

C = SemanticClass
EVAL_CLASSES = tuple(range(1, NUM_CLASSES))
BEV_OTHERS = (C.BUILDING, C.FENCE, C.TERRAIN, C.POLE, C.VEGETATION, C.WALL, C.GUARDRAIL,
              C.TRAFFIC_SIGNS, C.BRIDGE)
BEV_CLASSES = ("Vehicle", "Road", "Others")
CONNECTIVITY_6 = ndimage.generate_binary_structure(3, 1)


def _labels(g) -> np.ndarray:
    if hasattr(g, "labels") and not isinstance(g, np.ndarray):
        g = g.labels
    return np.asarray(g).astype(np.int64)


def _check_pair(pred, gt) -> tuple[np.ndarray, np.ndarray]:
    ps, gs = getattr(pred, "spec", None), getattr(gt, "spec", None)
    if ps is not None and gs is not None and ps != gs:
        raise ValueError(f"grid spec mismatch: {ps} vs {gs}")
    p, g = _labels(pred), _labels(gt)
    if p.shape != g.shape:
        raise ValueError(f"grid shape mismatch: {p.shape} vs {g.shape}")
    return p, g


def _ratio(num: int, den: int):
    return num / den if den else None


class ConfusionAccumulator:
    """13x13 counts indexed (gt, pred)."""

    def __init__(self):
        self.matrix = np.zeros((NUM_CLASSES, NUM_CLASSES), dtype=np.int64)

    def add(self, pred, gt) -> "ConfusionAccumulator":
        p, g = _check_pair(pred, gt)
        self.matrix += np.bincount(g.ravel() * NUM_CLASSES + p.ravel(),
                                   minlength=NUM_CLASSES ** 2).reshape(NUM_CLASSES, NUM_CLASSES)
        return self

    @property
    def total(self) -> int:
        return int(self.matrix.sum())

    def class_iou(self) -> dict[int, float | None]:
        m = self.matrix
        out = {}
        for c in EVAL_CLASSES:
            tp = int(m[c, c])
            fn = int(m[c].sum()) - tp
            fp = int(m[:, c].sum()) - tp
            out[c] = _ratio(tp, tp + fp + fn)  # None when the class is in neither grid
        return out

    def occupancy_iou(self):
        m = self.matrix
        tp = int(m[1:, 1:].sum())
        return _ratio(tp, tp + int(m[0, 1:].sum()) + int(m[1:, 0].sum()))


@dataclass
class IoUReport:
    per_class: dict  # class id -> IoU or None (not applicable)
    miou: float | None
    occupancy_iou: float | None

    def named(self) -> dict[str, float | None]:
        return {CLASS_NAMES[C(c)]: v for c, v in self.per_class.items()}


def class_iou(pred, gt) -> IoUReport:
    acc = ConfusionAccumulator().add(pred, gt)
    per = acc.class_iou()
    vals = [v for v in per.values() if v is not None]
    return IoUReport(per, float(np.mean(vals)) if vals else None, acc.occupancy_iou())


# -- objects and AP -----------------------------------------------------------------

@dataclass
class DetectedObject:
    voxels: frozenset  # {(x, y, z)}
    confidence: float

    @property
    def size(self) -> int:
        return len(self.voxels)


def connected_components(mask: np.ndarray) -> tuple[np.ndarray, int]:
    """6-connected component labels (1..n) of a boolean volume."""
    lab, n = ndimage.label(np.asarray(mask, dtype=bool), structure=CONNECTIVITY_6)
    return lab, int(n)


def extract_objects(pred, probabilities: np.ndarray | None = None, min_size: int = 2,
                    cls: int = C.VEHICLES) -> list[DetectedObject]:
    """Connected Vehicles components; confidence = mean Vehicles probability (1.0 without probabilities)."""
    if probabilities is None and hasattr(pred, "probabilities"):
        probabilities = pred.probabilities
    labels = _labels(pred)
    comp, n = connected_components(labels == cls)
    objs = []
    for k in range(1, n + 1):
        idx = np.argwhere(comp == k)
        if len(idx) < min_size:
            continue
        conf = 1.0 if probabilities is None else float(probabilities[tuple(idx.T) + (cls,)].mean())
        objs.append(DetectedObject(frozenset(map(tuple, idx.tolist())), conf))
    return objs


def gt_instances(grid) -> list[frozenset]:
    """Voxel sets of every vehicle instance in a ground-truth grid."""
    inst = np.asarray(grid.instance_ids)
    out = []
    for i in np.unique(inst[inst > 0]):
        out.append(frozenset(map(tuple, np.argwhere(inst == i).tolist())))
    return out


def set_iou(a: frozenset, b: frozenset) -> float:
    u = len(a | b)
    return len(a & b) / u if u else 0.0


def match_predictions(preds: list[DetectedObject], gts: list[frozenset], threshold: float) -> list[bool]:
    """TP flags in ranking order (confidence desc, larger set first on ties)."""
    order = sorted(range(len(preds)), key=lambda i: (-preds[i].confidence, -preds[i].size, i))
    free = set(range(len(gts)))
    flags = []
    for i in order:
        best, best_iou = None, -1.0
        for j in sorted(free):
            v = set_iou(preds[i].voxels, gts[j])
            if v > best_iou:
                best, best_iou = j, v
        if best is not None and best_iou >= threshold:
            free.discard(best)
            flags.append(True)
        else:
            flags.append(False)
    return flags


def average_precision(preds: list[DetectedObject], gts: list[frozenset], threshold: float = 0.5) -> float:
    """All-point interpolated area under the precision-recall curve."""
    if not gts or not preds:
        return 0.0
    tp = np.cumsum(match_predictions(preds, gts, threshold))
    n = np.arange(1, len(tp) + 1)
    recall = np.concatenate([[0.0], tp / len(gts)])
    precision = np.concatenate([[0.0], tp / n])
    for i in range(len(precision) - 2, -1, -1):
        precision[i] = max(precision[i], precision[i + 1])
    # plain left-to-right sum so the value does not depend on numpy's pairwise blocking
    return float(sum(((recall[1:] - recall[:-1]) * precision[1:]).tolist(), 0.0))


# -- BEV ---------------------------------------------------------------------

def bev_mask(labels: np.ndarray, classes) -> np.ndarray:
    return np.isin(labels, [int(c) for c in classes]).any(axis=2)


BEV_GROUPS = {"Vehicle": (C.VEHICLES,), "Road": (C.ROAD,), "Others": BEV_OTHERS}


def bev_iou(pred, gt, classes=None) -> dict:
    """BEV IoU (OR over height) per class id in ``classes``, or by default for
    Vehicle, Road and the micro-union 'Others'. Empty in both grids -> None."""
    p, g = _check_pair(pred, gt)
    groups = BEV_GROUPS if classes is None else {int(c): (c,) for c in classes}
    out = {}
    for name, cs in groups.items():
        a, b = bev_mask(p, cs), bev_mask(g, cs)
        out[name] = _ratio(int((a & b).sum()), int((a | b).sum()))
    return out


# -- report rows -------------------------------------------------------------

def fmt(v) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return "NA"
    return f"{v:.6f}" if isinstance(v, float) else str(v)


CSV_COLUMNS = (["scenario", "agent", "sparsification_rate", "gps_sigma"]
               + [f"iou_{CLASS_NAMES[C(c)]}" for c in EVAL_CLASSES]
               + ["miou", "iou", "ap50", "ap70"] + [f"bev_{n}" for n in BEV_CLASSES] + ["cv_bytes"])


def evaluate(pred, gt_grid) -> dict:
    rep = class_iou(pred, gt_grid)
    objs = extract_objects(pred)
    gts = gt_instances(gt_grid)
    return {
        "per_class": rep.per_class, "miou": rep.miou, "iou": rep.occupancy_iou,
        "ap50": average_precision(objs, gts, 0.5), "ap70": average_precision(objs, gts, 0.7),
        "bev": bev_iou(pred, gt_grid),
    }


def csv_row(scenario: str, agent: int, rate: float, gps_sigma: float, metrics: dict, cv_bytes: int) -> list[str]:
    row = [scenario, str(agent), fmt(float(rate)), fmt(float(gps_sigma))]
    row += [fmt(metrics["per_class"][c]) for c in EVAL_CLASSES]
    row += [fmt(metrics["miou"]), fmt(metrics["iou"]), fmt(metrics["ap50"]), fmt(metrics["ap70"])]
    row += [fmt(metrics["bev"][n]) for n in BEV_CLASSES]
    row.append(str(int(cv_bytes)))
    return row

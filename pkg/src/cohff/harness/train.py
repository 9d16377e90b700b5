"""Three-stage toy training: occupancy pre-training, plane segmentation pre-training,
then joint fine-tuning of the fused prediction."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from ..attention import AXIS_DIMS
from ..fusion import CoHFF
from ..scene.types import NUM_CLASSES
from ..tensor import (
    Adam, add, class_weights_from_labels, focal_loss, mul, no_grad, reshape, sgd_step, weighted_cross_entropy,
    zero_grads,
)
from .config import RunConfig
from .pipeline import World, prepare_world

STAGES = ("occupancy", "segmentation", "joint")


class DivergenceError(RuntimeError):
    def __init__(self, stage: str, step: int, value: float):
        super().__init__(f"non-finite loss {value} in stage {stage!r} at step {step}")
        self.stage, self.step, self.value = stage, step, value


def project_labels(labels: np.ndarray, axis: str) -> np.ndarray:
    """Plane label per cell: most frequent non-empty class along the collapsed axis
    (ties -> lowest id), 0 if the line is empty."""
    a, b = AXIS_DIMS[axis]
    c = ({0, 1, 2} - {a, b}).pop()
    onehot = np.eye(NUM_CLASSES, dtype=np.int64)[labels.astype(np.int64)]
    counts = onehot.sum(axis=c)
    counts[..., 0] = 0
    out = np.argmax(counts, axis=-1)
    return np.where(counts.max(axis=-1) > 0, out, 0)


@dataclass
class TrainResult:
    model: CoHFF
    curve: list = field(default_factory=list)  # (stage, step, total loss, fused weighted CE or nan)
    class_weights: np.ndarray | None = None

    def stage_curve(self, stage: str) -> list:
        return [r for r in self.curve if r[0] == stage]

    @property
    def joint_ce(self) -> list[float]:
        return [r[3] for r in self.stage_curve("joint")]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["stage", "step", "loss", "fused_weighted_ce"])
            for stage, step, loss, ce in self.curve:
                w.writerow([stage, step, f"{loss:.10g}", "" if math.isnan(ce) else f"{ce:.10g}"])


def learning_rate(cfg, step: int, steps: int) -> float:
    if cfg.lr_schedule == "cosine" and steps > 1:
        return cfg.lr * 0.5 * (1.0 + math.cos(math.pi * step / steps))
    return cfg.lr


class _Optimizer:
    def __init__(self, params, cfg, steps: int):
        self.params, self.cfg, self.steps = params, cfg, steps
        self.adam = Adam(params, lr=cfg.lr) if cfg.optimizer == "adam" else None

    def step(self, k: int):
        lr = learning_rate(self.cfg, k, self.steps)
        if self.adam is not None:
            self.adam.lr = lr
            self.adam.step()
        else:
            sgd_step(self.params, lr, self.cfg.momentum)


def _check(stage: str, step: int, value: float) -> None:
    if not math.isfinite(value):
        raise DivergenceError(stage, step, value)


def fused_losses(model: CoHFF, world: World, cfg: RunConfig, weights: np.ndarray, collaboration: bool):
    """Differentiable joint forward over all agents: (fused CE, occupancy focal, plane CE) means."""
    ids = sorted(world.inputs)
    states = {i: model.local(world.inputs[i]) for i in ids}
    msgs = {i: model.differentiable_message(states[i], cfg.sparsification_rate) for i in ids} \
        if collaboration and len(ids) > 1 else {}
    ce, occ, seg = [], [], []
    for i in ids:
        rec = [msgs[j] for j in world.neighbors(i) if j in msgs]
        out = model.fuse(states[i], rec)
        lab = world.labels(i, cfg.gt_tier)
        ce.append(weighted_cross_entropy(reshape(out.prediction.logits, (-1, NUM_CLASSES)), lab.ravel(), weights))
        occ.append(focal_loss(states[i].p_occ, lab > 0, cfg.train.focal_alpha, cfg.train.focal_gamma))
        seg.append(plane_loss(model, states[i].planes, lab, weights))
    return _mean(ce), _mean(occ), _mean(seg)


def plane_loss(model: CoHFF, planes, labels: np.ndarray, weights: np.ndarray):
    terms = []
    for axis, t in planes.ego().items():
        H, W, F = t.shape
        logits = model.plane_head(reshape(t, (H * W, F)))
        terms.append(weighted_cross_entropy(logits, project_labels(labels, axis).ravel(), weights))
    return _mean(terms)


def _mean(ts):
    acc = ts[0]
    for t in ts[1:]:
        acc = add(acc, t)
    return mul(acc, 1.0 / len(ts))


def _stage_params(model: CoHFF, stage: str):
    if stage == "occupancy":
        return model.occ_encoder.parameters() + model.occ_head.parameters()
    if stage == "segmentation":
        return model.seg.parameters() + model.plane_head.parameters()
    return model.parameters()


def train_toy(cfg: RunConfig, world: World | None = None, model: CoHFF | None = None,
              collaboration: bool | None = None, log_path=None, progress=None) -> TrainResult:
    """Train a CoHFF model on the configured scene; deterministic for a fixed config."""
    cfg.validate()
    world = prepare_world(cfg) if world is None else world
    collab = cfg.collaboration if collaboration is None else collaboration
    model = CoHFF(np.random.default_rng(cfg.seed), cfg.grid, cfg.model) if model is None else model
    tr = cfg.train
    weights = class_weights_from_labels(
        np.concatenate([world.labels(i, cfg.gt_tier).ravel() for i in sorted(world.inputs)]))
    result = TrainResult(model, [], weights)
    ids = sorted(world.inputs)

    def run_stage(stage, steps, loss_fn):
        params = _stage_params(model, stage)
        opt = _Optimizer(params, tr, steps)
        for step in range(steps):
            zero_grads(model.parameters())
            loss, ce = loss_fn()
            value = loss.item()
            _check(stage, step, value)
            loss.backward()
            opt.step(step)
            result.curve.append((stage, step, value, ce))
            if progress:
                progress(stage, step, value)

    def occ_loss():
        terms = [focal_loss(model.occ_head(model.occ_encoder(world.inputs[i].depth_embedding)),
                            world.labels(i, cfg.gt_tier) > 0, tr.focal_alpha, tr.focal_gamma) for i in ids]
        return _mean(terms), math.nan

    def seg_loss():
        terms = [plane_loss(model, model.seg(world.inputs[i].observations, world.inputs[i].cameras),
                            world.labels(i, cfg.gt_tier), weights) for i in ids]
        return _mean(terms), math.nan

    def joint_loss():
        ce, occ, seg = fused_losses(model, world, cfg, weights, collab)
        total = add(add(mul(ce, tr.lambda_fused), mul(occ, tr.lambda_occ)), mul(seg, tr.lambda_seg))
        return total, ce.item()

    run_stage("occupancy", tr.occ_steps, occ_loss)
    run_stage("segmentation", tr.seg_steps, seg_loss)
    run_stage("joint", tr.joint_steps, joint_loss)
    if tr.joint_steps:
        # loss of the final weights, recorded one past the last update
        with no_grad():
            loss, ce = joint_loss()
        _check("joint", tr.joint_steps, loss.item())
        result.curve.append(("joint", tr.joint_steps, loss.item(), ce))
    if log_path is not None:
        result.write_csv(log_path)
    return result


def occupied_accuracy(pred_labels: np.ndarray, gt_labels: np.ndarray) -> float:
    occ = gt_labels > 0
    return float((pred_labels[occ] == gt_labels[occ]).mean()) if occ.any() else float("nan")

"""Focal loss for binary occupancy and weighted cross-entropy for semantic labels."""

from __future__ import annotations

import numpy as np

from .core import Tensor, as_tensor, make

PROB_EPS = 1e-7


def focal_loss(p, y, alpha: float = 0.25, gamma: float = 2.0, eps: float = PROB_EPS) -> Tensor:
    """Mean of ``-alpha * (1 - p_t)**gamma * log(p_t)`` with ``p_t = p`` where y=1, else ``1 - p``."""
    p = as_tensor(p)
    y = np.asarray(y, dtype=bool)
    if y.shape != p.shape:
        raise ValueError(f"focal_loss: targets {y.shape} vs probabilities {p.shape}")
    pc = np.clip(p.data, eps, 1.0 - eps)
    inside = (p.data >= eps) & (p.data <= 1.0 - eps)
    pt = np.where(y, pc, 1.0 - pc)
    one_m = 1.0 - pt
    logpt = np.log(pt)
    n = p.size
    loss = float(np.sum(-alpha * one_m ** gamma * logpt)) / n

    def bw(g):
        if gamma == 0:
            dpt = -alpha / pt
        else:
            dpt = -alpha * (-gamma * one_m ** (gamma - 1.0) * logpt + one_m ** gamma / pt)
        dp = np.where(y, dpt, -dpt) * inside
        return (g * dp / n,)

    return make(np.array(loss), (p,), bw, "focal_loss")


def class_weights_from_labels(labels: np.ndarray, num_classes: int = 13) -> np.ndarray:
    """Inverse class frequency, normalized to mean 1 over the classes that occur.

    Classes absent from ``labels`` get weight 1; they never contribute to the loss
    on this data.
    """
    counts = np.bincount(np.asarray(labels).ravel().astype(np.int64), minlength=num_classes).astype(float)
    present = counts > 0
    w = np.ones(num_classes)
    inv = 1.0 / counts[present]
    w[present] = inv / inv.mean()
    return w


def weighted_cross_entropy(logits, labels, class_weights=None) -> Tensor:
    """Mean over rows of ``w[label] * -log softmax(logits)[label]``."""
    z = as_tensor(logits)
    if z.ndim != 2:
        raise ValueError(f"weighted_cross_entropy expects [N, C] logits, got {z.shape}")
    N, C = z.shape
    lab = np.asarray(labels).astype(np.int64).ravel()
    if lab.shape[0] != N:
        raise ValueError(f"{lab.shape[0]} labels for {N} rows")
    if lab.size and (lab.min() < 0 or lab.max() >= C):
        raise ValueError(f"labels must lie in 0..{C - 1}, got range [{lab.min()}, {lab.max()}]")
    w = np.ones(C) if class_weights is None else np.asarray(
        class_weights.data if isinstance(class_weights, Tensor) else class_weights, dtype=np.float64)
    if w.shape != (C,):
        raise ValueError(f"class weights shape {w.shape} != ({C},)")
    shifted = z.data - z.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(N)
    nll = lse - shifted[rows, lab]
    wl = w[lab]
    loss = float(np.sum(wl * nll)) / N

    def bw(g):
        s = np.exp(shifted - lse[:, None])
        s[rows, lab] -= 1.0
        return (g * s * (wl / N)[:, None],)

    return make(np.array(loss), (z,), bw, "weighted_cross_entropy")

"""Learnable plane masks, top-k sparsification and the receiver-side inverse."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..attention import plane_shape
from ..tensor import Module, Parameter, Tensor, as_tensor, mul, reshape, sigmoid

SEND_AXES = ("xz", "yz")


def kept_count(n_cells: int, rate: float) -> int:
    """``ceil((1 - rate) * n_cells)``, guarded against float round-up (e.g. 0.2 * 100)."""
    if not 0.0 <= rate <= 1.0:
        raise ValueError(f"sparsification rate must be in [0, 1], got {rate}")
    return int(min(n_cells, max(0, math.ceil((1.0 - rate) * n_cells - 1e-9))))


def topk_cells(scores: np.ndarray, k: int) -> np.ndarray:
    """Sorted flat indices of the ``k`` largest scores; ties go to the lower index."""
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    order = np.lexsort((np.arange(s.size), -s))
    return np.sort(order[:k])


@dataclass
class SparsePlanePayload:
    """Kept cells of one plane. ``scores`` (ranking keys of the kept cells) never go on the wire."""

    axis: str
    dims: tuple[int, int]
    features: int
    indices: np.ndarray  # uint32, strictly increasing, < H*W
    values: np.ndarray  # float32 (kept, F)
    scores: np.ndarray | None = None

    def __post_init__(self):
        self.indices = np.asarray(self.indices, dtype=np.uint32).reshape(-1)
        self.values = np.asarray(self.values, dtype=np.float32).reshape(len(self.indices), self.features)
        self.dims = (int(self.dims[0]), int(self.dims[1]))

    @property
    def kept(self) -> int:
        return len(self.indices)

    def validate(self) -> None:
        n = self.dims[0] * self.dims[1]
        idx = self.indices.astype(np.int64)
        if len(idx) and (idx.max() >= n):
            raise ValueError(f"payload index {idx.max()} out of range for {self.dims}")
        if np.any(np.diff(idx) <= 0):
            raise ValueError("payload indices must be strictly increasing")

    def truncate(self, k: int) -> "SparsePlanePayload":
        """Keep the ``k`` best-ranked cells (by stored scores, else lowest indices)."""
        if k >= self.kept:
            return self
        if self.scores is None:
            sel = np.arange(k)
        else:
            sel = topk_cells(self.scores, k)
        return SparsePlanePayload(self.axis, self.dims, self.features, self.indices[sel], self.values[sel],
                                  None if self.scores is None else self.scores[sel])

    def same_content(self, other: "SparsePlanePayload") -> bool:
        return (self.axis == other.axis and self.dims == other.dims and self.features == other.features
                and np.array_equal(self.indices, other.indices)
                and self.values.tobytes() == other.values.tobytes())


class PlaneMask(Module):
    """Per-cell mask logits for the two transmitted planes."""

    def __init__(self, grid_dims, init: float = 0.0):
        self.xz = Parameter(np.full(plane_shape(grid_dims, "xz"), init))
        self.yz = Parameter(np.full(plane_shape(grid_dims, "yz"), init))

    def logits(self, axis: str) -> Parameter:
        return {"xz": self.xz, "yz": self.yz}[axis]


def _check(plane, mask) -> None:
    if plane.ndim != 3 or tuple(plane.shape[:2]) != tuple(mask.shape):
        raise ValueError(f"plane shape {plane.shape} does not match mask shape {mask.shape}")


def gated_plane(plane, mask_logits, rate: float = 0.0) -> Tensor:
    """Differentiable view of what the receiver gets: ``plane * sigmoid(mask)`` on kept cells, 0 elsewhere."""
    plane, mask_logits = as_tensor(plane), as_tensor(mask_logits)
    _check(plane, mask_logits)
    H, W = mask_logits.shape
    g = sigmoid(mask_logits)
    keep = np.zeros(H * W)
    keep[topk_cells(g.data, kept_count(H * W, rate))] = 1.0
    return mul(mul(plane, reshape(g, (H, W, 1))), keep.reshape(H, W, 1))


def apply_mask_and_sparsify(plane, mask_logits, rate: float, axis: str) -> SparsePlanePayload:
    """Gate by sigmoid(mask), keep the top ``ceil((1-r)HW)`` cells and narrow to f32."""
    plane, mask_logits = as_tensor(plane), as_tensor(mask_logits)
    _check(plane, mask_logits)
    if axis not in SEND_AXES:
        raise ValueError(f"only xz/yz planes are transmitted, got {axis!r}")
    H, W, F = plane.shape
    g = sigmoid(mask_logits.detach()).data.reshape(-1)
    idx = topk_cells(g, kept_count(H * W, rate))
    vals = plane.data.reshape(H * W, F)[idx] * g[idx, None]
    return SparsePlanePayload(axis, (H, W), F, idx, vals, g[idx].copy())


def payload_from_dense(axis: str, dense: np.ndarray, indices) -> SparsePlanePayload:
    H, W, F = dense.shape
    idx = np.asarray(indices, dtype=np.int64)
    return SparsePlanePayload(axis, (H, W), F, idx, dense.reshape(H * W, F)[idx])


def densify(payload: SparsePlanePayload) -> Tensor:
    """Zero-filled (H, W, F) plane with the kept vectors scattered back (f64)."""
    payload.validate()
    H, W = payload.dims
    out = np.zeros((H * W, payload.features))
    out[payload.indices.astype(np.int64)] = payload.values.astype(np.float64)
    return Tensor(out.reshape(H, W, payload.features))

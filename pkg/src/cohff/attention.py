"""Plane containers and single-scale deformable attention over feature planes."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import (
    Linear, Module, Tensor, add, bilinear_sample2d, concat, index, matmul, mul, reshape, softmax, sum as tsum,
)

AXES = ("xy", "xz", "yz")
AXIS_DIMS = {"xy": (0, 1), "xz": (0, 2), "yz": (1, 2)}  # grid axes spanned by each plane
# attention parameter groups: the ego's three planes and the two received plane kinds
TARGET_TYPES = ("ego_xy", "ego_xz", "ego_yz", "remote_xz", "remote_yz")


@dataclass(frozen=True)
class DeformAttnConfig:
    heads: int = 2
    points_per_ref: int = 4  # K sampling points per reference
    refs_per_query: int = 4  # pillar samples for image cross-attention
    features: int = 8

    def __post_init__(self):
        if min(self.heads, self.points_per_ref, self.refs_per_query, self.features) < 1:
            raise ValueError(f"attention config values must be >= 1: {self}")
        if self.features % self.heads:
            raise ValueError(f"features ({self.features}) must be divisible by heads ({self.heads})")


def plane_shape(spec_dims, axis: str) -> tuple[int, int]:
    a, b = AXIS_DIMS[axis]
    return spec_dims[a], spec_dims[b]


@dataclass
class FeaturePlane:
    """One axis-tagged plane ``data[H, W, F]``; (H, W) follow the grid dims of ``axis``."""

    axis: str
    data: Tensor

    def __post_init__(self):
        if self.axis not in AXES:
            raise ValueError(f"unknown plane axis {self.axis!r}")
        if self.data.ndim != 3:
            raise ValueError(f"plane data must be (H, W, F), got {self.data.shape}")

    def check_dims(self, grid_dims) -> None:
        if tuple(self.data.shape[:2]) != plane_shape(grid_dims, self.axis):
            raise ValueError(f"{self.axis} plane has dims {self.data.shape[:2]}, grid expects "
                             f"{plane_shape(grid_dims, self.axis)}")


@dataclass
class RemotePlanes:
    """Conditioned xz/yz planes from one sender.

    ``shift`` = (dx, dy) in cells: sender cell index + shift = ego cell index.
    """

    sender: int
    xz: Tensor
    yz: Tensor
    shift: tuple[float, float] = (0.0, 0.0)


@dataclass
class PlaneSet:
    xy: Tensor
    xz: Tensor
    yz: Tensor
    remote: list[RemotePlanes] = field(default_factory=list)

    @property
    def features(self) -> int:
        return self.xy.shape[-1]

    def ego(self) -> dict[str, Tensor]:
        return {"xy": self.xy, "xz": self.xz, "yz": self.yz}

    def entries(self):
        """(type, axis, tensor, frame offset in cells) for every plane, ego first."""
        out = [(f"ego_{a}", a, t, (0.0, 0.0, 0.0)) for a, t in self.ego().items()]
        for r in self.remote:
            off = (float(r.shift[0]), float(r.shift[1]), 0.0)
            out.append(("remote_xz", "xz", r.xz, off))
            out.append(("remote_yz", "yz", r.yz, off))
        return out

    def check(self) -> None:
        F = self.features
        for _, axis, t, _ in self.entries():
            if t.shape[-1] != F:
                raise ValueError(f"plane {axis} has {t.shape[-1]} features, expected {F}")


def _cells(h: int, w: int) -> np.ndarray:
    r, c = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    return np.stack([r.ravel(), c.ravel()], axis=1).astype(np.float64)


def reference_points(q_axis: str, q_shape, q_off, t_axis: str, t_shape, t_off) -> np.ndarray:
    """Reference cell coordinates on the target plane for every cell of the query plane.

    Shared grid axes are copied (moved between frames by the offsets); the axis the
    target spans but the query lacks is set to the target's midpoint.
    """
    cells = _cells(*q_shape)
    known = {}
    for col, ax in enumerate(AXIS_DIMS[q_axis]):
        known[ax] = cells[:, col] + q_off[ax]
    ref = np.zeros((len(cells), 2))
    for col, ax in enumerate(AXIS_DIMS[t_axis]):
        if ax in known:
            ref[:, col] = known[ax] - t_off[ax]
        else:
            ref[:, col] = (t_shape[col] - 1) / 2.0
    return ref


def head_mask(heads: int, features: int) -> np.ndarray:
    d = features // heads
    m = np.zeros((1, heads, 1, features))
    for h in range(heads):
        m[0, h, 0, h * d:(h + 1) * d] = 1.0
    return m


class PlaneSelfAttention(Module):
    """Deformable self-attention jointly updating every plane of a PlaneSet.

    Every plane cell is a query. For each target plane the query gets one reference
    point, K learned offsets per head, and softmax weights shared across all
    targets. Updates are residual and computed from pre-update values only.
    """

    def __init__(self, rng, cfg: DeformAttnConfig, zero_out: bool = True):
        self.cfg = cfg
        T, H, K = len(TARGET_TYPES), cfg.heads, cfg.points_per_ref
        self.sampling = Linear(rng, cfg.features, T * H * K * 3)
        self.sampling.weight.data *= 0.1
        self.out = Linear(rng, cfg.features, cfg.features, zero=zero_out)

    def __call__(self, planes: PlaneSet) -> PlaneSet:
        planes.check()
        cfg = self.cfg
        H, K, F = cfg.heads, cfg.points_per_ref, cfg.features
        if planes.features != F:
            raise ValueError(f"planes carry {planes.features} features, attention expects {F}")
        entries = planes.entries()
        shapes = [t.shape[:2] for _, _, t, _ in entries]
        sizes = [h * w for h, w in shapes]
        queries = concat([reshape(t, (-1, F)) for _, _, t, _ in entries], axis=0)
        nq = queries.shape[0]
        samp = reshape(self.sampling(queries), (nq, len(TARGET_TYPES), H, K, 3))

        logits, values = [], []
        for ttype, t_axis, t_tensor, t_off in entries:
            # reference point of every query on this target
            refs = np.concatenate([
                reference_points(q_axis, q_shape, q_off, t_axis, t_tensor.shape[:2], t_off)
                for (_, q_axis, _, q_off), q_shape in zip(entries, shapes)
            ])
            k = TARGET_TYPES.index(ttype)
            off = index(samp, (slice(None), k, slice(None), slice(None), slice(0, 2)))
            coords = add(off, refs[:, None, None, :])
            sampled = bilinear_sample2d(t_tensor, reshape(coords, (-1, 2)))
            values.append(reshape(sampled, (nq, H, K, F)))
            logits.append(index(samp, (slice(None), k, slice(None), slice(None), 2)))
        w = softmax(concat(logits, axis=2), axis=2)  # (nq, H, T*K)
        mask = head_mask(H, F)
        agg = None
        for i, val in enumerate(values):
            wk = reshape(index(w, (slice(None), slice(None), slice(i * K, (i + 1) * K))), (nq, H, K, 1))
            term = tsum(mul(mul(val, wk), mask), axis=(1, 2))
            agg = term if agg is None else add(agg, term)
        updated = add(queries, self.out(agg))

        outs, start = [], 0
        for (h, w_), n in zip(shapes, sizes):
            outs.append(reshape(index(updated, slice(start, start + n)), (h, w_, F)))
            start += n
        new = PlaneSet(outs[0], outs[1], outs[2])
        for j, r in enumerate(planes.remote):
            new.remote.append(RemotePlanes(r.sender, outs[3 + 2 * j], outs[4 + 2 * j], r.shift))
        return new


def scatter_mean_matrix(groups: np.ndarray, n_groups: int) -> np.ndarray:
    """(n_groups, len(groups)) matrix averaging rows by group id; empty groups give zero rows."""
    A = np.zeros((n_groups, len(groups)))
    A[groups, np.arange(len(groups))] = 1.0
    cnt = A.sum(axis=1, keepdims=True)
    return np.divide(A, cnt, out=np.zeros_like(A), where=cnt > 0)


def group_mean(x: Tensor, groups: np.ndarray, n_groups: int) -> Tensor:
    """Mean of the rows of ``x[N, F]`` per group id, as a constant-matrix product."""
    A = scatter_mean_matrix(np.asarray(groups, dtype=np.int64), n_groups)
    return matmul(x.transpose(1, 0), A.T).transpose(1, 0)

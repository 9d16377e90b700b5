"""Semantic segmentation task net: image features lifted onto xy/xz/yz planes by
deformable cross-attention, then refined by intra-agent plane self-attention."""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from .attention import (
    AXES, AXIS_DIMS, DeformAttnConfig, PlaneSelfAttention, PlaneSet, group_mean, head_mask, plane_shape,
)
from .scene.camera import Camera, observation, render_camera
from .scene.types import NUM_CLASSES, GridSpec
from .tensor import (
    Linear, Module, Parameter, Tensor, add, bilinear_sample2d, concat, conv2d, index, mul, relu, reshape,
    softmax, sum as tsum, xavier_uniform,
)

OBS_CHANNELS = NUM_CLASSES + 1


def agent_observations(scenario, agent_id: int, max_depth: float) -> list[np.ndarray]:
    """One (h, w, 14) observation per camera of the agent's camera quad."""
    n = len(scenario.agent(agent_id).rig("camera_quad").mounts)
    return [observation(*render_camera(scenario, agent_id, k), max_depth) for k in range(n)]


class ImageBackbone(Module):
    """Two 'same' conv layers with ReLU: observation channels -> F_img."""

    def __init__(self, rng, f_img: int, c_in: int = OBS_CHANNELS, k: int = 3):
        self.k1 = Parameter(xavier_uniform(rng, (k, k, c_in, f_img), fan_in=k * k * c_in, fan_out=k * k * f_img))
        self.b1 = Parameter(np.zeros(f_img))
        self.k2 = Parameter(xavier_uniform(rng, (k, k, f_img, f_img), fan_in=k * k * f_img, fan_out=k * k * f_img))
        self.b2 = Parameter(np.zeros(f_img))

    def __call__(self, obs) -> Tensor:
        return relu(conv2d(relu(conv2d(obs, self.k1, self.b1)), self.k2, self.b2))


def pillar_points(spec: GridSpec, axis: str, refs: int) -> np.ndarray:
    """(H*W, refs, 3) agent-frame points: plane cell centers lifted to ``refs`` positions
    spread uniformly along the axis the plane does not span."""
    a, b = AXIS_DIMS[axis]
    c = ({0, 1, 2} - {a, b}).pop()
    H, W = plane_shape(spec.dims, axis)
    r, col = np.meshgrid(np.arange(H), np.arange(W), indexing="ij")
    idx = np.zeros((H * W, refs, 3))
    idx[:, :, a] = r.reshape(-1, 1)
    idx[:, :, b] = col.reshape(-1, 1)
    # fractional cell index so that cell_centers lands on (k + 0.5) / refs of the extent
    idx[:, :, c] = (np.arange(refs) + 0.5) / refs * spec.dims[c] - 0.5
    return spec.cell_centers(idx.reshape(-1, 3)).reshape(H * W, refs, 3)


@lru_cache(maxsize=64)
def _projections(spec: GridSpec, cameras: tuple[Camera, ...], axis: str, refs: int):
    """Valid (query, camera, image coordinate) triples for one plane."""
    pts = pillar_points(spec, axis, refs)
    n = pts.shape[0]
    q_idx, cam_idx, coords = [], [], []
    for ci, cam in enumerate(cameras):
        uv, ok = cam.project(pts.reshape(-1, 3))
        qs = np.repeat(np.arange(n), refs)
        q_idx.append(qs[ok])
        cam_idx.append(np.full(int(ok.sum()), ci))
        coords.append(uv[ok])
    return np.concatenate(q_idx), np.concatenate(cam_idx), np.concatenate(coords)


class DeformableCrossAttention(Module):
    """Plane queries attend into per-camera image features around projected pillar points."""

    def __init__(self, rng, cfg: DeformAttnConfig, f_img: int):
        if f_img % cfg.heads:
            raise ValueError(f"image features ({f_img}) must be divisible by heads ({cfg.heads})")
        self.cfg = cfg
        H, K = cfg.heads, cfg.points_per_ref
        self.offsets = Linear(rng, cfg.features, H * K * 2)
        self.offsets.weight.data *= 0.1
        self.weights = Linear(rng, cfg.features, H * K)
        self.out = Linear(rng, f_img, cfg.features)
        self.f_img = f_img

    def attend(self, query: Tensor, images: list, q_idx, cam_idx, coords) -> Tensor:
        """``query[N, F]`` plus valid projection triples -> updated ``[N, F]``."""
        cfg = self.cfg
        H, K, Fi = cfg.heads, cfg.points_per_ref, self.f_img
        n = query.shape[0]
        if len(q_idx) == 0:
            return query
        off = reshape(self.offsets(query), (n, H, K, 2))
        w = softmax(reshape(self.weights(query), (n, H, K)), axis=2)
        mask = head_mask(H, Fi)
        vals, groups = [], []
        for ci in np.unique(cam_idx):
            sel = cam_idx == ci
            qs = q_idx[sel]
            c = add(index(off, qs), coords[sel][:, None, None, :])
            s = reshape(bilinear_sample2d(images[ci], reshape(c, (-1, 2))), (len(qs), H, K, Fi))
            wk = reshape(index(w, qs), (len(qs), H, K, 1))
            vals.append(tsum(mul(mul(s, wk), mask), axis=(1, 2)))
            groups.append(qs)
        agg = group_mean(concat(vals, axis=0), np.concatenate(groups), n)
        has = np.zeros((n, 1))
        has[np.unique(q_idx)] = 1.0
        # queries without any valid reference keep their value
        return add(mul(self.out(agg), has), mul(query, 1.0 - has))

    def __call__(self, queries: dict, images: list, cameras, spec: GridSpec) -> dict:
        cams = tuple(cameras)
        out = {}
        for axis in AXES:
            q = queries[axis]
            Hp, Wp, F = q.shape
            tri = _projections(spec, cams, axis, self.cfg.refs_per_query)
            out[axis] = reshape(self.attend(reshape(q, (Hp * Wp, F)), images, *tri), (Hp, Wp, F))
        return out


class SegmentationNet(Module):
    """Observations -> image features -> plane queries (cross-attn) -> intra-agent PSA."""

    def __init__(self, rng, spec: GridSpec, cfg: DeformAttnConfig, f_img: int = 8, sa_layers: int = 1):
        self.spec = spec
        self.cfg = cfg
        self.backbone = ImageBackbone(rng, f_img)
        # one learned query vector per plane axis, shared by all cells of the plane
        self.queries = {a: Parameter(rng.normal(0.0, 0.1, cfg.features)) for a in AXES}
        self.cross = DeformableCrossAttention(rng, cfg, f_img)
        self.sa = [PlaneSelfAttention(rng, cfg) for _ in range(sa_layers)]

    def plane_queries(self) -> dict:
        out = {}
        for a in AXES:
            shape = plane_shape(self.spec.dims, a)
            out[a] = add(np.zeros(shape + (self.cfg.features,)), self.queries[a])
        return out

    def __call__(self, observations: list, cameras) -> PlaneSet:
        images = [self.backbone(o) for o in observations]
        planes = self.cross(self.plane_queries(), images, cameras, self.spec)
        ps = PlaneSet(planes["xy"], planes["xz"], planes["yz"])
        for layer in self.sa:
            ps = layer(ps)
        return ps


def intra_agent_self_attention(planes: PlaneSet, layer: PlaneSelfAttention) -> PlaneSet:
    """PSA restricted to the agent's own three planes."""
    return layer(PlaneSet(planes.xy, planes.xz, planes.yz))

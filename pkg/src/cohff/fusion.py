"""Hybrid feature fusion: five-plane self-attention across agents, tri-plane volume
reconstruction and task feature fusion to 13-class occupancy logits."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .attention import DeformAttnConfig, PlaneSelfAttention, PlaneSet, RemotePlanes, plane_shape
from .comm.codec import V2XMessage
from .comm.condition import PoseAwareCondition, reference_shift
from .comm.sparsify import PlaneMask, apply_mask_and_sparsify, densify, gated_plane
from .occupancy import ConvBlock3d, OccupancyEncoder, OccupancyHead
from .scene.io import grid_to_dict
from .scene.pose import relative_pose
from .scene.types import GROUND_CLASSES, NUM_CLASSES, GridSpec, Pose, SemanticClass, SemanticVoxelGrid
from .segmentation import SegmentationNet
from .tensor import (
    Linear, Module, Parameter, Tensor, add, as_tensor, bilinear_sample2d, concat, linear, mul, no_grad, reshape,
    xavier_uniform,
)


# -- plane alignment and volume reconstruction ---------------------------------

def align_plane(plane, axis: str, shift: tuple[float, float]) -> Tensor:
    """Resample a sender plane onto the ego grid: ego cell i reads sender cell i - shift.

    Only the horizontal axis of the plane moves (x for xz, y for yz); integer shifts
    are exact and cells that fall off the sender grid read zero.
    """
    plane = as_tensor(plane)
    d = shift[0] if axis == "xz" else shift[1]
    if d == 0.0:
        return plane
    H, W, F = plane.shape
    r, c = np.meshgrid(np.arange(H, dtype=np.float64), np.arange(W, dtype=np.float64), indexing="ij")
    coords = np.stack([r.ravel() - d, c.ravel()], axis=1)
    # keep integer shifts exact past the border: anything outside the sender grid is zero
    out = bilinear_sample2d(plane, coords)
    outside = (coords[:, 0] < 0) | (coords[:, 0] > H - 1)
    if outside.any():
        out = mul(out, (~outside).astype(np.float64)[:, None])
    return reshape(out, (H, W, F))


def _check_dims(planes: PlaneSet, spec: GridSpec) -> None:
    for axis, t in planes.ego().items():
        if tuple(t.shape[:2]) != plane_shape(spec.dims, axis):
            raise ValueError(f"{axis} plane dims {t.shape[:2]} do not match grid {spec.dims}")
    for r in planes.remote:
        for axis, t in (("xz", r.xz), ("yz", r.yz)):
            if tuple(t.shape[:2]) != plane_shape(spec.dims, axis):
                raise ValueError(f"sender {r.sender} {axis} plane dims {t.shape[:2]} do not match grid {spec.dims}")


def _mean(ts):
    acc = ts[0]
    for t in ts[1:]:
        acc = add(acc, t)
    return acc if len(ts) == 1 else mul(acc, 1.0 / len(ts))


def reconstruct_seg_volume(planes: PlaneSet, spec: GridSpec, eq4_strict: bool = False) -> Tensor:
    """``V[x,y,z] = xy[x,y] + mean_s xz_s[x,z] + mean_s yz_s[y,z]`` -> (X, Y, Z, F).

    Sources are the ego plus every sender (remote planes aligned by their shift).
    ``eq4_strict`` uses senders only, falling back to the ego when there are none.
    """
    _check_dims(planes, spec)
    X, Y, Z = spec.dims
    F = planes.features
    xz = [align_plane(r.xz, "xz", r.shift) for r in planes.remote]
    yz = [align_plane(r.yz, "yz", r.shift) for r in planes.remote]
    if not (eq4_strict and planes.remote):
        xz.insert(0, planes.xz)
        yz.insert(0, planes.yz)
    vol = add(reshape(planes.xy, (X, Y, 1, F)), reshape(_mean(xz), (X, 1, Z, F)))
    return add(vol, reshape(_mean(yz), (1, Y, Z, F)))


def plane_self_attention(planes: PlaneSet, layers) -> PlaneSet:
    """Joint update of ego and received planes (one round per layer)."""
    for layer in layers:
        planes = layer(planes)
    return planes


# -- prediction ------------------------------------------------------------------

@dataclass
class SemanticOccupancyPrediction:
    logits: Tensor  # (X, Y, Z, 13); channel 0 = empty
    spec: GridSpec

    @property
    def probabilities(self) -> np.ndarray:
        z = self.logits.data - self.logits.data.max(axis=-1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=-1, keepdims=True)

    @property
    def labels(self) -> np.ndarray:
        # np.argmax returns the first maximum: ties go to the lowest class id
        return np.argmax(self.logits.data, axis=-1).astype(np.uint8)

    @property
    def grid(self) -> SemanticVoxelGrid:
        return SemanticVoxelGrid(self.spec, self.labels)

    def confidence(self) -> np.ndarray:
        return np.take_along_axis(self.probabilities, self.labels[..., None].astype(np.int64), axis=-1)[..., 0]

    def to_bytes(self) -> bytes:
        return self.logits.data.astype("<f8").tobytes()


def export_prediction_json(pred: SemanticOccupancyPrediction, path, **meta) -> None:
    with open(path, "w") as f:
        json.dump(grid_to_dict(pred.grid, **meta), f, sort_keys=True)


def export_prediction_csv(pred: SemanticOccupancyPrediction, path) -> int:
    """Occupied voxels as ``x,y,z,class,confidence`` rows; returns the row count."""
    labels, conf = pred.labels, pred.confidence()
    idx = np.argwhere(labels > 0)
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["x", "y", "z", "class", "confidence"])
        for x, y, z in idx:
            w.writerow([int(x), int(y), int(z), int(labels[x, y, z]), f"{conf[x, y, z]:.6f}"])
    return len(idx)


class TaskFeatureFusion(Module):
    """concat(F_occ, F_seg) -> depthwise-conv blocks -> pointwise to class logits."""

    def __init__(self, rng, f_occ: int, f_seg: int, hidden: int = 16, blocks: int = 2, k: int = 3):
        widths = [f_occ + f_seg] + [hidden] * blocks
        self.blocks = [ConvBlock3d(rng, a, b, k) for a, b in zip(widths[:-1], widths[1:])]
        self.weight = Parameter(xavier_uniform(rng, (widths[-1], NUM_CLASSES)))
        self.bias = Parameter(np.zeros(NUM_CLASSES))

    def __call__(self, f_occ, f_seg) -> Tensor:
        if tuple(f_occ.shape[:3]) != tuple(f_seg.shape[:3]):
            raise ValueError(f"grid mismatch: occupancy {f_occ.shape[:3]} vs segmentation {f_seg.shape[:3]}")
        x = concat([f_occ, f_seg], axis=-1)
        for blk in self.blocks:
            x = blk(x)
        return linear(x, self.weight, self.bias)


# -- the full model --------------------------------------------------------------

@dataclass(frozen=True)
class ModelConfig:
    features: int = 8  # F of occupancy and plane features
    f_img: int = 8
    heads: int = 2
    points_per_ref: int = 4
    refs_per_query: int = 4
    sa_layers: int = 1
    psa_layers: int = 1
    occ_layers: int = 2
    tff_hidden: int = 16
    tff_blocks: int = 2
    cond_hidden: int = 16
    eq4_strict: bool = False

    @property
    def attn(self) -> DeformAttnConfig:
        return DeformAttnConfig(self.heads, self.points_per_ref, self.refs_per_query, self.features)

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class AgentInputs:
    agent_id: int
    pose: Pose  # world pose as reported (possibly GPS-perturbed)
    depth_embedding: Tensor  # (X, Y, Z, 1)
    observations: list  # per-camera (h, w, 14)
    cameras: list
    reported_pose: Pose | None = None  # pose put on the wire; defaults to ``pose``

    @property
    def broadcast_pose(self) -> Pose:
        return self.pose if self.reported_pose is None else self.reported_pose


@dataclass
class LocalState:
    """Per-agent results before any message exchange."""

    agent_id: int
    pose: Pose
    broadcast_pose: Pose
    f_occ: Tensor
    p_occ: Tensor
    planes: PlaneSet


@dataclass
class Received:
    """A sender's planes as seen by the receiver, densified but not yet conditioned."""

    sender: int
    pose: Pose
    xz: Tensor
    yz: Tensor


@dataclass
class StepOutput:
    prediction: SemanticOccupancyPrediction
    local: LocalState
    seg_volume: Tensor
    gates: dict = field(default_factory=dict)


class CoHFF(Module):
    def __init__(self, rng, spec: GridSpec, cfg: ModelConfig = ModelConfig()):
        self.spec = spec
        self.cfg = cfg
        F = cfg.features
        self.occ_encoder = OccupancyEncoder(rng, F, cfg.occ_layers)
        self.occ_head = OccupancyHead(rng, F)
        self.seg = SegmentationNet(rng, spec, cfg.attn, cfg.f_img, cfg.sa_layers)
        self.mask = PlaneMask(spec.dims)
        extent = max(spec.extent)
        self.condition = PoseAwareCondition(rng, F, cfg.cond_hidden, pose_scale=extent)
        self.psa = [PlaneSelfAttention(rng, cfg.attn) for _ in range(cfg.psa_layers)]
        self.tff = TaskFeatureFusion(rng, F, F, cfg.tff_hidden, cfg.tff_blocks)
        # auxiliary per-plane classifier used only by segmentation pre-training
        self.plane_head = Linear(rng, F, NUM_CLASSES)
        self.assign_names()

    # Algorithm steps, split at the message exchange ----------------------------

    def local(self, inp: AgentInputs) -> LocalState:
        f_occ = self.occ_encoder(inp.depth_embedding)
        p_occ = self.occ_head(f_occ)
        planes = self.seg(inp.observations, inp.cameras)
        return LocalState(inp.agent_id, inp.pose, inp.broadcast_pose, f_occ, p_occ, planes)

    def message(self, st: LocalState, rate: float) -> V2XMessage:
        """Mask, sparsify and narrow the agent's own xz/yz planes for broadcast."""
        xz = apply_mask_and_sparsify(st.planes.xz, self.mask.xz, rate, "xz")
        yz = apply_mask_and_sparsify(st.planes.yz, self.mask.yz, rate, "yz")
        return V2XMessage(st.agent_id, st.broadcast_pose, xz, yz)

    def differentiable_message(self, st: LocalState, rate: float) -> Received:
        """Training-time stand-in for message(): same kept cells, gradients flow to masks and planes."""
        return Received(st.agent_id, st.broadcast_pose, gated_plane(st.planes.xz, self.mask.xz, rate),
                        gated_plane(st.planes.yz, self.mask.yz, rate))

    def fuse(self, st: LocalState, received: list[Received]) -> StepOutput:
        planes = PlaneSet(st.planes.xy, st.planes.xz, st.planes.yz)
        gates = {}
        for r in received:
            rel = relative_pose(st.pose, r.pose)
            (xz, yz), g = self.condition([r.xz, r.yz], rel)
            gates[r.sender] = g
            planes.remote.append(RemotePlanes(r.sender, xz, yz, reference_shift(rel, self.spec.voxel_size)))
        fused = plane_self_attention(planes, self.psa)
        vol = reconstruct_seg_volume(fused, self.spec, self.cfg.eq4_strict)
        logits = self.tff(st.f_occ, vol)
        return StepOutput(SemanticOccupancyPrediction(logits, self.spec), st, vol, gates)


def received_from_message(msg: V2XMessage) -> Received:
    return Received(msg.sender, msg.pose, densify(msg.xz), densify(msg.yz))


def run_cohff_step(model: CoHFF, inp: AgentInputs, messages: list[V2XMessage],
                   local: LocalState | None = None) -> StepOutput:
    """One agent's full step given already-decoded messages from its neighbors."""
    with no_grad():
        st = model.local(inp) if local is None else local
        return model.fuse(st, [received_from_message(m) for m in messages])


# -- oracle-feature mode -----------------------------------------------------------

def oracle_planes(grid: SemanticVoxelGrid) -> dict[str, np.ndarray]:
    """Multi-hot OR projections of a label grid: xy (X,Y,13), xz (X,Z,13), yz (Y,Z,13)."""
    onehot = np.eye(NUM_CLASSES)[grid.labels.astype(np.int64)]
    onehot[..., 0] = 0.0
    return {"xy": onehot.max(axis=2), "xz": onehot.max(axis=1), "yz": onehot.max(axis=0)}


def oracle_fuse(ego: dict, remote: list[tuple[dict, tuple[float, float]]]) -> dict:
    """Max-merge aligned sender xz/yz planes into the ego's; the ego xy plane also takes
    every column the merged verticals jointly support."""
    xz, yz = ego["xz"].copy(), ego["yz"].copy()
    for planes, shift in remote:
        # bilinear resampling of one-hot planes; >= 0.5 keeps the nearest cell's content
        xz = np.maximum(xz, (align_plane(planes["xz"], "xz", shift).data >= 0.5).astype(np.float64))
        yz = np.maximum(yz, (align_plane(planes["yz"], "yz", shift).data >= 0.5).astype(np.float64))
    support = np.minimum(xz[:, None, :, :], yz[None, :, :, :]).max(axis=2)
    xy = ego["xy"] if not remote else np.maximum(ego["xy"], support)
    return {"xy": xy, "xz": xz, "yz": yz}


ORACLE_EMPTY_SCORE = 2.5  # a class needs all three projections (score 3) to beat empty
# ground classes are a thin layer under everything else: where projections put both a
# ground class and an object class in one voxel, the object wins (0.9 * 3 = 2.7 < 3)
ORACLE_GROUND_WEIGHT = 0.9


def _oracle_class_weights() -> np.ndarray:
    w = np.ones(NUM_CLASSES)
    w[[int(c) for c in GROUND_CLASSES]] = ORACLE_GROUND_WEIGHT
    return w


def oracle_predict(planes: dict, spec: GridSpec) -> SemanticOccupancyPrediction:
    vol = reconstruct_seg_volume(PlaneSet(Tensor(planes["xy"]), Tensor(planes["xz"]), Tensor(planes["yz"])), spec)
    logits = vol.data * _oracle_class_weights()
    logits[..., SemanticClass.EMPTY] = ORACLE_EMPTY_SCORE
    return SemanticOccupancyPrediction(Tensor(logits), spec)


def oracle_step(ego_grid: SemanticVoxelGrid, ego_pose: Pose, senders: list[tuple[SemanticVoxelGrid, Pose]],
                spec: GridSpec) -> SemanticOccupancyPrediction:
    """Prediction from GT-encoded planes of the ego and (optionally) its senders."""
    remote = [(oracle_planes(g), reference_shift(relative_pose(ego_pose, p), spec.voxel_size)) for g, p in senders]
    return oracle_predict(oracle_fuse(oracle_planes(ego_grid), remote), spec)

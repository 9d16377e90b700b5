"""Core scene types: semantic classes, poses, voxel grids and scene primitives."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np


class SemanticClass(IntEnum):
    EMPTY = 0
    BUILDING = 1
    FENCE = 2
    TERRAIN = 3
    POLE = 4
    ROAD = 5
    SIDEWALK = 6
    VEGETATION = 7
    VEHICLES = 8
    WALL = 9
    GUARDRAIL = 10
    TRAFFIC_SIGNS = 11
    BRIDGE = 12


NUM_CLASSES = len(SemanticClass)
CLASS_NAMES = {
    SemanticClass.EMPTY: "Empty",
    SemanticClass.BUILDING: "Building",
    SemanticClass.FENCE: "Fence",
    SemanticClass.TERRAIN: "Terrain",
    SemanticClass.POLE: "Pole",
    SemanticClass.ROAD: "Road",
    SemanticClass.SIDEWALK: "SideWalk",
    SemanticClass.VEGETATION: "Vegetation",
    SemanticClass.VEHICLES: "Vehicles",
    SemanticClass.WALL: "Wall",
    SemanticClass.GUARDRAIL: "GuardRail",
    SemanticClass.TRAFFIC_SIGNS: "TrafficSigns",
    SemanticClass.BRIDGE: "Bridge",
}
GROUND_CLASSES = (SemanticClass.TERRAIN, SemanticClass.ROAD, SemanticClass.SIDEWALK)


def wrap_angle(a: float) -> float:
    """Map an angle to (-pi, pi]; in-range angles are returned unchanged."""
    if -math.pi < a <= math.pi:
        return a
    w = (a + math.pi) % (2.0 * math.pi) - math.pi
    if w <= -math.pi:
        w += 2.0 * math.pi
    return w


@dataclass(frozen=True)
class Pose:
    """Planar pose with height: position in meters, heading ``yaw`` in radians."""

    x: float = 0.0
    y: float = 0.0
    z: float = 0.0
    yaw: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "yaw", wrap_angle(float(self.yaw)))

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x, self.y, self.z, self.yaw)


@dataclass(frozen=True)
class GridSpec:
    origin: tuple[float, float, float] = (-20.0, -20.0, 0.0)
    dims: tuple[int, int, int] = (100, 100, 8)
    voxel_size: float = 0.4

    def __post_init__(self):
        if len(self.dims) != 3 or any(int(d) <= 0 for d in self.dims):
            raise ValueError(f"grid dims must be three positive integers, got {self.dims}")
        if not self.voxel_size > 0:
            raise ValueError(f"voxel_size must be positive, got {self.voxel_size}")
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        object.__setattr__(self, "origin", tuple(float(o) for o in self.origin))

    @property
    def extent(self) -> tuple[float, float, float]:
        return tuple(d * self.voxel_size for d in self.dims)

    def cell_index(self, points: np.ndarray) -> np.ndarray:
        """Integer cell indices ``floor((p - origin) / voxel_size)`` for (N, 3) points."""
        p = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        return np.floor((p - np.asarray(self.origin)) / self.voxel_size).astype(np.int64)

    def in_bounds(self, idx: np.ndarray) -> np.ndarray:
        idx = np.asarray(idx)
        return np.all((idx >= 0) & (idx < np.asarray(self.dims)), axis=-1)

    def cell_centers(self, idx: np.ndarray) -> np.ndarray:
        """Metric centers of (possibly fractional) cell indices."""
        return np.asarray(self.origin) + (np.asarray(idx, dtype=np.float64) + 0.5) * self.voxel_size

    def to_dict(self) -> dict:
        return {"origin": list(self.origin), "dims": list(self.dims), "voxel_size": self.voxel_size}

    @classmethod
    def from_dict(cls, d: dict) -> "GridSpec":
        return cls(origin=tuple(d["origin"]), dims=tuple(d["dims"]), voxel_size=float(d["voxel_size"]))


@dataclass
class SemanticVoxelGrid:
    spec: GridSpec
    labels: np.ndarray
    instance_ids: np.ndarray = None

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.uint8)
        if self.labels.shape != self.spec.dims:
            raise ValueError(f"labels shape {self.labels.shape} != grid dims {self.spec.dims}")
        if self.labels.size and self.labels.max() >= NUM_CLASSES:
            raise ValueError("labels must be in 0..12")
        if self.instance_ids is None:
            self.instance_ids = np.zeros(self.spec.dims, dtype=np.int64)
        self.instance_ids = np.asarray(self.instance_ids, dtype=np.int64)
        bad = (self.instance_ids > 0) & (self.labels != SemanticClass.VEHICLES)
        if bad.any():
            raise ValueError("instance ids may only be attached to Vehicles voxels")

    @classmethod
    def empty(cls, spec: GridSpec) -> "SemanticVoxelGrid":
        return cls(spec, np.zeros(spec.dims, dtype=np.uint8))

    @property
    def occupied(self) -> np.ndarray:
        return self.labels != SemanticClass.EMPTY

    def occupied_set(self) -> set[tuple[int, int, int]]:
        return set(map(tuple, np.argwhere(self.occupied).tolist()))


@dataclass(frozen=True)
class SceneObject:
    """Axis-aligned box (rotated by ``yaw``) or vertical cylinder.

    ``extents`` are full sizes: (length, width, height) for boxes and
    (diameter, diameter, height) for cylinders. ``center`` is the geometric
    center of the solid.
    """

    cls: int
    shape: str
    center: tuple[float, float, float]
    extents: tuple[float, float, float]
    yaw: float = 0.0
    instance_id: int = 0
    owner: int = -1  # agent whose body this is; excluded from that agent's own sensors

    def __post_init__(self):
        if self.shape not in ("box", "cylinder"):
            raise ValueError(f"unknown shape {self.shape!r}")
        if any(e <= 0 for e in self.extents):
            raise ValueError(f"object extents must be positive, got {self.extents}")
        if self.instance_id > 0 and self.cls != SemanticClass.VEHICLES:
            raise ValueError("only vehicles carry instance ids")

    def to_dict(self) -> dict:
        return {
            "class": int(self.cls), "shape": self.shape, "center": list(self.center),
            "extents": list(self.extents), "yaw": self.yaw,
            "instance_id": self.instance_id, "owner": self.owner,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SceneObject":
        return cls(cls=int(d["class"]), shape=d["shape"], center=tuple(d["center"]),
                   extents=tuple(d["extents"]), yaw=float(d["yaw"]),
                   instance_id=int(d["instance_id"]), owner=int(d["owner"]))


@dataclass(frozen=True)
class GroundPatch:
    """Axis-aligned rectangle on z=0 painted with a ground class; later patches win."""

    cls: int
    xmin: float
    xmax: float
    ymin: float
    ymax: float

    def to_dict(self) -> dict:
        return {"class": int(self.cls), "bounds": [self.xmin, self.xmax, self.ymin, self.ymax]}

    @classmethod
    def from_dict(cls, d: dict) -> "GroundPatch":
        return cls(int(d["class"]), *map(float, d["bounds"]))


@dataclass(frozen=True)
class Mount:
    offset: Pose
    vfov: tuple[float, float]  # degrees (min, max) elevation
    hfov: float  # degrees, full horizontal width
    max_range: float

    def to_dict(self) -> dict:
        return {"offset": list(self.offset.as_tuple()), "vfov": list(self.vfov),
                "hfov": self.hfov, "max_range": self.max_range}

    @classmethod
    def from_dict(cls, d: dict) -> "Mount":
        return cls(Pose(*d["offset"]), tuple(d["vfov"]), float(d["hfov"]), float(d["max_range"]))


@dataclass(frozen=True)
class SensorRig:
    kind: str  # camera_quad | lidar_quad | lidar_18
    mounts: tuple[Mount, ...]
    image_size: tuple[int, int] | None = None  # (h, w) for camera rigs

    def __post_init__(self):
        if self.kind not in ("camera_quad", "lidar_quad", "lidar_18"):
            raise ValueError(f"unknown rig kind {self.kind!r}")

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "mounts": [m.to_dict() for m in self.mounts]}
        if self.image_size is not None:
            d["image_size"] = list(self.image_size)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SensorRig":
        size = tuple(d["image_size"]) if "image_size" in d else None
        return cls(d["kind"], tuple(Mount.from_dict(m) for m in d["mounts"]), size)


@dataclass(frozen=True)
class GroundTruthTier:
    tier: str  # ego | collaborative | complete
    grid: SemanticVoxelGrid


@dataclass(frozen=True)
class Agent:
    id: int
    pose: Pose
    rigs: dict = field(default_factory=dict)  # kind -> SensorRig

    def rig(self, kind: str) -> SensorRig:
        try:
            return self.rigs[kind]
        except KeyError:
            raise KeyError(f"agent {self.id} has no {kind} rig") from None

"""Semantic ray casting against procedural boxes, cylinders and a painted ground plane."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .pose import rotation, transform_pose
from .types import GroundPatch, Mount, Pose, SceneObject, SemanticClass

EPS = 1e-9
GROUND = -1  # object index reported for ground hits


@dataclass(frozen=True)
class Scene:
    objects: tuple[SceneObject, ...] = ()
    ground: tuple[GroundPatch, ...] = ()
    ground_class: int = SemanticClass.TERRAIN

    def ground_label(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        lab = np.full(np.shape(x), self.ground_class, dtype=np.int64)
        for g in self.ground:
            inside = (x >= g.xmin) & (x < g.xmax) & (y >= g.ymin) & (y < g.ymax)
            lab[inside] = g.cls
        return lab


@dataclass
class RayHits:
    t: np.ndarray  # distance along the unit direction; inf where no hit
    obj: np.ndarray  # object index, GROUND, or -2 for no hit
    cls: np.ndarray
    instance: np.ndarray
    points: np.ndarray

    @property
    def hit(self) -> np.ndarray:
        return np.isfinite(self.t)


def _slab(o, d, lo, hi):
    """Per-axis entry/exit parameters; rays parallel to the slab get +-inf or an empty interval."""
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = (lo - o) / d
        t2 = (hi - o) / d
    tn = np.minimum(t1, t2)
    tf = np.maximum(t1, t2)
    par = d == 0.0
    if np.any(par):
        inside = (o >= lo) & (o <= hi)
        tn = np.where(par, np.where(inside, -np.inf, np.inf), tn)
        tf = np.where(par, np.where(inside, np.inf, -np.inf), tf)
    return tn, tf


def intersect_box(obj: SceneObject, o: np.ndarray, d: np.ndarray) -> np.ndarray:
    c, s = math.cos(obj.yaw), math.sin(obj.yaw)
    cx, cy, cz = obj.center
    rx, ry = o[:, 0] - cx, o[:, 1] - cy
    ox, oy, oz = c * rx + s * ry, -s * rx + c * ry, o[:, 2] - cz
    dx, dy, dz = c * d[:, 0] + s * d[:, 1], -s * d[:, 0] + c * d[:, 1], d[:, 2]
    hx, hy, hz = (e / 2.0 for e in obj.extents)
    n1, f1 = _slab(ox, dx, -hx, hx)
    n2, f2 = _slab(oy, dy, -hy, hy)
    n3, f3 = _slab(oz, dz, -hz, hz)
    tn = np.maximum(np.maximum(n1, n2), n3)
    tf = np.minimum(np.minimum(f1, f2), f3)
    return np.where((tn <= tf) & (tn > EPS), tn, np.inf)


def intersect_cylinder(obj: SceneObject, o: np.ndarray, d: np.ndarray) -> np.ndarray:
    r = obj.extents[0] / 2.0
    hz = obj.extents[2] / 2.0
    ox, oy = o[:, 0] - obj.center[0], o[:, 1] - obj.center[1]
    a = d[:, 0] ** 2 + d[:, 1] ** 2
    b = 2.0 * (d[:, 0] * ox + d[:, 1] * oy)
    cc = ox ** 2 + oy ** 2 - r * r
    disc = b * b - 4.0 * a * cc
    with np.errstate(divide="ignore", invalid="ignore"):
        sq = np.sqrt(np.maximum(disc, 0.0))
        n1 = (-b - sq) / (2.0 * a)
        f1 = (-b + sq) / (2.0 * a)
    vertical = a == 0.0
    n1 = np.where(vertical, np.where(cc <= 0, -np.inf, np.inf), np.where(disc >= 0, n1, np.inf))
    f1 = np.where(vertical, np.where(cc <= 0, np.inf, -np.inf), np.where(disc >= 0, f1, -np.inf))
    n2, f2 = _slab(o[:, 2] - obj.center[2], d[:, 2], -hz, hz)
    tn = np.maximum(n1, n2)
    tf = np.minimum(f1, f2)
    return np.where((tn <= tf) & (tn > EPS), tn, np.inf)


def intersect_object(obj: SceneObject, o: np.ndarray, d: np.ndarray) -> np.ndarray:
    if obj.shape == "box":
        return intersect_box(obj, o, d)
    return intersect_cylinder(obj, o, d)


def intersect_ground(o: np.ndarray, d: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        t = -o[:, 2] / d[:, 2]
    return np.where((d[:, 2] < 0) & (o[:, 2] > 0) & (t > EPS), t, np.inf)


def ray_cast(scene: Scene, origins: np.ndarray, dirs: np.ndarray,
             max_range: float = np.inf, exclude_owner: int = -1) -> RayHits:
    """Nearest hit per ray. Ties keep the earlier object; ground is tested last."""
    d = np.asarray(dirs, dtype=np.float64).reshape(-1, 3)
    o = np.broadcast_to(np.asarray(origins, dtype=np.float64).reshape(-1, 3), d.shape)
    n = d.shape[0]
    best_t = np.full(n, np.inf)
    best = np.full(n, -2, dtype=np.int64)
    for k, obj in enumerate(scene.objects):
        if exclude_owner >= 0 and obj.owner == exclude_owner:
            continue
        t = intersect_object(obj, o, d)
        closer = t < best_t
        best_t[closer] = t[closer]
        best[closer] = k
    tg = intersect_ground(o, d)
    closer = tg < best_t
    best_t[closer] = tg[closer]
    best[closer] = GROUND
    miss = best_t > max_range
    best_t[miss] = np.inf
    best[miss] = -2

    cls = np.zeros(n, dtype=np.int64)
    inst = np.zeros(n, dtype=np.int64)
    obj_cls = np.array([ob.cls for ob in scene.objects] + [0], dtype=np.int64)
    obj_inst = np.array([ob.instance_id for ob in scene.objects] + [0], dtype=np.int64)
    on_obj = best >= 0
    cls[on_obj] = obj_cls[best[on_obj]]
    inst[on_obj] = obj_inst[best[on_obj]]
    pts = np.full((n, 3), np.nan)
    hit = np.isfinite(best_t)
    pts[hit] = o[hit] + best_t[hit, None] * d[hit]
    on_ground = best == GROUND
    if on_ground.any():
        pts[on_ground, 2] = 0.0
        cls[on_ground] = scene.ground_label(pts[on_ground, 0], pts[on_ground, 1])
    return RayHits(best_t, best, cls, inst, pts)


def lidar_directions(mount: Mount, resolution_deg: float) -> np.ndarray:
    """Unit directions (mount frame) on the azimuth/elevation lattice inside the FoV."""
    if not resolution_deg > 0:
        raise ValueError("angular resolution must be positive")
    tol = 1e-9
    half = mount.hfov / 2.0
    az = np.arange(-half, half + tol, resolution_deg)
    if mount.hfov >= 360.0:
        az = az[az < half - tol]
    lo, hi = mount.vfov
    el = np.arange(lo, hi + tol, resolution_deg)
    az = az[(az >= -half - tol) & (az <= half + tol)]
    el = el[(el >= lo - tol) & (el <= hi + tol)]
    A, E = np.meshgrid(np.radians(az), np.radians(el), indexing="ij")
    A, E = A.ravel(), E.ravel()
    return np.stack([np.cos(E) * np.cos(A), np.cos(E) * np.sin(A), np.sin(E)], axis=1)


def sensor_world_pose(agent_pose: Pose, mount: Mount) -> Pose:
    return transform_pose(mount.offset, agent_pose)


def cast_semantic_rays(scene: Scene, sensor_pose: Pose, mount: Mount, resolution_deg: float = 1.0,
                       exclude_owner: int = -1) -> np.ndarray:
    """Semantic point cloud ``(N, 5)`` of (x, y, z, class, instance) in world coordinates."""
    local = lidar_directions(mount, resolution_deg)
    dirs = local @ rotation(sensor_pose.yaw).T
    origin = np.array([sensor_pose.x, sensor_pose.y, sensor_pose.z])
    hits = ray_cast(scene, origin, dirs, mount.max_range, exclude_owner)
    h = hits.hit
    return np.column_stack([hits.points[h], hits.cls[h], hits.instance[h]])

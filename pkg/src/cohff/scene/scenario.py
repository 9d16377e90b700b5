"""Procedural multi-agent road scenes with scripted templates."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .raycast import Scene
from .rigs import DEFAULT_IMAGE_SIZE, standard_rigs
from .types import Agent, GridSpec, GroundPatch, Pose, SceneObject, SemanticClass as C

TEMPLATES = ("random", "occlusion", "junction", "highway")
CAR = (4.5, 1.8, 1.5)


@dataclass(frozen=True)
class ScenarioConfig:
    seed: int = 0
    template: str = "random"
    n_agents: int = 2
    extent: float = 40.0  # side length (m) of the populated area before scaling
    n_objects: int = 12
    scale: float = 1.0
    comm_range: float = 70.0
    image_size: tuple[int, int] = DEFAULT_IMAGE_SIZE

    def validate(self) -> None:
        if self.template not in TEMPLATES:
            raise ValueError(f"unknown template {self.template!r}; expected one of {TEMPLATES}")
        if self.n_agents < 1:
            raise ValueError(f"n_agents must be >= 1, got {self.n_agents}")
        if not self.extent > 0:
            raise ValueError(f"extent must be positive, got {self.extent}")
        if not self.scale > 0:
            raise ValueError(f"scale must be positive, got {self.scale}")
        if self.n_objects < 0:
            raise ValueError(f"n_objects must be >= 0, got {self.n_objects}")
        if len(self.image_size) != 2 or min(self.image_size) < 1:
            raise ValueError(f"image_size must be (h, w) with h, w >= 1, got {self.image_size}")


@dataclass(frozen=True)
class Scenario:
    config: ScenarioConfig
    scene: Scene
    agents: tuple[Agent, ...]
    edges: tuple[tuple[int, int], ...] = field(default=())

    def agent(self, agent_id: int) -> Agent:
        for a in self.agents:
            if a.id == agent_id:
                return a
        raise KeyError(f"no agent with id {agent_id}")

    def neighbors(self, agent_id: int) -> list[int]:
        out = [j for i, j in self.edges if i == agent_id] + [i for i, j in self.edges if j == agent_id]
        return sorted(set(out))


def _vehicle(x, y, yaw, inst, s, dims=CAR, owner=-1) -> SceneObject:
    l, w, h = (d * s for d in dims)
    return SceneObject(C.VEHICLES, "box", (x * s, y * s, h / 2), (l, w, h), yaw, inst, owner)


def _box(cls, x, y, l, w, h, s, z0=0.0, yaw=0.0) -> SceneObject:
    return SceneObject(cls, "box", (x * s, y * s, (z0 + h / 2) * s), (l * s, w * s, h * s), yaw)


def _cyl(cls, x, y, diam, h, s, z0=0.0) -> SceneObject:
    return SceneObject(cls, "cylinder", (x * s, y * s, (z0 + h / 2) * s), (diam * s, diam * s, h * s))


def _patch(cls, x0, x1, y0, y1, s) -> GroundPatch:
    return GroundPatch(cls, x0 * s, x1 * s, y0 * s, y1 * s)


def _street(s, half_road=4.0, walk=2.5, y_shift=0.0) -> list[GroundPatch]:
    big = 1e3
    return [
        _patch(C.SIDEWALK, -big, big, y_shift - half_road - walk, y_shift + half_road + walk, s),
        _patch(C.ROAD, -big, big, y_shift - half_road, y_shift + half_road, s),
    ]


def _random_clutter(rng, n, s, half, road_half, walk) -> list[SceneObject]:
    """Roadside furniture outside the carriageway."""
    kinds = [C.BUILDING, C.FENCE, C.POLE, C.VEGETATION, C.WALL, C.GUARDRAIL, C.TRAFFIC_SIGNS]
    objs = []
    for _ in range(n):
        cls = kinds[int(rng.integers(len(kinds)))]
        side = 1.0 if rng.random() < 0.5 else -1.0
        x = float(rng.uniform(-half, half))
        edge = road_half + walk
        if cls == C.BUILDING:
            y = side * (edge + float(rng.uniform(3.0, 8.0)))
            objs.append(_box(cls, x, y, float(rng.uniform(5, 10)), float(rng.uniform(4, 8)),
                             float(rng.uniform(4, 10)), s))
        elif cls in (C.FENCE, C.WALL):
            y = side * (edge + float(rng.uniform(0.5, 2.0)))
            objs.append(_box(cls, x, y, float(rng.uniform(3, 8)), 0.3, 1.8 if cls == C.FENCE else 2.5, s))
        elif cls == C.GUARDRAIL:
            y = side * (road_half + 0.3)
            objs.append(_box(cls, x, y, float(rng.uniform(4, 10)), 0.2, 0.8, s))
        elif cls == C.POLE:
            y = side * (road_half + float(rng.uniform(0.5, walk)))
            objs.append(_cyl(cls, x, y, 0.3, 5.0, s))
        elif cls == C.VEGETATION:
            y = side * (edge + float(rng.uniform(0.5, 4.0)))
            objs.append(_cyl(cls, x, y, float(rng.uniform(1.5, 3.0)), float(rng.uniform(2.0, 5.0)), s))
        elif cls == C.TRAFFIC_SIGNS:
            y = side * (road_half + float(rng.uniform(0.5, walk)))
            objs.append(_box(cls, x, y, 0.2, 1.0, 0.8, s, z0=2.2))
    return objs


def _layout_random(cfg: ScenarioConfig, rng) -> tuple[list, list, list[Pose]]:
    s, half = cfg.scale, cfg.extent / 2.0
    ground = _street(s)
    objs = _random_clutter(rng, cfg.n_objects, s, half, 4.0, 2.5)
    if rng.random() < 0.3:
        objs.append(_box(C.BRIDGE, float(rng.uniform(-half, half)), 0.0, 4.0, 30.0, 1.0, s, z0=2.4))
    poses = []
    lanes = (-2.0, 2.0)
    xs = np.sort(rng.uniform(-half * 0.6, half * 0.6, size=cfg.n_agents))
    for k in range(cfg.n_agents):
        poses.append(Pose(float(xs[k]) * s + 6.0 * k * s, lanes[k % 2] * s, 0.0, float(rng.normal(0, 0.05))))
    for _ in range(int(rng.integers(1, 4))):
        objs.append(("veh", float(rng.uniform(-half, half)), float(rng.choice(lanes)), 0.0))
    return ground, objs, poses


def _layout_occlusion(cfg: ScenarioConfig, rng) -> tuple[list, list, list[Pose]]:
    """Ego behind a truck; a car hidden behind the truck is in plain view of a CAV in the next lane."""
    s = cfg.scale
    ground = [_patch(C.SIDEWALK, -1e3, 1e3, -7.0, 14.0, s), _patch(C.ROAD, -1e3, 1e3, -4.0, 11.0, s)]
    objs = [
        _box(C.VEHICLES, 8.0, 0.0, 6.0, 2.4, 3.0, s),  # truck (tagged as a vehicle instance below)
        ("veh", 15.0, 0.0, 0.0),
        _box(C.BUILDING, 10.0, 20.0, 12.0, 6.0, 8.0, s),
        _box(C.WALL, 0.0, -8.0, 20.0, 0.3, 2.5, s),
        _cyl(C.POLE, 4.0, -5.0, 0.3, 5.0, s),
    ]
    objs += _random_clutter(rng, max(0, cfg.n_objects - 5), s, cfg.extent / 2.0, 4.0, 2.5)
    poses = [Pose(0.0, 0.0, 0.0, 0.0), Pose(14.8 * s, 8.0 * s, 0.0, 0.0)]
    for k in range(2, cfg.n_agents):
        poses.append(Pose((-10.0 - 8.0 * k) * s, 8.0 * s, 0.0, 0.0))
    return ground, objs, poses[: max(cfg.n_agents, 1)]


def _layout_junction(cfg: ScenarioConfig, rng) -> tuple[list, list, list[Pose]]:
    s = cfg.scale
    ground = _street(s) + [_patch(C.SIDEWALK, -6.5, 6.5, -1e3, 1e3, s), _patch(C.ROAD, -4.0, 4.0, -1e3, 1e3, s)]
    objs = []
    for qx in (-1, 1):
        for qy in (-1, 1):
            objs.append(_box(C.BUILDING, qx * 14.0, qy * 14.0, 12.0, 12.0, float(rng.uniform(5, 12)), s))
            objs.append(_cyl(C.POLE, qx * 7.0, qy * 7.0, 0.3, 5.0, s))
            objs.append(_box(C.TRAFFIC_SIGNS, qx * 7.0, qy * 7.0, 0.2, 1.0, 0.8, s, z0=2.5))
    objs += [("veh", -12.0, -2.0, 0.0), ("veh", 2.0, 12.0, math.pi / 2)]
    poses = [Pose(-18.0 * s, -2.0 * s, 0.0, 0.0), Pose(2.0 * s, -18.0 * s, 0.0, math.pi / 2),
             Pose(18.0 * s, 2.0 * s, 0.0, math.pi), Pose(-2.0 * s, 18.0 * s, 0.0, -math.pi / 2)]
    while len(poses) < cfg.n_agents:
        poses.append(Pose(float(rng.uniform(-30, -20)) * s, -2.0 * s, 0.0, 0.0))
    return ground, objs, poses[: cfg.n_agents]


def _layout_highway(cfg: ScenarioConfig, rng) -> tuple[list, list, list[Pose]]:
    s, half = cfg.scale, cfg.extent / 2.0
    ground = [_patch(C.ROAD, -1e3, 1e3, -8.0, 8.0, s)]
    objs = [_box(C.GUARDRAIL, 0.0, 8.3, 200.0, 0.2, 0.8, s), _box(C.GUARDRAIL, 0.0, -8.3, 200.0, 0.2, 0.8, s)]
    objs.append(_box(C.BRIDGE, float(rng.uniform(-half, half)), 0.0, 6.0, 24.0, 1.2, s, z0=2.6))
    objs += [_cyl(C.VEGETATION, float(rng.uniform(-half, half)), side * float(rng.uniform(10, 14)),
                  2.5, 4.0, s) for side in (-1, 1) for _ in range(3)]
    lanes = (-6.0, -2.0, 2.0, 6.0)
    for _ in range(int(rng.integers(3, 7))):
        objs.append(("veh", float(rng.uniform(-half, half)), float(rng.choice(lanes)), 0.0))
    poses = [Pose((-12.0 + 9.0 * k) * s, lanes[k % 4] * s, 0.0, 0.0) for k in range(cfg.n_agents)]
    return ground, objs, poses


_LAYOUTS = {
    "random": _layout_random,
    "occlusion": _layout_occlusion,
    "junction": _layout_junction,
    "highway": _layout_highway,
}


def _clear_of_agents(x, y, poses, s, gap=5.5) -> bool:
    return all(math.hypot(x - p.x, y - p.y) > gap * s for p in poses)


def generate_scenario(config: ScenarioConfig) -> Scenario:
    """Build a deterministic scenario from ``config.seed``."""
    config.validate()
    rng = np.random.default_rng(config.seed)
    ground, raw, poses = _LAYOUTS[config.template](config, rng)
    s = config.scale

    objects: list[SceneObject] = []
    inst = 1
    for o in raw:
        if isinstance(o, tuple):
            _, x, y, yaw = o
            if not _clear_of_agents(x * s, y * s, poses, s):
                continue
            objects.append(_vehicle(x, y, yaw, inst, s))
        elif o.cls == C.VEHICLES:
            objects.append(SceneObject(o.cls, o.shape, o.center, o.extents, o.yaw, inst, o.owner))
        else:
            objects.append(o)
            continue
        inst += 1
    agents = []
    rigs = standard_rigs(s, config.image_size)
    for k, p in enumerate(poses):
        l, w, h = (d * s for d in CAR)
        objects.append(SceneObject(C.VEHICLES, "box", (p.x, p.y, h / 2), (l, w, h), p.yaw, inst, owner=k))
        inst += 1
        agents.append(Agent(k, p, rigs))

    edges = []
    for i in range(len(agents)):
        for j in range(i + 1, len(agents)):
            pi, pj = agents[i].pose, agents[j].pose
            if math.hypot(pi.x - pj.x, pi.y - pj.y) <= config.comm_range * s:
                edges.append((i, j))
    scene = Scene(tuple(objects), tuple(ground))
    return Scenario(config, scene, tuple(agents), tuple(edges))


def agent_grid(scale: float = 1.0, spec: GridSpec | None = None) -> GridSpec:
    """Default per-agent grid, optionally scaled with the scene."""
    if spec is not None:
        return spec
    base = GridSpec()
    return GridSpec(tuple(o * scale for o in base.origin), base.dims, base.voxel_size * scale)

"""Scenario JSON container and ASCII point-cloud export."""

from __future__ import annotations

import json
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .raycast import Scene
from .scenario import Scenario, ScenarioConfig
from .types import Agent, GridSpec, GroundPatch, Pose, SceneObject, SemanticVoxelGrid, SensorRig

FORMAT_VERSION = 1


def scenario_to_dict(sc: Scenario) -> dict:
    cfg = asdict(sc.config)
    cfg["image_size"] = list(sc.config.image_size)
    return {
        "format_version": FORMAT_VERSION,
        "kind": "scenario",
        "config": cfg,
        "scene": {
            "ground_class": int(sc.scene.ground_class),
            "ground": [g.to_dict() for g in sc.scene.ground],
            "objects": [o.to_dict() for o in sc.scene.objects],
        },
        "agents": [
            {"id": a.id, "pose": list(a.pose.as_tuple()),
             "rigs": {k: r.to_dict() for k, r in sorted(a.rigs.items())}}
            for a in sc.agents
        ],
        "edges": [list(e) for e in sc.edges],
    }


def _check_version(d: dict, kind: str) -> None:
    v = d.get("format_version")
    if v != FORMAT_VERSION:
        raise ValueError(f"unsupported format_version {v!r} (expected {FORMAT_VERSION})")
    if d.get("kind") != kind:
        raise ValueError(f"expected a {kind!r} document, got {d.get('kind')!r}")


def scenario_from_dict(d: dict) -> Scenario:
    _check_version(d, "scenario")
    c = dict(d["config"])
    c["image_size"] = tuple(c["image_size"])
    scene = Scene(
        tuple(SceneObject.from_dict(o) for o in d["scene"]["objects"]),
        tuple(GroundPatch.from_dict(g) for g in d["scene"]["ground"]),
        int(d["scene"]["ground_class"]),
    )
    agents = tuple(
        Agent(int(a["id"]), Pose(*a["pose"]), {k: SensorRig.from_dict(r) for k, r in a["rigs"].items()})
        for a in d["agents"]
    )
    return Scenario(ScenarioConfig(**c), scene, agents, tuple(tuple(e) for e in d["edges"]))


def dumps_scenario(sc: Scenario) -> str:
    return json.dumps(scenario_to_dict(sc), sort_keys=True, indent=1)


def save_scenario(sc: Scenario, path) -> None:
    Path(path).write_text(dumps_scenario(sc))


def load_scenario(path) -> Scenario:
    return scenario_from_dict(json.loads(Path(path).read_text()))


def grid_to_dict(grid: SemanticVoxelGrid, **meta) -> dict:
    occ = np.argwhere(grid.labels > 0)
    return {
        "format_version": FORMAT_VERSION,
        "kind": "label_grid",
        "spec": grid.spec.to_dict(),
        "meta": meta,
        # sparse (x, y, z, label, instance) rows keep files small
        "voxels": [[int(x), int(y), int(z), int(grid.labels[x, y, z]), int(grid.instance_ids[x, y, z])]
                   for x, y, z in occ],
    }


def grid_from_dict(d: dict) -> SemanticVoxelGrid:
    _check_version(d, "label_grid")
    spec = GridSpec.from_dict(d["spec"])
    labels = np.zeros(spec.dims, dtype=np.uint8)
    inst = np.zeros(spec.dims, dtype=np.int64)
    for x, y, z, lab, i in d["voxels"]:
        labels[x, y, z] = lab
        inst[x, y, z] = i
    return SemanticVoxelGrid(spec, labels, inst)


def write_pcd_text(points: np.ndarray, path) -> None:
    """One ``x y z class instance`` row per point."""
    pts = np.asarray(points).reshape(-1, 5)
    with open(path, "w") as f:
        for x, y, z, c, i in pts:
            f.write(f"{x:.6f} {y:.6f} {z:.6f} {int(c)} {int(i)}\n")


def read_pcd_text(path) -> np.ndarray:
    rows = [line.split() for line in Path(path).read_text().splitlines() if line.strip()]
    return np.array(rows, dtype=np.float64).reshape(-1, 5)

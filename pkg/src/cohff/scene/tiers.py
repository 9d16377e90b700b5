"""Multi-tier semantic occupancy ground truth: ego FoV, collaborative union, complete replay."""

from __future__ import annotations

import numpy as np

from .pose import inverse_transform_points
from .raycast import cast_semantic_rays, sensor_world_pose
from .scenario import Scenario
from .types import GridSpec, GroundTruthTier, SemanticVoxelGrid
from .voxelize import voxelize_points

TIERS = ("ego", "collaborative", "complete")


def rig_points(scenario: Scenario, agent_id: int, kind: str, resolution_deg: float = 1.0) -> np.ndarray:
    """World-frame semantic points from one rig of one agent."""
    agent = scenario.agent(agent_id)
    chunks = []
    # the vehicle's own body is invisible to its own on-board sensors only
    owner = agent_id if kind in ("lidar_quad", "camera_quad") else -1
    for m in agent.rig(kind).mounts:
        chunks.append(cast_semantic_rays(scenario.scene, sensor_world_pose(agent.pose, m), m,
                                         resolution_deg, exclude_owner=owner))
    return np.concatenate(chunks, axis=0) if chunks else np.zeros((0, 5))


def to_agent_frame(points: np.ndarray, pose) -> np.ndarray:
    out = np.array(points, dtype=np.float64, copy=True)
    if len(out):
        out[:, :3] = inverse_transform_points(out[:, :3], pose)
    return out


def merge_nearest_observer(grids: list[SemanticVoxelGrid], observer_xyz: list[np.ndarray]) -> SemanticVoxelGrid:
    """Union of occupied cells; conflicting labels go to the nearest observer, then the lowest class id."""
    spec = grids[0].spec
    labels = np.stack([g.labels for g in grids]).astype(np.int64)  # (A, X, Y, Z)
    insts = np.stack([g.instance_ids for g in grids])
    idx = np.indices(spec.dims).reshape(3, -1).T
    centers = spec.cell_centers(idx).reshape(spec.dims + (3,))
    dist = np.stack([np.linalg.norm(centers - np.asarray(o), axis=-1) for o in observer_xyz])
    dist = np.where(labels > 0, dist, np.inf)
    dmin = dist.min(axis=0)
    cand = (labels > 0) & (dist == dmin)
    big = np.iinfo(np.int64).max
    lab = np.where(cand, labels, big).min(axis=0)
    occupied = np.isfinite(dmin)
    winner = np.argmax(cand & (labels == lab), axis=0)
    out_lab = np.where(occupied, lab, 0).astype(np.uint8)
    out_inst = np.take_along_axis(insts, winner[None], axis=0)[0]
    out_inst = np.where(occupied, out_inst, 0)
    return SemanticVoxelGrid(spec, out_lab, out_inst)


def build_gt_tiers(scenario: Scenario, spec: GridSpec, resolution_deg: float = 1.0,
                   complete_resolution_deg: float | None = None) -> dict:
    """Per-agent ``{"ego", "collaborative", "complete"}`` tiers, each in that agent's frame."""
    cres = resolution_deg if complete_resolution_deg is None else complete_resolution_deg
    quad = {a.id: rig_points(scenario, a.id, "lidar_quad", resolution_deg) for a in scenario.agents}
    out = {}
    for a in scenario.agents:
        per_observer, observers = [], []
        for b in scenario.agents:
            per_observer.append(voxelize_points(to_agent_frame(quad[b.id], a.pose), spec))
            observers.append(inverse_transform_points(np.array([[b.pose.x, b.pose.y, b.pose.z]]), a.pose)[0])
        ego = per_observer[[b.id for b in scenario.agents].index(a.id)]
        collab = merge_nearest_observer(per_observer, observers)

        full = voxelize_points(to_agent_frame(rig_points(scenario, a.id, "lidar_18", cres), a.pose), spec)
        # cells only the on-board sensors reached keep their collaborative label
        fill = collab.occupied & ~full.occupied
        labels = np.where(fill, collab.labels, full.labels)
        insts = np.where(fill, collab.instance_ids, full.instance_ids)
        complete = SemanticVoxelGrid(spec, labels, insts)
        out[a.id] = {
            "ego": GroundTruthTier("ego", ego),
            "collaborative": GroundTruthTier("collaborative", collab),
            "complete": GroundTruthTier("complete", complete),
        }
    return out

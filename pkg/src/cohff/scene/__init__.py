"""Synthetic road scenes, semantic ray casting, voxelization and ground-truth tiers."""

from .pose import inverse_pose, perturb_pose_gps, relative_pose, transform_points, transform_pose
from .raycast import Scene, cast_semantic_rays, ray_cast
from .scenario import Scenario, ScenarioConfig, agent_grid, generate_scenario
from .tiers import TIERS, build_gt_tiers
from .types import (
    NUM_CLASSES, Agent, GridSpec, GroundTruthTier, Pose, SceneObject, SemanticClass,
    SemanticVoxelGrid, SensorRig,
)
from .voxelize import voxelize_points

__all__ = [
    "NUM_CLASSES", "TIERS", "Agent", "GridSpec", "GroundTruthTier", "Pose", "Scenario",
    "ScenarioConfig", "Scene", "SceneObject", "SemanticClass", "SemanticVoxelGrid", "SensorRig",
    "agent_grid", "build_gt_tiers", "cast_semantic_rays", "generate_scenario", "inverse_pose",
    "perturb_pose_gps", "ray_cast", "relative_pose", "transform_points", "transform_pose",
    "voxelize_points",
]

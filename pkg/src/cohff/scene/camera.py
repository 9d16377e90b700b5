"""Pinhole cameras on the camera quad and per-pixel semantic/depth rendering."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .pose import inverse_transform_points, rotation
from .raycast import ray_cast, sensor_world_pose
from .types import NUM_CLASSES, Mount, Pose


@dataclass(frozen=True)
class Camera:
    """Square-pixel pinhole camera. Frame: +x optical axis, +y left, +z up.

    Pixel (row v, col u) has its center at continuous image coordinate (v, u).
    """

    mount: Mount
    height: int
    width: int

    @property
    def fx(self) -> float:
        return (self.width / 2.0) / math.tan(math.radians(self.mount.hfov / 2.0))

    @property
    def offset(self) -> Pose:
        return self.mount.offset

    def pixel_dirs(self) -> np.ndarray:
        """Unit ray directions (h, w, 3) in the camera frame."""
        v, u = np.meshgrid(np.arange(self.height), np.arange(self.width), indexing="ij")
        f = self.fx
        d = np.stack([np.ones(v.shape), -(u + 0.5 - self.width / 2.0) / f,
                      -(v + 0.5 - self.height / 2.0) / f], axis=-1)
        return d / np.linalg.norm(d, axis=-1, keepdims=True)

    def project(self, points_agent: np.ndarray):
        """Agent-frame points -> (row, col) image coordinates and a validity mask."""
        pc = inverse_transform_points(points_agent, self.offset)
        x = pc[:, 0]
        safe = np.where(x > 1e-6, x, 1.0)
        f = self.fx
        u = self.width / 2.0 - f * pc[:, 1] / safe - 0.5
        v = self.height / 2.0 - f * pc[:, 2] / safe - 0.5
        valid = (x > 1e-6) & (u >= -0.5) & (u < self.width - 0.5) & (v >= -0.5) & (v < self.height - 0.5)
        return np.stack([v, u], axis=1), valid

    def rays_agent(self) -> tuple[np.ndarray, np.ndarray]:
        """Ray origin (3,) and unit directions (h*w, 3) in the agent frame."""
        dirs = self.pixel_dirs().reshape(-1, 3) @ rotation(self.offset.yaw).T
        o = np.array([self.offset.x, self.offset.y, self.offset.z])
        return o, dirs


def agent_cameras(agent) -> list[Camera]:
    rig = agent.rig("camera_quad")
    h, w = rig.image_size
    return [Camera(m, h, w) for m in rig.mounts]


def render_camera(scenario, agent_id: int, cam_index: int):
    """Ray-cast one camera: per-pixel hit distance (inf on miss) and semantic class."""
    agent = scenario.agent(agent_id)
    cam = agent_cameras(agent)[cam_index]
    world = sensor_world_pose(agent.pose, cam.mount)
    dirs = cam.pixel_dirs().reshape(-1, 3) @ rotation(world.yaw).T
    hits = ray_cast(scenario.scene, np.array([world.x, world.y, world.z]), dirs,
                    cam.mount.max_range, exclude_owner=agent_id)
    shape = (cam.height, cam.width)
    return hits.t.reshape(shape), hits.cls.reshape(shape)


def observation(distance: np.ndarray, classes: np.ndarray, max_depth: float) -> np.ndarray:
    """Feature-level stand-in for RGB: class one-hot plus normalized distance, (h, w, 14)."""
    h, w = classes.shape
    obs = np.zeros((h, w, NUM_CLASSES + 1))
    hit = np.isfinite(distance)
    obs[..., :NUM_CLASSES][hit] = np.eye(NUM_CLASSES)[classes[hit]]
    obs[..., NUM_CLASSES] = np.where(hit, np.minimum(distance, max_depth) / max_depth, 1.0)
    return obs


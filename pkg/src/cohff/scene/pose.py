"""SE(2) x z pose algebra and GPS perturbation."""

from __future__ import annotations

import math

import numpy as np

from .types import Pose


def transform_pose(child: Pose, parent: Pose) -> Pose:
    """Express ``child`` (given in ``parent``'s frame) in the frame ``parent`` lives in."""
    c, s = math.cos(parent.yaw), math.sin(parent.yaw)
    return Pose(
        parent.x + c * child.x - s * child.y,
        parent.y + s * child.x + c * child.y,
        parent.z + child.z,
        parent.yaw + child.yaw,
    )


def inverse_pose(p: Pose) -> Pose:
    c, s = math.cos(p.yaw), math.sin(p.yaw)
    return Pose(-(c * p.x + s * p.y), -(-s * p.x + c * p.y), -p.z, -p.yaw)


def relative_pose(a: Pose, b: Pose) -> Pose:
    """Pose of ``b`` expressed in ``a``'s frame, i.e. the map from b-frame to a-frame."""
    return transform_pose(b, inverse_pose(a))


def rotation(yaw: float) -> np.ndarray:
    c, s = math.cos(yaw), math.sin(yaw)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def transform_points(points: np.ndarray, pose: Pose) -> np.ndarray:
    """Map (N, 3) points from ``pose``'s local frame into its parent frame."""
    p = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    return p @ rotation(pose.yaw).T + np.array([pose.x, pose.y, pose.z])


def inverse_transform_points(points: np.ndarray, pose: Pose) -> np.ndarray:
    p = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    return (p - np.array([pose.x, pose.y, pose.z])) @ rotation(pose.yaw)


def perturb_pose_gps(p: Pose, sigma: float, seed) -> Pose:
    """Add i.i.d. N(0, sigma^2) noise to x and y; z and yaw stay exact."""
    if sigma < 0:
        raise ValueError(f"GPS noise sigma must be >= 0, got {sigma}")
    if sigma == 0:
        return p
    dx, dy = np.random.default_rng(seed).normal(0.0, sigma, size=2)
    return Pose(p.x + float(dx), p.y + float(dy), p.z, p.yaw)

"""Pose-aware conditioning of received planes and the matching reference translation."""

from __future__ import annotations

import numpy as np

from ..scene.types import Pose
from ..tensor import Linear, Module, Tensor, mul, relu, reshape, sigmoid


class PoseAwareCondition(Module):
    """``g = sigmoid(MLP(x, y, z, yaw))`` scales received planes channel-wise.

    The last layer is zero-initialized so training starts from g = 0.5.
    Positions are divided by ``pose_scale`` before entering the MLP.
    """

    def __init__(self, rng, features: int, hidden: int = 16, pose_scale: float = 1.0):
        self.fc1 = Linear(rng, 4, hidden)
        self.fc2 = Linear(rng, hidden, features, zero=True)
        self.pose_scale = pose_scale

    def pose_input(self, rel: Pose) -> np.ndarray:
        s = self.pose_scale
        return np.array([[rel.x / s, rel.y / s, rel.z / s, rel.yaw]])

    def gate(self, rel: Pose) -> Tensor:
        return reshape(sigmoid(self.fc2(relu(self.fc1(self.pose_input(rel))))), (-1,))

    def __call__(self, planes, rel: Pose):
        """Scale each plane in ``planes`` by the gate; returns (scaled planes, gate)."""
        g = self.gate(rel)
        return [mul(p, g) for p in planes], g


def reference_shift(rel: Pose, voxel_size: float) -> tuple[float, float]:
    """(dx, dy) in cells with sender cell + shift = ego cell; yaw is not warped."""
    return rel.x / voxel_size, rel.y / voxel_size

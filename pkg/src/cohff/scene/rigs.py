"""Sensor rig layouts: the camera quad, its aligned semantic LiDARs, and the 18-LiDAR replay rig."""

from __future__ import annotations

import math

from .types import Mount, Pose, SensorRig

DEFAULT_IMAGE_SIZE = (8, 16)
CAMERA_HFOV = 90.0


def camera_vfov(image_size: tuple[int, int], hfov: float = CAMERA_HFOV) -> float:
    """Full vertical FoV (degrees) of a square-pixel pinhole camera."""
    h, w = image_size
    return 2.0 * math.degrees(math.atan(math.tan(math.radians(hfov / 2.0)) * h / w))


def _quad_offsets(scale: float) -> list[Pose]:
    z = 1.6 * scale
    return [
        Pose(2.0 * scale, 0.0, z, 0.0),
        Pose(0.0, 0.9 * scale, z, math.pi / 2),
        Pose(0.0, -0.9 * scale, z, -math.pi / 2),
        Pose(-2.0 * scale, 0.0, z, math.pi),
    ]


def camera_quad(scale: float = 1.0, image_size=DEFAULT_IMAGE_SIZE, max_range: float | None = None) -> SensorRig:
    v = camera_vfov(image_size) / 2.0
    rng = 40.0 * scale if max_range is None else max_range
    mounts = tuple(Mount(off, (-v, v), CAMERA_HFOV, rng) for off in _quad_offsets(scale))
    return SensorRig("camera_quad", mounts, tuple(image_size))


def lidar_quad(scale: float = 1.0, image_size=DEFAULT_IMAGE_SIZE, max_range: float | None = None) -> SensorRig:
    """Semantic LiDARs co-located with the cameras, clipped to the camera FoV."""
    cam = camera_quad(scale, image_size, max_range)
    return SensorRig("lidar_quad", cam.mounts)


def lidar_18(scale: float = 1.0, spacing: float = 30.0, height: float = 5.0,
             max_range: float | None = None) -> SensorRig:
    """9 positions on a 3x3 grid centered on the vehicle, two LiDARs per position."""
    rng = 60.0 * scale if max_range is None else max_range
    mounts = []
    for i in (-1, 0, 1):
        for j in (-1, 0, 1):
            off = Pose(i * spacing * scale, j * spacing * scale, height * scale, 0.0)
            mounts.append(Mount(off, (-90.0, -20.0), 360.0, rng))
            mounts.append(Mount(off, (-20.0, 0.0), 360.0, rng))
    return SensorRig("lidar_18", tuple(mounts))


def standard_rigs(scale: float = 1.0, image_size=DEFAULT_IMAGE_SIZE) -> dict:
    return {
        "camera_quad": camera_quad(scale, image_size),
        "lidar_quad": lidar_quad(scale, image_size),
        "lidar_18": lidar_18(scale),
    }

"""Occupancy prediction task net: depth oracle, voxel embedding, 3D encoder and binary head."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scene.camera import Camera, agent_cameras, render_camera
from .scene.types import GridSpec
from .tensor import Module, Parameter, Tensor, add, depthwise_conv3d, linear, relu, sigmoid, xavier_uniform


@dataclass(frozen=True)
class DepthBinning:
    """Uniform bins over [0, max_depth); the last bin index means out of range."""

    n_bins: int = 50
    max_depth: float = 40.0

    @property
    def width(self) -> float:
        return self.max_depth / self.n_bins

    @property
    def out_of_range(self) -> int:
        return self.n_bins

    def to_bins(self, distance: np.ndarray) -> np.ndarray:
        d = np.asarray(distance, dtype=np.float64)
        ok = np.isfinite(d) & (d < self.max_depth)
        b = np.floor(np.maximum(np.where(ok, d, 0.0), 0.0) / self.width).astype(np.int64)
        return np.where(ok, np.minimum(b, self.n_bins - 1), self.out_of_range)

    def centers(self, bins: np.ndarray) -> np.ndarray:
        return (np.asarray(bins, dtype=np.float64) + 0.5) * self.width


@dataclass
class DepthMap:
    bins: np.ndarray  # (h, w) int in 0..n_bins
    camera_id: int

    @property
    def dims(self) -> tuple[int, int]:
        return self.bins.shape


def depth_oracle(scenario, agent_id: int, camera_id: int, binning: DepthBinning = DepthBinning(),
                 noise_sigma: float = 0.0, seed=None) -> DepthMap:
    """Ray-cast depth per pixel, optionally with Gaussian range noise, discretized to bins."""
    dist, _ = render_camera(scenario, agent_id, camera_id)
    if noise_sigma > 0:
        noise = np.random.default_rng(seed).normal(0.0, noise_sigma, dist.shape)
        dist = np.where(np.isfinite(dist), dist + noise, dist)
    return DepthMap(binning.to_bins(dist), camera_id)


def write_pgm16(depth: DepthMap, path) -> None:
    """Binary 16-bit PGM of the bin indices (big-endian per the PGM format)."""
    h, w = depth.dims
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n65535\n".encode("ascii"))
        f.write(depth.bins.astype(">u2").tobytes())


def read_pgm16(path) -> np.ndarray:
    raw = open(path, "rb").read()
    parts = raw.split(b"\n", 3)
    w, h = map(int, parts[1].split())
    return np.frombuffer(parts[3], dtype=">u2").reshape(h, w).astype(np.int64)


def embed_depth_to_voxels(depth_maps: list[DepthMap], cameras: list[Camera], spec: GridSpec,
                          binning: DepthBinning = DepthBinning()) -> Tensor:
    """Back-project every in-range pixel to its bin center along the pixel ray and count hits
    per voxel; counts are normalized by their maximum. Result is (X, Y, Z, 1)."""
    counts = np.zeros(spec.dims)
    for dm, cam in zip(depth_maps, cameras):
        b = dm.bins.reshape(-1)
        keep = b < binning.out_of_range
        if not keep.any():
            continue
        o, dirs = cam.rays_agent()
        pts = o + dirs[keep] * binning.centers(b[keep])[:, None]
        idx = spec.cell_index(pts)
        idx = idx[spec.in_bounds(idx)]
        np.add.at(counts, tuple(idx.T), 1.0)
    m = counts.max()
    if m > 0:
        counts /= m
    return Tensor(counts[..., None])


def agent_depth_embedding(scenario, agent_id: int, spec: GridSpec, binning: DepthBinning = DepthBinning(),
                          noise_sigma: float = 0.0, seed=None) -> Tensor:
    cams = agent_cameras(scenario.agent(agent_id))
    maps = [depth_oracle(scenario, agent_id, k, binning, noise_sigma,
                         None if seed is None else (seed, agent_id, k)) for k in range(len(cams))]
    return embed_depth_to_voxels(maps, cams, spec, binning)


class ConvBlock3d(Module):
    """Depthwise 3D conv -> pointwise mix -> bias -> ReLU."""

    def __init__(self, rng, f_in: int, f_out: int, k: int = 3):
        if k % 2 == 0:
            raise ValueError(f"kernel size must be odd, got {k}")
        self.kernels = Parameter(xavier_uniform(rng, (k, k, k, f_in), fan_in=k ** 3, fan_out=k ** 3))
        self.pointwise = Parameter(xavier_uniform(rng, (f_in, f_out)))
        self.bias = Parameter(np.zeros(f_out))

    def __call__(self, x, act: bool = True):
        y = add(depthwise_conv3d(x, self.kernels, self.pointwise), self.bias)
        return relu(y) if act else y


class OccupancyEncoder(Module):
    """Stack of depthwise-conv blocks lifting the 1-channel embedding to F channels."""

    def __init__(self, rng, features: int, layers: int = 2, k: int = 3):
        widths = [1] + [features] * layers
        self.blocks = [ConvBlock3d(rng, a, b, k) for a, b in zip(widths[:-1], widths[1:])]

    def __call__(self, embedded):
        x = embedded
        for blk in self.blocks:
            x = blk(x)
        return x


class OccupancyHead(Module):
    def __init__(self, rng, features: int):
        self.weight = Parameter(xavier_uniform(rng, (features, 1)))
        self.bias = Parameter(np.zeros(1))

    def __call__(self, f_occ) -> Tensor:
        p = sigmoid(linear(f_occ, self.weight, self.bias))
        return p.reshape(f_occ.shape[:-1])

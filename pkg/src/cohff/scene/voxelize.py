"""Majority-vote voxelization of semantic point clouds."""

from __future__ import annotations

import logging

import numpy as np

from .types import GridSpec, SemanticClass, SemanticVoxelGrid

log = logging.getLogger(__name__)


def _first_per_group(group: np.ndarray, *keys: np.ndarray) -> np.ndarray:
    """Index of the first row of each ``group`` after lexicographic sort by ``keys``."""
    order = np.lexsort(tuple(reversed(keys)) + (group,))
    g = group[order]
    first = np.ones(len(g), dtype=bool)
    first[1:] = g[1:] != g[:-1]
    return order[first]


def voxelize_points(points: np.ndarray, spec: GridSpec, return_dropped: bool = False):
    """Label each cell with the majority class of its points (ties -> lowest id).

    ``points`` is (N, 5): x, y, z, class, instance, already in the grid's frame.
    Points outside the grid are skipped. The instance id of a vehicle cell is the
    most common instance among the points of the winning class.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 5)
    labels = np.zeros(spec.dims, dtype=np.uint8)
    inst_grid = np.zeros(spec.dims, dtype=np.int64)
    idx = spec.cell_index(pts[:, :3])
    ok = spec.in_bounds(idx) & (pts[:, 3] > 0)
    dropped = int(np.count_nonzero(~spec.in_bounds(idx)))
    if dropped:
        log.debug("voxelize: %d points outside grid skipped", dropped)
    idx, cls, inst = idx[ok], pts[ok, 3].astype(np.int64), pts[ok, 4].astype(np.int64)
    if len(cls):
        cell = np.ravel_multi_index(idx.T, spec.dims)
        pair, counts = np.unique(np.stack([cell, cls], axis=1), axis=0, return_counts=True)
        win = _first_per_group(pair[:, 0], -counts, pair[:, 1])
        labels.flat[pair[win, 0]] = pair[win, 1]

        veh = (cls == SemanticClass.VEHICLES) & (inst > 0)
        veh &= labels.flat[cell] == SemanticClass.VEHICLES
        if veh.any():
            ip, icount = np.unique(np.stack([cell[veh], inst[veh]], axis=1), axis=0, return_counts=True)
            iwin = _first_per_group(ip[:, 0], -icount, ip[:, 1])
            inst_grid.flat[ip[iwin, 0]] = ip[iwin, 1]
    grid = SemanticVoxelGrid(spec, labels, inst_grid)
    if return_dropped:
        return grid, dropped
    return grid

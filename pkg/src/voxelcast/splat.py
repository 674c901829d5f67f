"""Splat image synthesis: colored voxel centers rasterized as depth-tested discs."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .scene import Camera, VoxelGrid, project_points


@dataclass(frozen=True, eq=False)
class SplatCanvas:
    color: np.ndarray     # (H, W, 3), black where uncovered
    depth: np.ndarray     # (H, W), +inf where uncovered
    coverage: np.ndarray  # (H, W) bool
    index: np.ndarray     # (H, W) winning voxel linear index, -1 where uncovered


def splat_radius(camera: Camera, voxel_size: float, depth: np.ndarray) -> np.ndarray:
    extent_px = camera.focal_px * voxel_size / depth
    return np.maximum(1, np.ceil(0.5 * extent_px)).astype(np.int64)


@njit(cache=True)
def _raster(order, u, v, depth, radius, lin, colors, height, width, out_c, out_d, out_i):
    for n in order:
        r = radius[n]
        cu = u[n]
        cv = v[n]
        z = depth[n]
        idx = lin[n]
        c0 = max(0, int(math.floor(cu - r)))
        c1 = min(width - 1, int(math.floor(cu + r)))
        r0 = max(0, int(math.floor(cv - r)))
        r1 = min(height - 1, int(math.floor(cv + r)))
        r2 = r * r
        for row in range(r0, r1 + 1):
            dy = row + 0.5 - cv
            for col in range(c0, c1 + 1):
                dx = col + 0.5 - cu
                if dx * dx + dy * dy > r2:
                    continue
                best = out_d[row, col]
                if z < best or (z == best and idx < out_i[row, col]):
                    out_d[row, col] = z
                    out_i[row, col] = idx
                    out_c[row, col, 0] = colors[n, 0]
                    out_c[row, col, 1] = colors[n, 1]
                    out_c[row, col, 2] = colors[n, 2]


def splat(grid: VoxelGrid, camera: Camera, radius_scale: float = 1.0, order=None) -> SplatCanvas:
    """Project occupied voxel centers into ``camera`` with nearest-depth wins.

    Each voxel covers the pixels whose centers lie within its disc; equal
    depths resolve to the smaller voxel linear index, so the result does not
    depend on iteration ``order`` (exposed for testing).
    """
    occ = grid.occupancy.reshape(-1)
    lin = np.flatnonzero(occ)
    centers = grid.centers().reshape(-1, 3)[lin]
    u, v, depth = project_points(camera, centers)
    front = depth > 0
    lin, u, v, depth = lin[front], u[front], v[front], depth[front]
    colors = grid.colors.reshape(-1, 3)[lin].astype(np.float64)
    radius = splat_radius(camera, grid.voxel_size, depth)
    if radius_scale != 1.0:
        radius = np.maximum(1, np.ceil(radius * radius_scale)).astype(np.int64)
    h, w = camera.height, camera.width
    out_c = np.zeros((h, w, 3))
    out_d = np.full((h, w), np.inf)
    out_i = np.full((h, w), -1, dtype=np.int64)
    if order is None:
        order = np.arange(lin.size)
    _raster(np.asarray(order, dtype=np.int64), u, v, depth, radius.astype(np.float64), lin,
            colors, h, w, out_c, out_d, out_i)
    return SplatCanvas(out_c.astype(np.float32), out_d, out_i >= 0, out_i)

"""Incremental voxel walking (3D DDA) shared by capture and the oracle renderer.

Rays live in grid units: a point ``p`` maps to ``(p - origin) / voxel_size``
so cell ``(i, j, k)`` is the unit cube ``[i, i+1) x [j, j+1) x [k, k+1)``.
A cell counts as crossed only when the ray spends a positive parameter
interval inside it; grazing a face, edge or corner is not a hit. Every cell
interval comes from the same closed-form slab expression (``cell_interval``),
never from accumulated increments, so exact-arithmetic oracles agree bit for
bit.
"""

from __future__ import annotations

import numpy as np
from numba import njit

INF = np.inf


@njit(cache=True)
def _axis_interval(o, d, c):
    if d > 0.0:
        return (c - o) / d, (c + 1.0 - o) / d
    if d < 0.0:
        return (c + 1.0 - o) / d, (c - o) / d
    if c < o < c + 1.0:
        return -INF, INF
    return INF, -INF


@njit(cache=True)
def cell_interval(ox, oy, oz, dx, dy, dz, i, j, k):
    """Return (t_enter, t_exit, entry_axis, exit_axis) for one cell."""
    lx, hx = _axis_interval(ox, dx, i)
    ly, hy = _axis_interval(oy, dy, j)
    lz, hz = _axis_interval(oz, dz, k)
    t0 = lx
    ea = 0
    if ly > t0:
        t0 = ly
        ea = 1
    if lz > t0:
        t0 = lz
        ea = 2
    t1 = hx
    xa = 0
    if hy < t1:
        t1 = hy
        xa = 1
    if hz < t1:
        t1 = hz
        xa = 2
    return t0, t1, ea, xa


@njit(cache=True)
def _box_clip(o, d, n):
    lo = -INF
    hi = INF
    for a in range(3):
        if d[a] == 0.0:
            if o[a] < 0.0 or o[a] > n[a]:
                return INF, -INF
        else:
            t_a = (0.0 - o[a]) / d[a]
            t_b = (n[a] - o[a]) / d[a]
            if t_a > t_b:
                t_a, t_b = t_b, t_a
            lo = max(lo, t_a)
            hi = min(hi, t_b)
    return lo, hi


@njit(cache=True)
def _start_cell(o, d, n, t):
    cell = np.empty(3, np.int64)
    for a in range(3):
        p = o[a] + t * d[a]
        c = np.floor(p)
        if d[a] < 0.0 and p == c:
            c -= 1.0
        ci = int(c)
        if ci < 0:
            ci = 0
        if ci > n[a] - 1:
            ci = n[a] - 1
        cell[a] = ci
    return cell


@njit(cache=True)
def walk_first(occ, o, d, t_min, t_max, skip_i, skip_j, skip_k, mask):
    """First crossed occupied cell with ``t_enter < t_max`` and ``t_exit > t_min``.

    ``mask`` (same shape as ``occ``) further restricts which occupied cells
    count; pass ``occ`` itself for no restriction. Returns
    ``(found, i, j, k, t_enter, entry_axis)``.
    """
    nx, ny, nz = occ.shape
    n = np.array([nx, ny, nz], np.int64)
    lo, hi = _box_clip(o, d, n)
    start = max(lo, t_min)
    end = min(hi, t_max)
    if not start < end:
        return False, -1, -1, -1, INF, -1
    cell = _start_cell(o, d, n, start)
    step = np.zeros(3, np.int64)
    for a in range(3):
        if d[a] > 0.0:
            step[a] = 1
        elif d[a] < 0.0:
            step[a] = -1
    for _ in range(nx + ny + nz + 4):
        i, j, k = cell[0], cell[1], cell[2]
        t0, t1, ea, xa = cell_interval(o[0], o[1], o[2], d[0], d[1], d[2], i, j, k)
        if t0 >= t_max:
            break
        if t1 > t0 and t1 > t_min and occ[i, j, k] and mask[i, j, k]:
            if not (i == skip_i and j == skip_j and k == skip_k):
                return True, i, j, k, t0, ea
        if step[xa] == 0:
            break
        cell[xa] += step[xa]
        if cell[xa] < 0 or cell[xa] >= n[xa]:
            break
    return False, -1, -1, -1, INF, -1


@njit(cache=True)
def visibility_kernel(occ, cam):
    """Visible flag for every occupied cell as seen from ``cam`` (grid units)."""
    nx, ny, nz = occ.shape
    vis = np.zeros((nx, ny, nz), np.bool_)
    d = np.empty(3)
    for i in range(nx):
        for j in range(ny):
            for k in range(nz):
                if not occ[i, j, k]:
                    continue
                d[0] = i + 0.5 - cam[0]
                d[1] = j + 0.5 - cam[1]
                d[2] = k + 0.5 - cam[2]
                t_target, _, _, _ = cell_interval(cam[0], cam[1], cam[2], d[0], d[1], d[2], i, j, k)
                found, _, _, _, _, _ = walk_first(occ, cam, d, 0.0, t_target, i, j, k, occ)
                vis[i, j, k] = not found
    return vis

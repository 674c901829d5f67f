"""Procedural objects: symmetric unions of boxes, cylinders and ellipsoids.

Shapes are built in a 24^3 object grid (voxel size 1/16) whose frame puts
the bottom-center of the grid at the object origin. Every new primitive is
centered on an already occupied voxel and mirrored across the x center
plane, so the result is one 6-connected, left-right symmetric component
resting on y = 0.
"""

from __future__ import annotations

import colorsys
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .scene import VoxelGrid

SETTINGS = ("single_color", "default_parts", "textured")
PATTERNS = ("stripes", "checker", "noise")
# train and test texture periods never overlap (in voxels)
TEXTURE_PERIODS = {"train": (2.0, 3.5), "test": (3.5, 5.0)}


@dataclass(frozen=True)
class AppearanceSetting:
    kind: str = "default_parts"
    texture_split: str = "train"
    patterns: tuple[str, ...] = PATTERNS

    def __post_init__(self):
        if self.kind not in SETTINGS:
            raise ValueError(f"unknown appearance setting {self.kind!r}; choose from {SETTINGS}")
        if self.texture_split not in TEXTURE_PERIODS:
            raise ValueError(f"texture_split must be one of {sorted(TEXTURE_PERIODS)}")


def random_color(rng: np.random.Generator, avoid_hue: float | None = None) -> np.ndarray:
    hue = rng.uniform(0, 1)
    if avoid_hue is not None:
        hue = (avoid_hue + rng.uniform(0.25, 0.75)) % 1.0
    sat = rng.uniform(0.45, 1.0)
    val = rng.uniform(0.5, 1.0)
    return np.array(colorsys.hsv_to_rgb(hue, sat, val)), hue


def _primitive_mask(kind, center, half, shape):
    c = np.indices(shape, dtype=np.float64).transpose(1, 2, 3, 0) + 0.5
    d = (c - center) / half
    if kind == "box":
        return np.all(np.abs(d) <= 1.0, axis=-1)
    if kind == "ellipsoid":
        return (d ** 2).sum(axis=-1) <= 1.0
    # cylinder with a vertical axis
    return (d[..., 0] ** 2 + d[..., 2] ** 2 <= 1.0) & (np.abs(d[..., 1]) <= 1.0)


def generate_shape(rng: np.random.Generator, dims: int = 24) -> tuple[np.ndarray, np.ndarray]:
    """Return (occupancy, part_id) arrays; part ids index primitives in order."""
    shape = (dims, dims, dims)
    lo = np.array([dims / 6, 0.0, dims / 6])
    hi = np.array([dims - dims / 6, dims * 0.55, dims - dims / 6])
    region = np.zeros(shape, dtype=bool)
    a, b = np.floor(lo).astype(int), np.ceil(hi).astype(int)
    region[a[0]:b[0], a[1]:b[1], a[2]:b[2]] = True

    occ = np.zeros(shape, dtype=bool)
    part = np.full(shape, -1, dtype=np.int64)
    n_prims = int(rng.integers(3, 9))
    mid = dims / 2.0
    for p in range(n_prims):
        if p == 0:
            half = np.array([rng.uniform(2.5, 5.0), rng.uniform(1.5, 3.5), rng.uniform(2.5, 5.0)])
            center = np.array([mid, half[1], mid + rng.uniform(-1.5, 1.5)])
            kind = "box"
        else:
            kind = ("box", "cylinder", "ellipsoid")[int(rng.integers(0, 3))]
            anchor = np.argwhere(occ)[int(rng.integers(0, occ.sum()))]
            half = rng.uniform(1.0, 4.5, size=3)
            center = anchor + 0.5
        mask = _primitive_mask(kind, center, half, shape)
        if abs(center[0] - mid) > 0.5:
            mirrored = center.copy()
            mirrored[0] = dims - center[0]
            mask |= _primitive_mask(kind, mirrored, half, shape)
        else:
            mask |= mask[::-1]
        mask &= region
        occ |= mask
        part[mask] = p
    labels, count = ndimage.label(occ)
    if count > 1:
        keep = np.argmax(np.bincount(labels.ravel())[1:]) + 1
        occ = labels == keep
        part[~occ] = -1
    # rest on the ground
    ys = np.nonzero(occ.any(axis=(0, 2)))[0]
    if ys[0] > 0:
        occ = np.roll(occ, -ys[0], axis=1)
        part = np.roll(part, -ys[0], axis=1)
    return occ, part


def _pattern(rng, kind, period, occ):
    idx = np.indices(occ.shape, dtype=np.float64) + 0.5
    if kind == "stripes":
        # horizontal bands, depth bands or diagonal bands
        coord = (idx[1], idx[2], idx[1] + idx[2])[int(rng.integers(0, 3))]
        return (np.floor(coord / period) % 2).astype(bool)
    if kind == "checker":
        return (np.floor(idx / period).sum(axis=0) % 2).astype(bool)
    field = ndimage.gaussian_filter(rng.standard_normal(occ.shape), sigma=period / 2, mode="wrap")
    return field > np.median(field[occ])


def color_object(rng: np.random.Generator, occ: np.ndarray, part: np.ndarray,
                 setting: AppearanceSetting) -> np.ndarray:
    colors = np.zeros(occ.shape + (3,))
    if setting.kind == "single_color":
        colors[occ] = random_color(rng)[0]
    elif setting.kind == "default_parts":
        hue = None
        for p in np.unique(part[occ]):
            c, hue = random_color(rng, hue)
            colors[part == p] = c
    else:
        c1, h1 = random_color(rng)
        c2, _ = random_color(rng, h1)
        kind = setting.patterns[int(rng.integers(0, len(setting.patterns)))]
        period = rng.uniform(*TEXTURE_PERIODS[setting.texture_split])
        pat = _pattern(rng, kind, period, occ)
        frac = pat[occ].mean()
        if min(frac, 1 - frac) < 0.15:
            pat = _pattern(rng, "noise", period, occ)
        colors[occ & pat] = c1
        colors[occ & ~pat] = c2
    return colors


def object_frame(dims: int = 24, voxel_size: float = 1.0 / 16) -> tuple[float, float, float]:
    return (-dims * voxel_size / 2, 0.0, -dims * voxel_size / 2)


def generate_object(seed: int, setting: AppearanceSetting | None = None, dims: int = 24,
                    voxel_size: float = 1.0 / 16) -> VoxelGrid:
    """Deterministic procedural object for ``seed`` in the given appearance setting."""
    setting = setting or AppearanceSetting()
    rng = np.random.default_rng(seed)
    occ, part = generate_shape(rng, dims)
    # 8-bit colors so every stored raster and grid holds them exactly
    colors = np.round(color_object(rng, occ, part, setting) * 255.0) / 255.0
    return VoxelGrid.from_arrays(occ, colors, object_frame(dims, voxel_size), voxel_size)


def resample_resolution(grid: VoxelGrid, factor: float) -> VoxelGrid:
    """Nearest-neighbor downsample to ``factor`` of the resolution and back up."""
    n = np.asarray(grid.dims)
    small = np.maximum(1, np.round(n * factor).astype(int))
    idx_down = [np.floor((np.arange(s) + 0.5) * (m / s)).astype(int) for s, m in zip(small, n)]
    idx_up = [np.floor((np.arange(m) + 0.5) * (s / m)).astype(int) for s, m in zip(small, n)]
    data = grid.data[np.ix_(*idx_down)]
    data = data[np.ix_(*idx_up)]
    return grid.with_data(data)

"""Voxel grids, object poses, scene assembly and the pinhole camera.

Conventions: right-handed world, y up, ground plane at y = 0. Grid data is
indexed ``data[i, j, k]`` with i along x, j along y and k along z; the last
axis holds ``(r, g, b, occupancy)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class NotProjectableError(ValueError):
    """Raised when a point lies on or behind the camera plane."""


@dataclass(frozen=True, eq=False)
class VoxelGrid:
    data: np.ndarray
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)
    voxel_size: float = 1.0

    def __post_init__(self):
        data = np.array(self.data, dtype=np.float32)
        if data.ndim != 4 or data.shape[-1] != 4:
            raise ValueError(f"voxel data must be (nx, ny, nz, 4), got {data.shape}")
        if min(data.shape[:3]) < 1:
            raise ValueError("grid dims must all be >= 1")
        if not self.voxel_size > 0:
            raise ValueError("voxel_size must be positive")
        occ = data[..., 3]
        if not np.all((occ == 0) | (occ == 1)):
            raise ValueError("occupancy must be 0 or 1")
        rgb = data[..., :3]
        if np.any(rgb < 0) or np.any(rgb > 1):
            raise ValueError("colors must lie in [0, 1]")
        if np.any(rgb[occ == 0] != 0):
            raise ValueError("empty voxels must have zero color")
        data.flags.writeable = False
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "origin", tuple(float(v) for v in self.origin))
        object.__setattr__(self, "voxel_size", float(self.voxel_size))

    @classmethod
    def from_arrays(cls, occupancy, colors=None, origin=(0.0, 0.0, 0.0), voxel_size=1.0):
        occ = np.asarray(occupancy).astype(bool)
        data = np.zeros(occ.shape + (4,), dtype=np.float32)
        data[..., 3] = occ
        if colors is not None:
            data[..., :3] = np.clip(np.asarray(colors, dtype=np.float32), 0, 1)
            data[~occ, :3] = 0
        return cls(data, origin, voxel_size)

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.data.shape[:3]

    @property
    def occupancy(self) -> np.ndarray:
        return self.data[..., 3] > 0.5

    @property
    def colors(self) -> np.ndarray:
        return self.data[..., :3]

    def centers(self) -> np.ndarray:
        """World-space centers of every voxel, shape (nx, ny, nz, 3)."""
        idx = np.indices(self.dims, dtype=np.float64).transpose(1, 2, 3, 0)
        return np.asarray(self.origin) + (idx + 0.5) * self.voxel_size

    def with_data(self, data) -> "VoxelGrid":
        return VoxelGrid(data, self.origin, self.voxel_size)


@dataclass(frozen=True)
class Pose:
    rotation_y: float = 0.0
    translation: tuple[float, float] = (0.0, 0.0)
    scale: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        if len(self.scale) != 3 or min(self.scale) <= 0:
            raise ValueError(f"degenerate pose scale {self.scale}")

    def rotation_matrix(self) -> np.ndarray:
        return rotation_y_matrix(self.rotation_y)

    def to_world(self, points: np.ndarray) -> np.ndarray:
        scaled = points * np.asarray(self.scale)
        out = scaled @ self.rotation_matrix().T
        out[..., 0] += self.translation[0]
        out[..., 2] += self.translation[1]
        return out

    def to_object(self, points: np.ndarray) -> np.ndarray:
        p = np.array(points, dtype=np.float64)
        p[..., 0] -= self.translation[0]
        p[..., 2] -= self.translation[1]
        return (p @ self.rotation_matrix()) / np.asarray(self.scale)


def rotation_y_matrix(degrees: float) -> np.ndarray:
    rad = math.radians(degrees)
    c, s = math.cos(rad), math.sin(rad)
    # exact quarter turns keep nearest-neighbor resampling lossless
    if abs(degrees % 90.0) < 1e-12 or abs(degrees % 90.0 - 90.0) < 1e-12:
        c, s = round(c), round(s)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


@dataclass(frozen=True)
class Camera:
    """Pinhole camera on a sphere around the world origin, azimuth fixed at 0."""

    elevation: float
    distance: float = 3.0
    image_dims: tuple[int, int] = (64, 64)
    focal_length: float = 40.0
    sensor_width: float = 32.0

    def __post_init__(self):
        if not 0 < self.elevation < 90:
            raise ValueError(f"elevation must be in (0, 90), got {self.elevation}")
        if not self.distance > 0:
            raise ValueError("camera distance must be positive")
        object.__setattr__(self, "image_dims", tuple(int(v) for v in self.image_dims))

    @property
    def width(self) -> int:
        return self.image_dims[0]

    @property
    def height(self) -> int:
        return self.image_dims[1]

    @property
    def focal_px(self) -> float:
        return self.focal_length / self.sensor_width * self.width

    def position(self) -> np.ndarray:
        e = math.radians(self.elevation)
        return self.distance * np.array([0.0, math.sin(e), math.cos(e)])

    def basis(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(right, up, forward) unit vectors in world coordinates."""
        e = math.radians(self.elevation)
        right = np.array([1.0, 0.0, 0.0])
        up = np.array([0.0, math.cos(e), -math.sin(e)])
        forward = -np.array([0.0, math.sin(e), math.cos(e)])
        return right, up, forward

    def pixel_rays(self) -> tuple[np.ndarray, np.ndarray]:
        """Unit ray directions through every pixel center, shape (H, W, 3)."""
        right, up, forward = self.basis()
        cols = (np.arange(self.width) + 0.5 - self.width / 2) / self.focal_px
        rows = (np.arange(self.height) + 0.5 - self.height / 2) / self.focal_px
        d = forward + cols[None, :, None] * right - rows[:, None, None] * up
        d /= np.linalg.norm(d, axis=-1, keepdims=True)
        return self.position(), d


def project_points(camera: Camera, points) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized pinhole projection; callers must check ``depth > 0``."""
    # the camera looks at the origin, so right and up are orthogonal to its
    # position; working from the origin keeps the look-at point exact
    p = np.asarray(points, dtype=np.float64)
    right, up, forward = camera.basis()
    depth = camera.distance + p @ forward
    with np.errstate(divide="ignore", invalid="ignore"):
        u = camera.width / 2 + camera.focal_px * (p @ right) / depth
        v = camera.height / 2 - camera.focal_px * (p @ up) / depth
    return u, v, depth


def project_point(camera: Camera, world_point) -> tuple[float, float, float]:
    u, v, depth = project_points(camera, np.asarray(world_point, dtype=np.float64)[None])
    if not depth[0] > 0:
        raise NotProjectableError(f"point {tuple(world_point)} is not in front of the camera")
    return float(u[0]), float(v[0]), float(depth[0])


@dataclass(frozen=True)
class Ground:
    layers: int = 2
    color: tuple[float, float, float] = (0.6, 0.6, 0.6)
    specular: float = 0.3


LIGHT_BOX = ((-1.5, 1.5), (2.5, 3.0), (-1.5, 1.5))
TRANSLATION_BOX = (-0.5, 0.5)


@dataclass(frozen=True, eq=False)
class Scene:
    object: VoxelGrid
    pose: Pose = field(default_factory=Pose)
    ground: Ground = field(default_factory=Ground)
    light_position: tuple[float, float, float] = (0.0, 2.75, 0.0)
    camera: Camera = field(default_factory=lambda: Camera(30.0))

    def __post_init__(self):
        for value, (lo, hi) in zip(self.light_position, LIGHT_BOX):
            if not lo - 1e-9 <= value <= hi + 1e-9:
                raise ValueError(f"light position {self.light_position} outside {LIGHT_BOX}")
        lo, hi = TRANSLATION_BOX
        if any(not lo - 1e-9 <= t <= hi + 1e-9 for t in self.pose.translation):
            raise ValueError(f"translation {self.pose.translation} outside [{lo}, {hi}]")


def scene_frame(scene_dims, ground_layers: int) -> tuple[tuple[float, float, float], float]:
    """Origin and voxel size of the world scene grid.

    x and z span [-1, 1]; y is shifted so the ground slab ends exactly at y = 0.
    """
    n = scene_dims[0]
    vs = 2.0 / n
    return (-1.0, -ground_layers * vs, -1.0), vs


def _resample(src: VoxelGrid, dst_shape, dst_origin, dst_vs, to_src, to_dst):
    """Inverse-mapping nearest-neighbor resampling with a forward hole guard.

    Every destination voxel pulls the source voxel its center maps into.
    Occupied source voxels that no destination voxel pulled are then pushed to
    the destination cell containing their mapped center, if that cell is empty,
    so thin structures never vanish under rotation. Returns the data array and
    the number of occupied source voxels whose mapped center left the grid.
    """
    dst_shape = tuple(dst_shape)
    idx = np.indices(dst_shape, dtype=np.float64).transpose(1, 2, 3, 0).reshape(-1, 3)
    centers = np.asarray(dst_origin) + (idx + 0.5) * dst_vs
    q = (to_src(centers) - np.asarray(src.origin)) / src.voxel_size
    qi = np.floor(q).astype(np.int64)
    nsrc = np.asarray(src.dims)
    inside = np.all((qi >= 0) & (qi < nsrc), axis=1)
    src_flat = src.data.reshape(-1, 4)
    src_lin = np.ravel_multi_index(tuple(qi[inside].T), src.dims)
    out = np.zeros((idx.shape[0], 4), dtype=np.float32)
    out[inside] = src_flat[src_lin]

    occ_src = np.flatnonzero(src_flat[:, 3] > 0.5)
    pulled = np.zeros(src_flat.shape[0], dtype=bool)
    pulled[src_lin[src_flat[src_lin, 3] > 0.5]] = True

    src_idx = np.stack(np.unravel_index(occ_src, src.dims), axis=1).astype(np.float64)
    src_centers = np.asarray(src.origin) + (src_idx + 0.5) * src.voxel_size
    f = np.floor((to_dst(src_centers) - np.asarray(dst_origin)) / dst_vs).astype(np.int64)
    f_inside = np.all((f >= 0) & (f < np.asarray(dst_shape)), axis=1)
    clipped = int(np.count_nonzero(~f_inside))

    push = f_inside & ~pulled[occ_src]
    if np.any(push):
        dst_lin = np.ravel_multi_index(tuple(f[push].T), dst_shape)
        src_of = occ_src[push]
        # lowest source index wins when several land in the same cell
        uniq, first = np.unique(dst_lin, return_index=True)
        empty = out[uniq, 3] == 0
        out[uniq[empty]] = src_flat[src_of[first[empty]]]
    return out.reshape(dst_shape + (4,)), clipped


def assemble_scene(scene: Scene, scene_dims=(32, 32, 32)) -> tuple[VoxelGrid, int]:
    """Place the posed object and the ground slab into the world scene grid.

    Returns the world grid and the number of object voxels clipped by the
    scene bounds.
    """
    if len(set(scene_dims)) != 1:
        raise ValueError("scene grid must be cubic")
    pose = scene.pose
    origin, vs = scene_frame(scene_dims, scene.ground.layers)
    data, clipped = _resample(
        scene.object, scene_dims, origin, vs, pose.to_object, pose.to_world
    )
    g = scene.ground
    if g.layers > 0:
        floor = data[:, : g.layers]
        floor[..., :3] = np.asarray(g.color, dtype=np.float32)
        floor[..., 3] = 1.0
    return VoxelGrid(data, origin, vs), clipped


def camera_frame_origin(grid: VoxelGrid, camera: Camera) -> np.ndarray:
    right, up, forward = camera.basis()
    rot = np.stack([right, up, forward])
    extent = np.asarray(grid.dims) * grid.voxel_size
    center = np.asarray(grid.origin) + extent / 2
    return rot @ center - extent / 2


def world_to_camera(grid: VoxelGrid, camera: Camera) -> VoxelGrid:
    """Resample a world grid into a camera-aligned frame.

    Axes of the result are (right, up, depth) where depth grows away from the
    camera. The frame is centered on the rotated center of the input grid.
    """
    right, up, forward = camera.basis()
    rot = np.stack([right, up, forward])
    cam_origin = camera_frame_origin(grid, camera)
    data, _ = _resample(
        grid, grid.dims, cam_origin, grid.voxel_size,
        lambda c: c @ rot, lambda p: p @ rot.T,
    )
    return VoxelGrid(data, tuple(cam_origin), grid.voxel_size)


def camera_grid_tensor(cam_grid: VoxelGrid) -> np.ndarray:
    """Network layout (rows, cols, depth, 4): rows run top to bottom like the image."""
    return np.ascontiguousarray(cam_grid.data.transpose(1, 0, 2, 3)[::-1])

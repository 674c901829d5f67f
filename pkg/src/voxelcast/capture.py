"""Image-based voxel coloring: visibility, un-projection, ray fill, symmetry."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .scene import Camera, Pose, VoxelGrid, project_points
from .traversal import cell_interval, visibility_kernel, walk_first


class EmptyCaptureError(ValueError):
    """No voxel was visible from the appearance source view."""


@dataclass(frozen=True, eq=False)
class VisibilityMask:
    """Per-voxel flags from a capture.

    ``visible`` marks voxels seen directly by the source camera; ``colored``
    marks voxels that received a color (directly or by ray fill).
    """

    visible: np.ndarray
    colored: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "visible", np.asarray(self.visible, dtype=bool))
        colored = self.visible if self.colored is None else self.colored
        object.__setattr__(self, "colored", np.asarray(colored, dtype=bool))


@dataclass(frozen=True, eq=False)
class AppearanceSource:
    image: np.ndarray
    camera: Camera

    def __post_init__(self):
        img = np.asarray(self.image, dtype=np.float32)
        if img.shape != (self.camera.height, self.camera.width, 3):
            raise ValueError(
                f"image shape {img.shape} does not match camera {self.camera.image_dims}"
            )
        object.__setattr__(self, "image", img)


def camera_in_grid_units(grid: VoxelGrid, camera: Camera) -> np.ndarray:
    return (camera.position() - np.asarray(grid.origin)) / grid.voxel_size


def compute_visibility(grid: VoxelGrid, camera: Camera) -> VisibilityMask:
    occ = np.ascontiguousarray(grid.occupancy)
    vis = visibility_kernel(occ, camera_in_grid_units(grid, camera))
    return VisibilityMask(vis)


@njit(cache=True)
def _ray_fill(occ, visible, colored, colors, cam, out, filled):
    nx, ny, nz = occ.shape
    d = np.empty(3)
    for i in range(nx):
        for j in range(ny):
            for k in range(nz):
                if not occ[i, j, k] or visible[i, j, k]:
                    continue
                d[0] = i + 0.5 - cam[0]
                d[1] = j + 0.5 - cam[1]
                d[2] = k + 0.5 - cam[2]
                t_target, _, _, _ = cell_interval(cam[0], cam[1], cam[2], d[0], d[1], d[2], i, j, k)
                found, a, b, c, _, _ = walk_first(occ, cam, d, 0.0, t_target, i, j, k, colored)
                if found:
                    out[i, j, k, 0] = colors[a, b, c, 0]
                    out[i, j, k, 1] = colors[a, b, c, 1]
                    out[i, j, k, 2] = colors[a, b, c, 2]
                    filled[i, j, k] = True


def color_from_image(grid: VoxelGrid, source: AppearanceSource) -> tuple[VoxelGrid, VisibilityMask]:
    """Un-project source pixels onto the voxels of a world-frame grid.

    Visible voxels take the nearest pixel under their projected center.
    Hidden voxels copy the first directly colored voxel crossed by their own
    camera ray. Voxels left without a color keep zero RGB and are reported
    through ``mask.colored``.
    """
    cam = source.camera
    occ = np.ascontiguousarray(grid.occupancy)
    visible = compute_visibility(grid, cam).visible

    u, v, depth = project_points(cam, grid.centers().reshape(-1, 3))
    with np.errstate(invalid="ignore"):
        col = np.floor(u).reshape(grid.dims)
        row = np.floor(v).reshape(grid.dims)
        in_image = (
            (depth.reshape(grid.dims) > 0)
            & (col >= 0) & (col < cam.width) & (row >= 0) & (row < cam.height)
        )
    direct = visible & in_image
    colors = np.zeros(grid.dims + (3,), dtype=np.float64)
    ci = np.where(direct, col, 0).astype(np.int64)
    ri = np.where(direct, row, 0).astype(np.int64)
    colors[direct] = source.image[ri[direct], ci[direct]]

    filled = np.zeros(grid.dims, dtype=bool)
    _ray_fill(occ, visible, direct, colors, camera_in_grid_units(grid, cam), colors, filled)

    colored = direct | filled
    data = np.zeros(grid.dims + (4,), dtype=np.float32)
    data[..., 3] = occ
    data[colored, :3] = np.clip(colors[colored], 0, 1)
    return grid.with_data(data), VisibilityMask(direct, colored)


def mirror_x(array: np.ndarray) -> np.ndarray:
    return array[::-1]


def symmetry_complete(grid: VoxelGrid, mask: VisibilityMask, mirror=mirror_x) -> VoxelGrid:
    """Finish an object-frame capture using bilateral symmetry.

    A voxel that was not directly visible copies its mirror voxel's color when
    the mirror is visible. Voxels still lacking a color afterwards get the mean
    color of all visible voxels. ``mirror`` maps an (nx, ny, nz, ...) array to
    its mirrored counterpart; the default flips x about the grid center plane.
    """
    occ = grid.occupancy
    visible = mask.visible & occ
    if not visible.any():
        raise EmptyCaptureError("no visible voxels to complete from")
    colors = np.array(grid.colors, dtype=np.float32)
    colored = mask.colored & occ

    m_colors = mirror(colors)
    m_visible = mirror(visible)
    take = occ & ~visible & m_visible
    colors[take] = m_colors[take]
    colored = colored | take

    rest = occ & ~colored
    if rest.any():
        colors[rest] = grid.colors[visible].mean(axis=0)
    data = np.array(grid.data)
    data[..., :3] = np.where(occ[..., None], colors, 0)
    return grid.with_data(data)


def pull_back(world: VoxelGrid, obj: VoxelGrid, pose: Pose, arrays=()):
    """Sample world-frame results back onto object voxels.

    Each occupied object voxel reads the world cell containing its posed
    center. Returns the object grid carrying the sampled colors plus the
    sampled version of every extra boolean array in ``arrays``; object voxels
    whose cell is empty or off-grid get ``False`` in those arrays.
    """
    occ = obj.occupancy
    centers = pose.to_world(obj.centers().reshape(-1, 3))
    cell = np.floor((centers - np.asarray(world.origin)) / world.voxel_size).astype(np.int64)
    ok = np.all((cell >= 0) & (cell < np.asarray(world.dims)), axis=1).reshape(obj.dims)
    ok &= occ
    ci = np.where(ok.reshape(-1, 1), cell, 0)
    lin = np.ravel_multi_index(tuple(ci.T), world.dims).reshape(obj.dims)
    wflat = world.data.reshape(-1, 4)
    ok &= wflat[lin, 3] > 0.5
    data = np.zeros(obj.dims + (4,), dtype=np.float32)
    data[..., 3] = occ
    data[ok, :3] = wflat[lin[ok], :3]
    pulled = [np.where(ok, np.asarray(a).reshape(-1)[lin], False) for a in arrays]
    return obj.with_data(data), pulled


def capture_object(obj: VoxelGrid, pose: Pose, source: AppearanceSource, scene_dims=(32, 32, 32)) -> VoxelGrid:
    """Full capture pipeline for an object seen in ``source`` under ``pose``.

    The object is placed (without ground) in the world grid, colored from the
    source image, pulled back to its own frame and symmetry-completed.
    """
    from .scene import Ground, Scene, assemble_scene

    scene = Scene(obj, pose, Ground(layers=0), camera=source.camera)
    world, _ = assemble_scene(scene, scene_dims)
    colored_world, mask = color_from_image(world, source)
    obj_colored, (visible, colored) = pull_back(
        colored_world, obj, pose, arrays=(mask.visible, mask.colored)
    )
    return symmetry_complete(obj_colored, VisibilityMask(visible, colored))

"""Voxel scene rendering with a neural rerenderer (NVR / NVR+) built on a small
numpy autodiff engine."""

from .capture import (
    AppearanceSource,
    EmptyCaptureError,
    VisibilityMask,
    capture_object,
    color_from_image,
    compute_visibility,
    symmetry_complete,
)
from .oracle import AreaLight, RenderSettings, irradiance, render_scene, render_target
from .scene import (
    Camera,
    Ground,
    NotProjectableError,
    Pose,
    Scene,
    VoxelGrid,
    assemble_scene,
    camera_grid_tensor,
    project_point,
    project_points,
    world_to_camera,
)
from .splat import SplatCanvas, splat

__version__ = "0.1.0"

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import box_object
from oracles import look_at_projection, matrix_project
from voxelcast.scene import (
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
    rotation_y_matrix,
    scene_frame,
    world_to_camera,
)

NO_GROUND = Ground(layers=0)


def occupied(grid):
    return {tuple(i) for i in np.argwhere(grid.occupancy)}


# ---------------------------------------------------------------- VoxelGrid


def test_grid_rejects_fractional_occupancy():
    data = np.zeros((2, 2, 2, 4))
    data[0, 0, 0, 3] = 0.5
    with pytest.raises(ValueError, match="occupancy"):
        VoxelGrid(data)


def test_grid_rejects_color_on_empty_voxel():
    data = np.zeros((2, 2, 2, 4))
    data[0, 0, 0, 0] = 0.3
    with pytest.raises(ValueError, match="empty voxels"):
        VoxelGrid(data)


def test_grid_rejects_bad_voxel_size_and_colors():
    with pytest.raises(ValueError):
        VoxelGrid(np.zeros((2, 2, 2, 4)), voxel_size=0.0)
    data = np.zeros((1, 1, 1, 4))
    data[..., 3] = 1
    data[..., 0] = 1.5
    with pytest.raises(ValueError, match="colors"):
        VoxelGrid(data)


def test_grid_is_read_only():
    g = VoxelGrid.from_arrays(np.ones((2, 2, 2)))
    with pytest.raises(ValueError):
        g.data[0, 0, 0, 0] = 1.0


def test_from_arrays_clears_colors_of_empty_voxels():
    occ = np.zeros((2, 2, 2), bool)
    occ[0, 0, 0] = True
    g = VoxelGrid.from_arrays(occ, np.full((2, 2, 2, 3), 0.5))
    assert g.colors[1, 1, 1].sum() == 0
    assert np.allclose(g.colors[0, 0, 0], 0.5)


def test_centers():
    g = VoxelGrid.from_arrays(np.ones((2, 1, 1)), origin=(1.0, 2.0, 3.0), voxel_size=0.5)
    assert np.allclose(g.centers()[1, 0, 0], [1.75, 2.25, 3.25])


# ---------------------------------------------------------------- Pose


def test_pose_rejects_degenerate_scale():
    with pytest.raises(ValueError):
        Pose(scale=(1.0, 0.0, 1.0))


@given(
    st.floats(-180, 180), st.floats(-0.5, 0.5), st.floats(-0.5, 0.5),
    st.tuples(*[st.floats(0.25, 3.0)] * 3),
)
def test_pose_round_trip(rot, tx, tz, scale):
    pose = Pose(rot, (tx, tz), scale)
    pts = np.random.default_rng(0).uniform(-1, 1, (20, 3))
    assert np.allclose(pose.to_object(pose.to_world(pts)), pts, atol=1e-12)


def test_quarter_turn_matrix_is_exact():
    m = rotation_y_matrix(90.0)
    assert np.array_equal(m, np.array([[0.0, 0.0, 1.0], [0.0, 1.0, 0.0], [-1.0, 0.0, 0.0]]))
    # x axis goes to -z under a positive rotation about y
    assert np.array_equal(m @ [1.0, 0.0, 0.0], [0.0, 0.0, -1.0])


# ---------------------------------------------------------------- assemble_scene


def test_identity_pose_places_object_at_center():
    # 16^3 object with voxel size 1/8 spans [-1, 1] like the 16^3 scene grid
    rng = np.random.default_rng(3)
    occ = rng.random((16, 16, 16)) < 0.2
    obj = VoxelGrid.from_arrays(occ, rng.random((16, 16, 16, 3)), (-1.0, 0.0, -1.0), 0.125)
    world, clipped = assemble_scene(Scene(obj, ground=NO_GROUND), (16, 16, 16))
    assert clipped == 0
    # no ground layers: world origin y is 0, so indices coincide
    assert occupied(world) == {tuple(i) for i in np.argwhere(occ)}
    assert np.array_equal(world.colors[world.occupancy], obj.colors[occ])


def test_rotation_90_moves_bar_onto_z_axis():
    occ = np.zeros((16, 16, 16), bool)
    occ[8:13, 0, 8] = True  # bar along +x starting at the center column
    obj = VoxelGrid.from_arrays(occ, origin=(-1.0, 0.0, -1.0), voxel_size=0.125)
    world, _ = assemble_scene(Scene(obj, Pose(90.0), ground=NO_GROUND), (16, 16, 16))
    # hand-computed: center (x, z) maps to (z, -x), so x index 8+a -> z index 7-a
    expected = {(8, 0, 7 - a) for a in range(5)}
    assert occupied(world) == expected


def test_four_quarter_turns_are_lossless():
    rng = np.random.default_rng(4)
    occ = rng.random((16, 16, 16)) < 0.3
    obj = VoxelGrid.from_arrays(occ, rng.random((16, 16, 16, 3)), (-1.0, 0.0, -1.0), 0.125)
    grid = obj
    for _ in range(4):
        grid, clipped = assemble_scene(Scene(grid, Pose(90.0), ground=NO_GROUND), (16, 16, 16))
        assert clipped == 0
    assert np.array_equal(grid.data, obj.data)


def test_translation_shifts_indices_by_whole_voxels():
    obj = box_object()
    base, _ = assemble_scene(Scene(obj, ground=NO_GROUND))
    moved, _ = assemble_scene(Scene(obj, Pose(0.0, (0.5, 0.0)), ground=NO_GROUND))
    # scene grid 32^3 over [-1, 1] has voxel size 1/16: 0.5 is 8 voxels
    assert occupied(moved) == {(i + 8, j, k) for i, j, k in occupied(base)}


@given(st.integers(-6, 6), st.integers(-6, 6))
def test_integer_translation_equivariance(kx, kz):
    obj = box_object()
    vs = 1 / 16
    base, _ = assemble_scene(Scene(obj, ground=NO_GROUND))
    moved, _ = assemble_scene(Scene(obj, Pose(0.0, (kx * vs, kz * vs)), ground=NO_GROUND))
    assert occupied(moved) == {(i + kx, j, k + kz) for i, j, k in occupied(base)}


def test_ground_slab_and_object_rest_on_y_zero():
    obj = box_object()
    world, _ = assemble_scene(Scene(obj))
    origin, vs = scene_frame((32, 32, 32), 2)
    assert origin[1] + 2 * vs == 0.0
    assert world.occupancy[:, :2].all()
    assert np.allclose(world.colors[:, :2], 0.6)
    # the object's lowest layer sits directly on top of the ground
    above = world.occupancy[:, 2:]
    assert above[:, 0].any()


def test_clipped_voxels_are_counted():
    occ = np.ones((24, 4, 24), bool)
    obj = VoxelGrid.from_arrays(occ, origin=(-0.75, 0.0, -0.75), voxel_size=1 / 16)
    world, clipped = assemble_scene(Scene(obj, Pose(0.0, (0.5, 0.0)), ground=NO_GROUND))
    # x indices run 4..27 shifted by 8 -> 12..35; 32..35 leave the grid
    assert clipped == 4 * 4 * 24
    assert world.occupancy.sum() == 20 * 4 * 24


def test_scene_envelope_is_enforced():
    obj = box_object()
    with pytest.raises(ValueError, match="light"):
        Scene(obj, light_position=(0.0, 3.5, 0.0))
    with pytest.raises(ValueError, match="translation"):
        Scene(obj, Pose(0.0, (0.6, 0.0)))


def test_scene_grid_must_be_cubic():
    with pytest.raises(ValueError):
        assemble_scene(Scene(box_object()), (32, 16, 32))


# ---------------------------------------------------------------- camera


def test_camera_validation():
    for bad in (0.0, 90.0, -5.0):
        with pytest.raises(ValueError):
            Camera(bad)
    with pytest.raises(ValueError):
        Camera(30.0, distance=0.0)


@given(st.floats(1, 89))
def test_camera_basis_is_orthonormal_and_looks_at_origin(elev):
    cam = Camera(elev)
    r, u, f = cam.basis()
    m = np.stack([r, u, f])
    assert np.allclose(m @ m.T, np.eye(3), atol=1e-12)
    assert np.allclose(np.cross(r, u), -f, atol=1e-12)  # right-handed with -forward
    assert np.allclose(cam.position() + cam.distance * f, 0.0, atol=1e-12)


def test_origin_projects_to_image_center_exactly():
    for elev in (5.0, 30.0, 50.0):
        cam = Camera(elev, image_dims=(64, 48))
        u, v, d = project_point(cam, (0.0, 0.0, 0.0))
        assert (u, v) == (32.0, 24.0)
        assert d == pytest.approx(3.0, abs=1e-15)


def test_pixel_offset_matches_pinhole_formula():
    cam = Camera(30.0)
    right, _, _ = cam.basis()
    u, v, d = project_point(cam, 0.1 * right)
    assert d == pytest.approx(3.0)
    assert u - 32.0 == pytest.approx(0.1 * (40 / 32) * 64 / 3.0, rel=1e-12)
    assert v == pytest.approx(32.0)


def test_point_behind_camera_is_not_projectable():
    cam = Camera(30.0)
    with pytest.raises(NotProjectableError):
        project_point(cam, 2 * cam.position())
    with pytest.raises(NotProjectableError):
        project_point(cam, cam.position())


def test_projection_matches_matrix_pipeline():
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(10):
        elev = rng.uniform(5, 50)
        cam = Camera(elev)
        pts = rng.uniform(-1, 1, (100, 3))
        p = look_at_projection(elev, 3.0, 64, 64, 40.0, 32.0)
        u_ref, v_ref, d_ref = matrix_project(p, pts)
        for (x, y, z), ur, vr, dr in zip(pts, u_ref, v_ref, d_ref):
            u, v, d = project_point(cam, (x, y, z))
            got, ref = np.array([u, v, d]), np.array([ur, vr, dr])
            worst = max(worst, np.abs(got - ref).max() / np.abs(ref).max())
    assert worst < 1e-9


def test_pixel_rays_hit_pixel_centers():
    cam = Camera(25.0, image_dims=(16, 12))
    pos, dirs = cam.pixel_rays()
    pts = pos + 2.0 * dirs.reshape(-1, 3)
    u, v, _ = project_points(cam, pts)
    cols, rows = np.meshgrid(np.arange(16) + 0.5, np.arange(12) + 0.5)
    assert np.allclose(u, cols.ravel()) and np.allclose(v, rows.ravel())


# ---------------------------------------------------------------- world_to_camera


def _bar_world():
    occ = np.zeros((32, 32, 32), bool)
    occ[10:22, 14:18, 14:18] = True
    return VoxelGrid.from_arrays(occ, origin=(-1.0, -1.0, -1.0), voxel_size=1 / 16)


def test_world_to_camera_tiny_elevation_is_axis_permutation():
    # at an elevation this small the resampling is still an exact permutation
    world = _bar_world()
    cam_grid = world_to_camera(world, Camera(1e-6))
    # axes become (right, up, depth away from the camera) = (x, y, -z)
    assert np.array_equal(cam_grid.occupancy, world.occupancy[:, :, ::-1])


def test_world_to_camera_single_voxel_moves_to_analytic_position():
    for elev in (5.0, 17.0, 33.0, 50.0):
        occ = np.zeros((32, 32, 32), bool)
        occ[16, 16, 16] = True  # center at (1/32, 1/32, 1/32)
        world = VoxelGrid.from_arrays(occ, origin=(-1.0, -1.0, -1.0), voxel_size=1 / 16)
        cam = Camera(elev)
        cg = world_to_camera(world, cam)
        hits = np.argwhere(cg.occupancy)
        assert len(hits) >= 1
        r, u, f = cam.basis()
        c = np.full(3, 1 / 32)
        local = np.array([c @ r, c @ u, c @ f])
        expected = (local - np.asarray(cg.origin)) / cg.voxel_size - 0.5
        assert np.abs(hits - expected).max() <= 1.0


def test_world_to_camera_elevations_differ():
    world = _bar_world()
    occ = np.zeros((32, 32, 32), bool)
    occ[14:18, 8:24, 10:22] = True
    world = VoxelGrid.from_arrays(occ, origin=(-1.0, -1.0, -1.0), voxel_size=1 / 16)
    a = world_to_camera(world, Camera(30.0)).occupancy
    b = world_to_camera(world, Camera(50.0)).occupancy
    assert not np.array_equal(a, b)


@given(st.floats(5, 50), st.floats(-90, 90))
def test_world_to_camera_preserves_count_of_convex_solid(elev, rot):
    obj = box_object(lo=(6, 0, 6), hi=(18, 12, 18))
    world, _ = assemble_scene(Scene(obj, Pose(rot), ground=NO_GROUND))
    n0 = world.occupancy.sum()
    n1 = world_to_camera(world, Camera(elev)).occupancy.sum()
    assert abs(n1 - n0) <= 0.1 * n0


def test_camera_grid_tensor_rows_run_top_to_bottom():
    occ = np.zeros((4, 4, 4), bool)
    occ[0, 3, 0] = True  # leftmost column, highest layer
    g = VoxelGrid.from_arrays(occ)
    t = camera_grid_tensor(g)
    assert t.shape == (4, 4, 4, 4)
    assert t[0, 0, 0, 3] == 1.0 and t[..., 3].sum() == 1.0


def test_rotation_angle_normalization():
    assert math.isclose(np.abs(rotation_y_matrix(450.0) - rotation_y_matrix(90.0)).max(), 0.0)

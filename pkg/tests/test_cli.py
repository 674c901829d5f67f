import numpy as np
import pytest

from conftest import box_object
from voxelcast import io
from voxelcast.cli import main
from voxelcast.dataset import scene_inputs
from voxelcast.models.nvr import NeuralVoxelRenderer, NvrConfig
from voxelcast.scene import Camera, Ground, Pose, Scene, VoxelGrid, assemble_scene


@pytest.fixture
def scene_file(tmp_path):
    obj = box_object(lo=(6, 0, 8), hi=(18, 8, 16), color=(0.8, 0.3, 0.2))
    io.save_grid(tmp_path / "obj.vxg", obj)
    scene = Scene(obj, Pose(0.0), light_position=(0.5, 2.6, 0.2), camera=Camera(30.0))
    path = tmp_path / "s.scene"
    io.write_scene_file(path, io.scene_kv(scene, "obj.vxg"))
    return path


@pytest.fixture(scope="module")
def checkpoint(tmp_path_factory):
    model = NeuralVoxelRenderer(NvrConfig(plus=True))
    # undo the near-zero head init so outputs vary visibly with the inputs
    model.store["unet_out.w"].data *= 1e3
    path = tmp_path_factory.mktemp("ck") / "m.vxck"
    model.save(path)
    return path


def run(*argv):
    return main([str(a) for a in argv])


def test_unknown_command_and_flag_exit_2(capsys):
    assert run("frobnicate") == 2
    assert run("splat", "--scene", "x", "--bogus") == 2
    assert "usage" in capsys.readouterr().err


def test_missing_file_is_a_diagnostic(tmp_path, capsys):
    assert run("splat", "--scene", tmp_path / "nope.scene", "--out", tmp_path) == 1
    assert "voxelcast: error" in capsys.readouterr().err


def test_eval_identical_files_prints_zeros(tmp_path, capsys):
    img = np.random.default_rng(0).random((16, 16, 3))
    io.save_png(tmp_path / "a.png", img)
    assert run("eval", tmp_path / "a.png", tmp_path / "a.png") == 0
    assert capsys.readouterr().out.strip() == "mse 0.000000 dssim 0.000000 perceptual 0.000000"
    assert run("eval", tmp_path / "a.png") == 2


def test_splat_oracle_capture_commands(scene_file, tmp_path):
    out = tmp_path / "o"
    assert run("splat", "--scene", scene_file, "--out", out) == 0
    assert run("oracle", "--scene", scene_file, "--shadow-samples", 2, "--bounce-samples", 1, "--out", out) == 0
    assert run("capture", "--scene", scene_file, "--image", out / "s_oracle.png", "--out", out) == 0
    assert io.load_image(out / "s_splat.png").shape == (64, 64, 3)
    assert io.load_raw(out / "s_splat.depth.raw").shape == (64, 64, 1)
    cap = io.load_grid(out / "s_cap.vxg")
    src = io.load_grid(scene_file.parent / "obj.vxg")
    assert np.array_equal(cap.occupancy, src.occupancy)


def test_global_flags_after_command_and_config_file(scene_file, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("shadow-samples = 1\nbounce_samples = 1\nseed = 3\n")
    a, b = tmp_path / "a", tmp_path / "b"
    assert run("--config", cfg, "oracle", "--scene", scene_file, "--out", a) == 0
    assert run("oracle", "--scene", scene_file, "--out", b, "--seed", 3,
               "--shadow-samples", 1, "--bounce-samples", 1) == 0
    assert (a / "s_oracle.png").read_bytes() == (b / "s_oracle.png").read_bytes()
    cfg.write_text("not_a_flag = 1\n")
    assert run("--config", cfg, "oracle", "--scene", scene_file) == 2


def object_extent_x(grid: VoxelGrid, ground_layers=2):
    occ = grid.occupancy[:, ground_layers:, :]
    xs = np.nonzero(occ.any(axis=(1, 2)))[0]
    return xs[-1] - xs[0] + 1


def test_edit_scale_x_stretches_extent(scene_file, tmp_path):
    out = tmp_path / "o"
    assert run("edit", "--scene", scene_file, "--grid-out", out / "base.vxg", "--out", out) == 0
    assert run("edit", "--scene", scene_file, "--scale-x", 1.5, "--grid-out", out / "wide.vxg", "--out", out) == 0
    base = object_extent_x(io.load_grid(out / "base.vxg"))
    wide = object_extent_x(io.load_grid(out / "wide.vxg"))
    assert base == 12
    assert abs(wide - 1.5 * base) <= 1
    edited, _ = io.read_scene_file(out / "s_edit.scene")
    assert edited.pose.scale == (1.5, 1.0, 1.0)


def test_edit_color_and_elevation(scene_file, tmp_path):
    out = tmp_path / "o"
    assert run("edit", "--scene", scene_file, "--color", 0, 0, 1, "--elevation", 40, "--out", out) == 0
    scene, _ = io.read_scene_file(out / "s_edit.scene")
    assert scene.camera.elevation == 40.0
    assert np.all(scene.object.colors[scene.object.occupancy] == (0.0, 0.0, 1.0))


def test_infer_responds_to_light_edit(scene_file, checkpoint, tmp_path):
    out = tmp_path / "o"
    assert run("infer", "--checkpoint", checkpoint, "--scene", scene_file, "--out", out) == 0
    assert run("edit", "--scene", scene_file, "--light", -1.2, 2.9, -1.0, "--checkpoint", checkpoint,
               "--out", out) == 0
    before = io.load_image(out / "s_infer.png")
    after = io.load_image(out / "s_edit.png")
    assert np.abs(before - after).max() > 0


def test_edit_then_infer_equals_scene_from_scratch(scene_file, checkpoint, tmp_path):
    out = tmp_path / "o"
    assert run("edit", "--scene", scene_file, "--light", -1.2, 2.9, -1.0, "--rotate", 30,
               "--out", out) == 0
    assert run("infer", "--checkpoint", checkpoint, "--scene", out / "s_edit.scene", "--out", out) == 0
    obj = io.load_grid(scene_file.parent / "obj.vxg")
    scratch = Scene(obj, Pose(30.0), Ground(), (-1.2, 2.9, -1.0), Camera(30.0))
    model = NeuralVoxelRenderer.load(checkpoint)
    v, light, s = scene_inputs(scratch)
    img = model.predict(v[None], light[None], s[None])[0]
    io.save_png(tmp_path / "scratch.png", img)
    assert (tmp_path / "scratch.png").read_bytes() == (out / "s_edit_infer.png").read_bytes()


def test_gen_dataset_and_eval_checkpoint(tmp_path, checkpoint, capsys):
    out = tmp_path / "d"
    assert run("gen-dataset", "--objects", 1, "--views", 2, "--split", "both", "--test-objects", 1,
               "--out", out, "--threads", 1) == 0
    assert (out / "train" / "manifest.jsonl").is_file() and (out / "test" / "manifest.jsonl").is_file()
    capsys.readouterr()
    assert run("eval", "--checkpoint", checkpoint, "--data", out / "test") == 0
    assert capsys.readouterr().out.startswith("mse ")


def test_train_command_writes_log_and_checkpoint(tmp_path):
    data = tmp_path / "d"
    assert run("gen-dataset", "--objects", 1, "--views", 2, "--out", data, "--threads", 1) == 0
    out = tmp_path / "run"
    assert run("train", "--data", data, "--val", data, "--model", "nvr", "--steps", 2,
               "--batch-size", 2, "--out", out) == 0
    assert (out / "model.vxck").is_file()
    assert (out / "train_log.csv").read_text().splitlines()[0] == "step,l1,perceptual,total,val_mse,val_dssim"
    assert not NeuralVoxelRenderer.load(out / "model.vxck").config.plus

"""Command-line entry point: ``voxelcast <command> [flags]``.

Global flags (accepted before or after the command): ``--seed``,
``--config FILE`` (key-value file whose keys set flag defaults, dashes or
underscores both accepted) and ``--out DIR``.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import io
from .scene import Pose, Scene


def _common(defaults: bool) -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    kw = {} if defaults else {"default": argparse.SUPPRESS}
    p.add_argument("--seed", type=int, **({"default": 0} if defaults else kw))
    p.add_argument("--config", **({"default": None} if defaults else kw))
    p.add_argument("--out", **({"default": "out"} if defaults else kw))
    return p


def _floats(n):
    return {"type": float, "nargs": n}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="voxelcast", parents=[_common(True)],
                                     description="Voxel scene rendering, capture and neural rerendering.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.required = True
    common = _common(False)

    p = sub.add_parser("gen-dataset", parents=[common], help="generate a train/test dataset")
    p.add_argument("--objects", type=int, default=200)
    p.add_argument("--views", type=int, default=5)
    p.add_argument("--split", choices=("train", "test", "both"), default="train")
    p.add_argument("--test-objects", type=int, default=20)
    p.add_argument("--setting", choices=("single_color", "default_parts", "textured"),
                   default="default_parts")
    p.add_argument("--threads", type=int, default=None)

    p = sub.add_parser("capture", parents=[common], help="color a scene's object from an image")
    p.add_argument("--scene", required=True)
    p.add_argument("--image", required=True, help="appearance source seen from the scene camera")

    p = sub.add_parser("splat", parents=[common], help="splat image of a scene")
    p.add_argument("--scene", required=True)

    p = sub.add_parser("oracle", parents=[common], help="ground-truth render of a scene")
    p.add_argument("--scene", required=True)
    p.add_argument("--shadow-samples", type=int, default=16)
    p.add_argument("--bounce-samples", type=int, default=4)

    p = sub.add_parser("train", parents=[common], help="train NVR or NVR+")
    p.add_argument("--data", required=True, help="dataset directory or manifest")
    p.add_argument("--val", default=None)
    p.add_argument("--model", choices=("nvr", "nvr+"), default="nvr+")
    p.add_argument("--steps", type=int, default=2000)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--lr", type=float, default=1e-4)

    p = sub.add_parser("infer", parents=[common], help="render a scene with a trained model")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--scene", required=True)

    p = sub.add_parser("eval", parents=[common], help="compare images, or a model on a dataset")
    p.add_argument("images", nargs="*", help="PRED TARGET")
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--data", default=None)

    p = sub.add_parser("edit", parents=[common], help="edit a scene file and re-render it")
    p.add_argument("--scene", required=True)
    p.add_argument("--rotate", type=float, default=None, help="new rotation about y (degrees)")
    p.add_argument("--translate", **_floats(2), default=None)
    p.add_argument("--scale-x", type=float, default=None)
    p.add_argument("--scale-y", type=float, default=None)
    p.add_argument("--scale-z", type=float, default=None)
    p.add_argument("--light", **_floats(3), default=None)
    p.add_argument("--elevation", type=float, default=None)
    p.add_argument("--color", **_floats(3), default=None, help="recolor every object voxel")
    p.add_argument("--grid-out", default=None, help="also write the assembled world grid")
    p.add_argument("--checkpoint", default=None, help="re-render with a model instead of the oracle")
    return parser


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if not args.config:
        return args
    kv = io.parse_kv(Path(args.config).read_text(encoding="utf-8"))
    sub = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    subparser = sub.choices[args.command]
    dests = {a.dest: a for a in subparser._actions}
    defaults = {}
    for key, value in kv.items():
        dest = key.replace("-", "_")
        if dest not in dests or dest in ("config", "help"):
            parser.error(f"config key {key!r} is not a flag of {args.command!r}")
        action = dests[dest]
        if action.nargs not in (None, "?"):
            defaults[dest] = [action.type(v) if action.type else v for v in value.split()]
        else:
            defaults[dest] = action.type(value) if action.type else value
    subparser.set_defaults(**defaults)
    parser.set_defaults(**{k: v for k, v in defaults.items() if k in ("seed", "out")})
    return parser.parse_args(argv)


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_gen_dataset(args) -> int:
    from .dataset import SamplingSpec, generate_dataset
    from .procedural import AppearanceSetting

    spec = SamplingSpec(views_per_object=args.views, rng_seed=args.seed)
    setting = AppearanceSetting(args.setting)
    out = _out(args)
    splits = ("train", "test") if args.split == "both" else (args.split,)
    for split in splits:
        n = args.test_objects if split == "test" and args.split == "both" else args.objects
        target = out / split if args.split == "both" else out
        m = generate_dataset(target, spec, setting, n, split, args.threads)
        print(f"{split}: {len(m)} samples -> {target / 'manifest.jsonl'}")
    return 0


def cmd_capture(args) -> int:
    from .capture import AppearanceSource, capture_object

    scene, kv = io.read_scene_file(args.scene)
    source = AppearanceSource(io.load_image(args.image), scene.camera)
    dims = (int(kv.get("scene_dims", 32)),) * 3
    captured = capture_object(scene.object, scene.pose, source, dims)
    path = _out(args) / (Path(args.scene).stem + "_cap.vxg")
    io.save_grid(path, captured)
    print(path)
    return 0


def cmd_splat(args) -> int:
    from .scene import assemble_scene
    from .splat import splat

    scene, kv = io.read_scene_file(args.scene)
    world, _ = assemble_scene(scene, (int(kv.get("scene_dims", 32)),) * 3)
    canvas = splat(world, scene.camera)
    out = _out(args)
    stem = Path(args.scene).stem
    io.save_png(out / f"{stem}_splat.png", canvas.color)
    io.save_raw(out / f"{stem}_splat.depth.raw", np.where(canvas.coverage, canvas.depth, 0.0))
    print(out / f"{stem}_splat.png")
    return 0


def _oracle_image(scene: Scene, kv: dict, args, shadow=16, bounce=4) -> np.ndarray:
    from .oracle import RenderSettings, render_scene

    settings = RenderSettings(shadow_samples=shadow, bounce_samples=bounce,
                              floor_specular=scene.ground.specular, rng_seed=args.seed)
    return render_scene(scene, settings, (int(kv.get("scene_dims", 32)),) * 3)


def cmd_oracle(args) -> int:
    scene, kv = io.read_scene_file(args.scene)
    img = _oracle_image(scene, kv, args, args.shadow_samples, args.bounce_samples)
    path = _out(args) / (Path(args.scene).stem + "_oracle.png")
    io.save_png(path, img)
    print(path)
    return 0


def cmd_train(args) -> int:
    from .dataset import load_arrays, load_manifest
    from .models.nvr import NvrConfig
    from .models.train import TrainConfig, train

    data = load_arrays(load_manifest(args.data))
    val = load_arrays(load_manifest(args.val)) if args.val else None
    out = _out(args)
    config = NvrConfig(plus=args.model == "nvr+", seed=args.seed)
    settings = TrainConfig(
        steps=args.steps, batch_size=args.batch_size, lr=args.lr, seed=args.seed,
        log_path=str(out / "train_log.csv"), checkpoint_path=str(out / "model.vxck"),
    )
    result = train(data, config, settings, val)
    print(f"trained {len(result.losses)} steps; final loss {result.losses[-1]:.4f}; "
          f"checkpoint {out / 'model.vxck'}")
    return 0


def _model_render(checkpoint, scene: Scene, kv: dict) -> np.ndarray:
    from .dataset import scene_inputs
    from .models.nvr import NeuralVoxelRenderer

    model = NeuralVoxelRenderer.load(checkpoint)
    v, light, s = scene_inputs(scene, int(kv.get("scene_dims", 32)))
    splat = s[None] if model.config.plus else None
    return model.predict(v[None], light[None], splat)[0]


def cmd_infer(args) -> int:
    scene, kv = io.read_scene_file(args.scene)
    img = _model_render(args.checkpoint, scene, kv)
    path = _out(args) / (Path(args.scene).stem + "_infer.png")
    io.save_png(path, img)
    print(path)
    return 0


def cmd_eval(args) -> int:
    from .metrics import eval_metrics, mean_metrics

    if args.images:
        if len(args.images) != 2:
            raise SystemExit(_usage_error("eval expects exactly two images: PRED TARGET"))
        m = eval_metrics(io.load_image(args.images[0]), io.load_image(args.images[1]))
    elif args.checkpoint and args.data:
        from .dataset import load_arrays, load_manifest
        from .models.nvr import NeuralVoxelRenderer
        from .models.train import predict_arrays

        data = load_arrays(load_manifest(args.data))
        model = NeuralVoxelRenderer.load(args.checkpoint)
        m = mean_metrics(predict_arrays(model, data), data.targets)
    else:
        raise SystemExit(_usage_error("eval needs PRED TARGET or --checkpoint with --data"))
    print(f"mse {m.mse:.6f} dssim {m.dssim:.6f} perceptual {m.perceptual:.6f}")
    return 0


def cmd_edit(args) -> int:
    from .scene import Camera, assemble_scene

    path = Path(args.scene)
    scene, kv = io.read_scene_file(path)
    out = _out(args)
    pose = scene.pose
    scale = list(pose.scale)
    for axis, value in enumerate((args.scale_x, args.scale_y, args.scale_z)):
        if value is not None:
            scale[axis] *= value
    pose = Pose(
        pose.rotation_y if args.rotate is None else args.rotate,
        pose.translation if args.translate is None else tuple(args.translate),
        tuple(scale),
    )
    cam = scene.camera
    if args.elevation is not None:
        cam = Camera(args.elevation, cam.distance, cam.image_dims, cam.focal_length, cam.sensor_width)
    obj = scene.object
    object_ref = kv["object"]
    stem = path.stem + "_edit"
    if args.color is not None:
        data = np.array(obj.data)
        occ = data[..., 3] > 0.5
        data[occ, :3] = np.clip(args.color, 0, 1)
        obj = obj.with_data(data)
        io.save_grid(out / f"{stem}.vxg", obj)
        object_ref = f"{stem}.vxg"
    elif not Path(object_ref).is_absolute():
        object_ref = str((path.parent / object_ref).resolve())
    light = scene.light_position if args.light is None else tuple(args.light)
    edited = Scene(obj, pose, scene.ground, light, cam)
    dims = int(kv.get("scene_dims", 32))
    new_kv = io.scene_kv(edited, object_ref, dims)
    io.write_scene_file(out / f"{stem}.scene", new_kv)
    if args.grid_out:
        world, _ = assemble_scene(edited, (dims,) * 3)
        io.save_grid(args.grid_out, world)
    if args.checkpoint:
        img = _model_render(args.checkpoint, edited, new_kv)
    else:
        img = _oracle_image(edited, new_kv, args)
    io.save_png(out / f"{stem}.png", img)
    print(out / f"{stem}.scene")
    return 0


COMMANDS = {
    "gen-dataset": cmd_gen_dataset, "capture": cmd_capture, "splat": cmd_splat,
    "oracle": cmd_oracle, "train": cmd_train, "infer": cmd_infer, "eval": cmd_eval,
    "edit": cmd_edit,
}


def _usage_error(message: str) -> int:
    print(f"voxelcast: error: {message}", file=sys.stderr)
    return 2


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = _apply_config(parser, argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    except OSError as exc:
        return _usage_error(str(exc))
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except SystemExit as exc:
        return int(exc.code or 0)
    except Exception as exc:  # noqa: BLE001 - report any failure as a diagnostic
        print(f"voxelcast: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

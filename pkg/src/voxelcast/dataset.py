"""Dataset generation with the sampling protocol, and loading for training.

Layout of a dataset directory::

    manifest.jsonl         header line, then one record per sample
    objects/o{split}{i}.vxg      ground-truth colored object
    objects/o{split}{i}_cap.vxg  object colored from its appearance source
    scenes/  targets/  splats/   one scene file, target PNG, splat PNG and
                                 splat depth (RAW1) per sample

Manifest lines are JSON objects with sorted keys. The first has
``"kind": "header"`` and snapshots the generation settings; the others have
``"kind": "sample"``. Paths are relative to the manifest directory.
"""

from __future__ import annotations

import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .capture import AppearanceSource, EmptyCaptureError, capture_object
from .io import (
    atomic_write,
    load_grid,
    load_image,
    read_scene_file,
    save_grid,
    save_png,
    save_raw,
    scene_kv,
    write_scene_file,
)
from .oracle import AreaLight, RenderSettings, render_target
from .procedural import AppearanceSetting, generate_object
from .scene import (
    LIGHT_BOX,
    TRANSLATION_BOX,
    Camera,
    Pose,
    Scene,
    VoxelGrid,
    assemble_scene,
    camera_grid_tensor,
    world_to_camera,
)
from .splat import splat

log = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.jsonl"
SPLITS = ("train", "test")
MAX_INVALID_FRACTION = 0.01


class DatasetError(RuntimeError):
    pass


@dataclass(frozen=True)
class SamplingSpec:
    elevation_train: tuple[float, float] = (5.0, 50.0)
    elevation_test: tuple[float, float] = (15.0, 45.0)
    rotation: tuple[float, float] = (-90.0, 90.0)
    translation: tuple[float, float] = TRANSLATION_BOX
    light_box: tuple[tuple[float, float], ...] = LIGHT_BOX
    views_per_object: int = 5
    sweep_step: float = 10.0
    rng_seed: int = 0
    scene_dims: int = 32
    image_dims: int = 64
    shadow_samples: int = 16
    bounce_samples: int = 4

    def __post_init__(self):
        for name in ("elevation_train", "elevation_test", "rotation", "translation"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"{name}: empty range ({lo}, {hi})")
        for (lo, hi), (elo, ehi) in zip(self.light_box, LIGHT_BOX):
            if lo < elo or hi > ehi or lo > hi:
                raise ValueError(f"light box {self.light_box} outside {LIGHT_BOX}")
        tlo, thi = self.translation
        if tlo < TRANSLATION_BOX[0] or thi > TRANSLATION_BOX[1]:
            raise ValueError(f"translation range outside {TRANSLATION_BOX}")
        for lo, hi in (self.elevation_train, self.elevation_test):
            if lo <= 0 or hi >= 90:
                raise ValueError("elevations must lie strictly between 0 and 90 degrees")
        if self.views_per_object < 1:
            raise ValueError("views_per_object must be >= 1")
        sweep = self.sweep_step * (self.views_per_object - 1)
        if sweep > self.rotation[1] - self.rotation[0]:
            raise ValueError("rotation sweep does not fit in the rotation range")

    def to_dict(self) -> dict:
        return json.loads(json.dumps(asdict(self)))


def object_seed(spec: SamplingSpec, split: str, index: int) -> int:
    """Train objects get even seeds and test objects odd ones, so splits never share one."""
    return (spec.rng_seed << 32) + 2 * index + SPLITS.index(split)


@dataclass(frozen=True)
class ViewSample:
    elevation: float
    rotation_y: float
    translation: tuple[float, float]
    light: tuple[float, float, float]


def sample_views(spec: SamplingSpec, split: str, rng: np.random.Generator) -> list[ViewSample]:
    """Train: independent uniform draws per view. Test: a rotation sweep in
    fixed steps at one elevation, translation and light interpolated between
    two sampled endpoints."""
    n = spec.views_per_object
    lo_t, hi_t = spec.translation
    lbox = np.asarray(spec.light_box)
    if split == "train":
        views = []
        for _ in range(n):
            views.append(ViewSample(
                float(rng.uniform(*spec.elevation_train)),
                float(rng.uniform(*spec.rotation)),
                tuple(float(t) for t in rng.uniform(lo_t, hi_t, 2)),
                tuple(float(v) for v in rng.uniform(lbox[:, 0], lbox[:, 1])),
            ))
        return views
    sweep = spec.sweep_step * (n - 1)
    elevation = float(rng.uniform(*spec.elevation_test))
    start = float(rng.uniform(spec.rotation[0], spec.rotation[1] - sweep))
    t0, t1 = rng.uniform(lo_t, hi_t, 2), rng.uniform(lo_t, hi_t, 2)
    l0, l1 = rng.uniform(lbox[:, 0], lbox[:, 1]), rng.uniform(lbox[:, 0], lbox[:, 1])
    views = []
    for k in range(n):
        a = k / (n - 1) if n > 1 else 0.0
        views.append(ViewSample(
            elevation,
            start + spec.sweep_step * k,
            tuple(float(v) for v in (1 - a) * t0 + a * t1),
            tuple(float(v) for v in (1 - a) * l0 + a * l1),
        ))
    return views


def view_scene(obj: VoxelGrid, view: ViewSample, image_dims: int) -> Scene:
    return Scene(
        obj,
        Pose(view.rotation_y, view.translation),
        light_position=view.light,
        camera=Camera(view.elevation, image_dims=(image_dims, image_dims)),
    )


def render_seed(spec: SamplingSpec, split: str, index: int, view: int) -> int:
    seq = np.random.SeedSequence([spec.rng_seed, SPLITS.index(split), index, view])
    return int(seq.generate_state(1, dtype=np.uint32)[0])


def _render(spec, grid_scene: Scene, seed: int) -> np.ndarray:
    dims = (spec.scene_dims,) * 3
    settings = RenderSettings(
        shadow_samples=spec.shadow_samples, bounce_samples=spec.bounce_samples,
        floor_specular=grid_scene.ground.specular, rng_seed=seed,
    )
    world, _ = assemble_scene(grid_scene, dims)
    light = AreaLight(tuple(grid_scene.light_position))
    return render_target(world, light, grid_scene.camera, settings)


def _object_records(job) -> tuple[list[dict], int, str | None]:
    """Generate every file of one object; returns (records, n_views, error)."""
    out, spec, setting, split, index = job
    out = Path(out)
    rng = np.random.default_rng(np.random.SeedSequence([spec.rng_seed, SPLITS.index(split), index]))
    seed = object_seed(spec, split, index)
    tag = f"{split}{index:05d}"
    n = spec.views_per_object
    try:
        obj = generate_object(seed, setting)
        views = sample_views(spec, split, rng)
        dims = (spec.scene_dims,) * 3

        # the first view is the appearance source
        source_scene = view_scene(obj, views[0], spec.image_dims)
        source_path = f"targets/{tag}_v0.png"
        source_img = _render(spec, source_scene, render_seed(spec, split, index, 0))
        save_png(out / source_path, source_img)
        if setting.kind == "single_color":
            captured = obj
        else:
            source = AppearanceSource(load_image(out / source_path), source_scene.camera)
            captured = capture_object(obj, source_scene.pose, source, dims)

        obj_path = f"objects/o{tag}.vxg"
        cap_path = f"objects/o{tag}_cap.vxg"
        save_grid(out / obj_path, obj)
        save_grid(out / cap_path, captured)

        records = []
        for v, view in enumerate(views):
            truth = view_scene(obj, view, spec.image_dims)
            target_path = f"targets/{tag}_v{v}.png"
            if v > 0:
                save_png(out / target_path, _render(spec, truth, render_seed(spec, split, index, v)))
            scene = view_scene(captured, view, spec.image_dims)
            scene_path = f"scenes/{tag}_v{v}.scene"
            write_scene_file(
                out / scene_path,
                scene_kv(scene, f"../{cap_path}", spec.scene_dims, f"../{source_path}"),
            )
            world, clipped = assemble_scene(scene, dims)
            canvas = splat(world, scene.camera)
            splat_path = f"splats/{tag}_v{v}.png"
            depth_path = f"splats/{tag}_v{v}.depth.raw"
            save_png(out / splat_path, canvas.color)
            save_raw(out / depth_path, np.where(canvas.coverage, canvas.depth, 0.0))
            records.append({
                "kind": "sample", "split": split, "object_index": index, "object_seed": seed,
                "view": v, "scene": scene_path, "voxels": cap_path, "true_object": obj_path,
                "appearance_source": source_path, "splat": splat_path, "splat_depth": depth_path,
                "target": target_path, "light": list(view.light), "elevation": view.elevation,
                "rotation_y": view.rotation_y, "translation": list(view.translation),
                "clipped_voxels": clipped,
            })
        return records, n, None
    except (EmptyCaptureError, ValueError) as exc:
        return [], n, f"{tag}: {exc}"


def _threads() -> int:
    cap = os.environ.get("VOXELCAST_THREADS")
    n = os.cpu_count() or 1
    if cap:
        n = min(n, max(1, int(cap)))
    return n


@dataclass
class DatasetManifest:
    header: dict
    records: list[dict] = field(default_factory=list)
    root: Path = Path(".")

    def path(self, rel: str) -> Path:
        return self.root / rel

    def to_text(self) -> str:
        lines = [json.dumps(self.header, sort_keys=True)]
        lines += [json.dumps(r, sort_keys=True) for r in self.records]
        return "\n".join(lines) + "\n"

    def __len__(self) -> int:
        return len(self.records)


def generate_dataset(out_dir, spec: SamplingSpec | None = None, setting: AppearanceSetting | None = None,
                     n_objects: int = 200, split: str = "train", threads: int | None = None) -> DatasetManifest:
    """Sample, render, capture and splat ``n_objects`` objects into ``out_dir``."""
    spec = spec or SamplingSpec()
    if split not in SPLITS:
        raise ValueError(f"split must be one of {SPLITS}")
    if n_objects < 1:
        raise ValueError("n_objects must be >= 1")
    setting = setting or AppearanceSetting()
    if setting.kind == "textured" and setting.texture_split != split:
        setting = AppearanceSetting(setting.kind, split, setting.patterns)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    jobs = [(str(out), spec, setting, split, i) for i in range(n_objects)]
    threads = threads or _threads()
    if threads > 1 and n_objects > 1:
        with ProcessPoolExecutor(max_workers=min(threads, n_objects)) as pool:
            results = list(pool.map(_object_records, jobs))
    else:
        results = [_object_records(job) for job in jobs]

    records, errors, total = [], [], 0
    for recs, n, err in results:
        total += n
        records.extend(recs)
        if err:
            log.warning("invalid sample: %s", err)
            errors.append(err)
    invalid = total - len(records)
    if invalid > MAX_INVALID_FRACTION * total:
        raise DatasetError(f"{invalid} of {total} samples invalid (limit 1%): {errors[:5]}")
    header = {
        "kind": "header", "format": "voxelcast-manifest", "version": 1, "split": split,
        "n_objects": n_objects, "setting": asdict(setting), "spec": spec.to_dict(),
        "invalid": errors,
    }
    manifest = DatasetManifest(header, records, out)
    atomic_write(out / MANIFEST_NAME, manifest.to_text().encode("utf-8"))
    return manifest


def load_manifest(path) -> DatasetManifest:
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST_NAME
    lines = [ln for ln in path.read_text(encoding="utf-8").splitlines() if ln.strip()]
    if not lines:
        raise DatasetError(f"{path}: empty manifest")
    header = json.loads(lines[0])
    if header.get("kind") != "header":
        raise DatasetError(f"{path}: first line is not a header")
    records = [json.loads(ln) for ln in lines[1:]]
    for r in records:
        if r.get("kind") != "sample":
            raise DatasetError(f"{path}: unexpected record kind {r.get('kind')!r}")
    return DatasetManifest(header, records, path.parent)


@dataclass
class SampleArrays:
    """Network-ready tensors. Voxels are stored as uint8 (colors and occupancy
    are multiples of 1/255) and converted per batch."""

    voxels: np.ndarray
    lights: np.ndarray
    splats: np.ndarray
    targets: np.ndarray
    object_ids: np.ndarray

    def __len__(self) -> int:
        return len(self.lights)

    def batch(self, idx) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        v = self.voxels[idx].astype(np.float32) / 255.0
        return v, self.lights[idx], self.splats[idx], self.targets[idx]

    def subset(self, idx) -> "SampleArrays":
        return SampleArrays(self.voxels[idx], self.lights[idx], self.splats[idx],
                            self.targets[idx], self.object_ids[idx])


def scene_inputs(scene: Scene, scene_dims: int = 32) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Camera-frame voxel tensor, light vector and splat image for one scene."""
    world, _ = assemble_scene(scene, (scene_dims,) * 3)
    voxels = camera_grid_tensor(world_to_camera(world, scene.camera))
    canvas = splat(world, scene.camera)
    return voxels, np.asarray(scene.light_position, dtype=np.float32), canvas.color


def load_arrays(manifest: DatasetManifest, object_transform=None) -> SampleArrays:
    """Build network inputs for every record.

    Voxel tensors are recomputed from the scene files. When
    ``object_transform`` is given it maps each object grid to a modified one
    before assembly, and the splat image is recomputed from the result.
    """
    if not manifest.records:
        raise DatasetError("manifest has no samples")
    dims = int(manifest.header["spec"]["scene_dims"])
    vox, lights, splats, targets, ids = [], [], [], [], []
    cache: dict[str, VoxelGrid] = {}
    for r in manifest.records:
        scene, _ = read_scene_file(manifest.path(r["scene"]))
        if object_transform is not None:
            key = r["voxels"]
            if key not in cache:
                cache[key] = object_transform(scene.object)
            scene = Scene(cache[key], scene.pose, scene.ground, scene.light_position, scene.camera)
            v, light, s = scene_inputs(scene, dims)
        else:
            v, light, _ = scene_inputs(scene, dims)
            s = load_image(manifest.path(r["splat"]))
        vox.append(np.round(v * 255.0).astype(np.uint8))
        lights.append(light)
        splats.append(s)
        targets.append(load_image(manifest.path(r["target"])))
        ids.append(r["object_seed"])
    return SampleArrays(np.stack(vox), np.stack(lights), np.stack(splats).astype(np.float32),
                        np.stack(targets).astype(np.float32), np.asarray(ids))


def load_object(manifest: DatasetManifest, record: dict) -> VoxelGrid:
    return load_grid(manifest.path(record["voxels"]))

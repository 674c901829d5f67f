"""File formats: VXG1 voxel grids, images, and key-value scene documents.

VXG1 layout (all little-endian)::

    b"VXG1" | nx ny nz channels : uint32 | voxel_size : float32
    | origin x y z : float32 | data : float32[nx][ny][nz][channels]

Raw float32 rasters use the same idea with magic ``b"RAW1"`` followed by
``height width channels`` as uint32.
"""

from __future__ import annotations

import os
import struct
import tempfile
from pathlib import Path

import numpy as np
from PIL import Image

from .scene import Camera, Ground, Pose, Scene, VoxelGrid

VXG_MAGIC = b"VXG1"
RAW_MAGIC = b"RAW1"
_VXG_HEADER = struct.Struct("<4s4I4f")
_RAW_HEADER = struct.Struct("<4s3I")


def atomic_write(path, payload: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def encode_volume(data: np.ndarray, origin, voxel_size: float) -> bytes:
    data = np.asarray(data, dtype="<f4")
    if data.ndim == 3:
        data = data[..., None]
    nx, ny, nz, ch = data.shape
    header = _VXG_HEADER.pack(VXG_MAGIC, nx, ny, nz, ch, voxel_size, *origin)
    return header + np.ascontiguousarray(data).tobytes()


def decode_volume(payload: bytes) -> tuple[np.ndarray, tuple, float]:
    if len(payload) < _VXG_HEADER.size:
        raise ValueError("truncated VXG1 file")
    magic, nx, ny, nz, ch, vs, ox, oy, oz = _VXG_HEADER.unpack_from(payload)
    if magic != VXG_MAGIC:
        raise ValueError(f"bad magic {magic!r}, expected {VXG_MAGIC!r}")
    expected = nx * ny * nz * ch * 4
    body = payload[_VXG_HEADER.size:]
    if len(body) != expected:
        raise ValueError(f"VXG1 body has {len(body)} bytes, expected {expected}")
    data = np.frombuffer(body, dtype="<f4").reshape(nx, ny, nz, ch).astype(np.float32)
    return data, (ox, oy, oz), vs


def save_grid(path, grid: VoxelGrid) -> None:
    atomic_write(path, encode_volume(grid.data, grid.origin, grid.voxel_size))


def load_grid(path) -> VoxelGrid:
    data, origin, vs = decode_volume(Path(path).read_bytes())
    if data.shape[-1] != 4:
        raise ValueError(f"{path}: expected 4 channels, found {data.shape[-1]}")
    return VoxelGrid(data, origin, vs)


def save_mask(path, mask: np.ndarray, origin, voxel_size: float) -> None:
    atomic_write(path, encode_volume(mask.astype(np.float32), origin, voxel_size))


def load_mask(path) -> np.ndarray:
    data, _, _ = decode_volume(Path(path).read_bytes())
    return data[..., 0] > 0.5


def image_to_png_bytes(image: np.ndarray) -> bytes:
    import io as _io

    arr = np.clip(np.round(np.asarray(image) * 255.0), 0, 255).astype(np.uint8)
    buf = _io.BytesIO()
    Image.fromarray(arr, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def save_png(path, image: np.ndarray) -> None:
    atomic_write(path, image_to_png_bytes(image))


def save_raw(path, raster: np.ndarray) -> None:
    raster = np.asarray(raster, dtype="<f4")
    if raster.ndim == 2:
        raster = raster[..., None]
    h, w, ch = raster.shape
    atomic_write(path, _RAW_HEADER.pack(RAW_MAGIC, h, w, ch) + raster.tobytes())


def load_raw(path) -> np.ndarray:
    payload = Path(path).read_bytes()
    magic, h, w, ch = _RAW_HEADER.unpack_from(payload)
    if magic != RAW_MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    data = np.frombuffer(payload[_RAW_HEADER.size:], dtype="<f4").reshape(h, w, ch)
    return data.astype(np.float32)


def load_image(path) -> np.ndarray:
    """Load an 8-bit PNG or a RAW1 float32 raster as float32 RGB in [0, 1]."""
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head == RAW_MAGIC:
        img = load_raw(path)
        if img.shape[-1] == 1:
            img = np.repeat(img, 3, axis=-1)
        return np.clip(img[..., :3], 0, 1)
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.float32) / 255.0


# ---------------------------------------------------------------- key-value


def parse_kv(text: str) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ValueError(f"line {lineno}: empty key")
        out[key] = value
    return out


def format_kv(values: dict) -> str:
    lines = []
    for key, value in values.items():
        if isinstance(value, (tuple, list)):
            value = " ".join(_fmt(v) for v in value)
        else:
            value = _fmt(value)
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(round(v, 9))
    return str(v)


def _floats(text: str, n: int | None = None) -> tuple[float, ...]:
    vals = tuple(float(t) for t in text.split())
    if n is not None and len(vals) != n:
        raise ValueError(f"expected {n} numbers, got {text!r}")
    return vals


SCENE_KEYS = {
    "object", "appearance", "rotation_y", "translation", "scale", "light",
    "elevation", "distance", "image", "ground_layers", "ground_color",
    "ground_specular", "scene_dims",
}


def read_scene_file(path) -> tuple[Scene, dict]:
    """Load a scene document; returns the Scene and the raw key-value map.

    Relative paths inside the document resolve against its directory.
    """
    path = Path(path)
    kv = parse_kv(path.read_text(encoding="utf-8"))
    unknown = set(kv) - SCENE_KEYS
    if unknown:
        raise ValueError(f"{path}: unknown keys {sorted(unknown)}")
    if "object" not in kv:
        raise ValueError(f"{path}: missing 'object'")
    base = path.parent
    obj = load_grid(base / kv["object"])
    pose = Pose(
        rotation_y=float(kv.get("rotation_y", 0.0)),
        translation=_floats(kv.get("translation", "0 0"), 2),
        scale=_floats(kv.get("scale", "1 1 1"), 3),
    )
    ground = Ground(
        layers=int(kv.get("ground_layers", 2)),
        color=_floats(kv.get("ground_color", "0.6 0.6 0.6"), 3),
        specular=float(kv.get("ground_specular", 0.3)),
    )
    width, height = (int(v) for v in _floats(kv.get("image", "64 64"), 2))
    camera = Camera(
        elevation=float(kv.get("elevation", 30.0)),
        distance=float(kv.get("distance", 3.0)),
        image_dims=(width, height),
    )
    light = _floats(kv.get("light", "0 2.75 0"), 3)
    scene = Scene(obj, pose, ground, light, camera)
    return scene, kv


def scene_kv(scene: Scene, object_path: str, scene_dims: int = 32, appearance: str | None = None) -> dict:
    kv = {"object": object_path}
    if appearance:
        kv["appearance"] = appearance
    kv.update(
        rotation_y=float(scene.pose.rotation_y),
        translation=tuple(float(t) for t in scene.pose.translation),
        scale=tuple(float(s) for s in scene.pose.scale),
        light=tuple(float(v) for v in scene.light_position),
        elevation=float(scene.camera.elevation),
        distance=float(scene.camera.distance),
        image=scene.camera.image_dims,
        ground_layers=scene.ground.layers,
        ground_color=tuple(float(c) for c in scene.ground.color),
        ground_specular=float(scene.ground.specular),
        scene_dims=scene_dims,
    )
    return kv


def write_scene_file(path, kv: dict) -> None:
    atomic_write(path, format_kv(kv).encode("utf-8"))

"""Versioned binary checkpoint of named float32 arrays.

Layout (little-endian)::

    b"VXCK" | version:u32 | meta_len:u32 | meta (UTF-8 JSON) | count:u32
    then per record: name_len:u16 | name | ndim:u8 | dims:u32*ndim | float32 data
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..io import atomic_write

MAGIC = b"VXCK"
VERSION = 1


def encode_checkpoint(arrays: dict[str, np.ndarray], meta: dict | None = None) -> bytes:
    meta_bytes = json.dumps(meta or {}, sort_keys=True).encode("utf-8")
    parts = [MAGIC, struct.pack("<II", VERSION, len(meta_bytes)), meta_bytes,
             struct.pack("<I", len(arrays))]
    for name in sorted(arrays):
        arr = np.asarray(arrays[name], dtype="<f4", order="C")
        raw = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw)) + raw)
        parts.append(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes())
    return b"".join(parts)


def decode_checkpoint(payload: bytes) -> tuple[dict[str, np.ndarray], dict]:
    if payload[:4] != MAGIC:
        raise ValueError(f"not a checkpoint (magic {payload[:4]!r})")
    version, meta_len = struct.unpack_from("<II", payload, 4)
    if version != VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    pos = 12
    meta = json.loads(payload[pos:pos + meta_len].decode("utf-8"))
    pos += meta_len
    (count,) = struct.unpack_from("<I", payload, pos)
    pos += 4
    arrays = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", payload, pos)
        pos += 2
        name = payload[pos:pos + nlen].decode("utf-8")
        pos += nlen
        (ndim,) = struct.unpack_from("<B", payload, pos)
        pos += 1
        shape = struct.unpack_from(f"<{ndim}I", payload, pos)
        pos += 4 * ndim
        size = int(np.prod(shape)) if ndim else 1
        arrays[name] = np.frombuffer(payload, dtype="<f4", count=size, offset=pos).reshape(shape).copy()
        pos += 4 * size
    if pos != len(payload):
        raise ValueError("trailing bytes after checkpoint records")
    return arrays, meta


def save_checkpoint(path, arrays: dict[str, np.ndarray], meta: dict | None = None) -> None:
    atomic_write(path, encode_checkpoint(arrays, meta))


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    return decode_checkpoint(Path(path).read_bytes())

"""Binary tensor container.

Layout (all integers little-endian)::

    b"CGCN"  u32 version  u32 count
    count x { u16 name_len, name (UTF-8), u8 rank, rank x u64 extent, float32 data }

Network specs and other metadata go into a JSON file next to the container
(same stem, ``.json`` suffix).
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import FormatError

MAGIC = b"CGCN"
VERSION = 1


def save_checkpoint(path, tensors: dict[str, np.ndarray], meta: dict | None = None):
    path = Path(path)
    parts = [MAGIC, struct.pack("<II", VERSION, len(tensors))]
    for name, arr in tensors.items():
        arr = np.ascontiguousarray(arr, dtype="<f4")
        raw = name.encode("utf-8")
        if len(raw) > 0xFFFF:
            raise ValueError(f"tensor name too long: {name[:40]}...")
        parts.append(struct.pack("<H", len(raw)) + raw)
        parts.append(struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        parts.append(arr.tobytes())
    path.write_bytes(b"".join(parts))
    if meta is not None:
        meta_path(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def meta_path(path) -> Path:
    return Path(path).with_suffix(".json")


def load_checkpoint(path) -> dict[str, np.ndarray]:
    buf = Path(path).read_bytes()
    if buf[:4] != MAGIC:
        raise FormatError(f"{path}: bad magic {buf[:4]!r}, expected {MAGIC!r}")
    pos = 4

    def take(fmt):
        nonlocal pos
        size = struct.calcsize(fmt)
        if pos + size > len(buf):
            raise FormatError(f"{path}: truncated checkpoint")
        vals = struct.unpack_from(fmt, buf, pos)
        pos += size
        return vals

    version, count = take("<II")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {version}")
    out = {}
    for _ in range(count):
        (nlen,) = take("<H")
        if pos + nlen > len(buf):
            raise FormatError(f"{path}: truncated checkpoint")
        name = buf[pos:pos + nlen].decode("utf-8")
        pos += nlen
        (rank,) = take("<B")
        shape = take(f"<{rank}Q")
        n = int(np.prod(shape)) * 4
        if pos + n > len(buf):
            raise FormatError(f"{path}: truncated data for tensor {name!r}")
        out[name] = np.frombuffer(buf, dtype="<f4", count=n // 4, offset=pos).reshape(shape).astype(np.float32)
        pos += n
    if pos != len(buf):
        raise FormatError(f"{path}: {len(buf) - pos} trailing bytes")
    return out


def load_meta(path) -> dict:
    p = meta_path(path)
    if not p.exists():
        raise FormatError(f"{path}: missing metadata file {p.name}")
    return json.loads(p.read_text())

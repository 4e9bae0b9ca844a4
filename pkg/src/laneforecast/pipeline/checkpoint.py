"""Versioned binary checkpoints: a name -> shape -> fp64 payload table.

Layout (all integers little-endian)::

    magic      8 bytes   b"LGCNCKPT"
    version    u32       currently 1
    meta_len   u32       length of the UTF-8 JSON metadata that follows
    meta       bytes     JSON object (model config, training info)
    count      u32       number of tensors
    count times:
        name_len  u32
        name      bytes   UTF-8 parameter path, e.g. "map_net.blocks.0.conv.w_self"
        ndim      u32
        dims      u64 * ndim
        payload   f64 * prod(dims), row-major
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"LGCNCKPT"
VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, state: dict[str, np.ndarray], meta: dict | None = None) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    meta_bytes = json.dumps(meta or {}, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(meta_bytes)))
        fh.write(meta_bytes)
        fh.write(struct.pack("<I", len(state)))
        for name, value in state.items():
            arr = np.ascontiguousarray(value, dtype="<f8")
            raw = name.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
            fh.write(arr.tobytes())


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    data = Path(path).read_bytes()
    if data[:8] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    pos = 8

    def take(fmt):
        nonlocal pos
        size = struct.calcsize(fmt)
        if pos + size > len(data):
            raise CheckpointError(f"{path}: truncated")
        out = struct.unpack_from(fmt, data, pos)
        pos += size
        return out

    version, meta_len = take("<II")
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    meta = json.loads(data[pos:pos + meta_len].decode("utf-8"))
    pos += meta_len
    (count,) = take("<I")
    state = {}
    for _ in range(count):
        (name_len,) = take("<I")
        name = data[pos:pos + name_len].decode("utf-8")
        pos += name_len
        (ndim,) = take("<I")
        dims = take(f"<{ndim}Q") if ndim else ()
        n = int(np.prod(dims)) if dims else 1
        if pos + 8 * n > len(data):
            raise CheckpointError(f"{path}: truncated payload for {name}")
        state[name] = np.frombuffer(data, dtype="<f8", count=n, offset=pos).reshape(dims).copy()
        pos += 8 * n
    return state, meta

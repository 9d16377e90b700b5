"""Versioned little-endian parameter container.

Layout::

    b"CKPT" | u16 version | u32 entry count
    per entry: u32 name length | utf-8 name | u8 ndim | ndim x u32 dims | prod(dims) x f64
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"CKPT"
VERSION = 1


class CheckpointError(ValueError):
    pass


def dumps_state(state: dict[str, np.ndarray]) -> bytes:
    out = [MAGIC, struct.pack("<HI", VERSION, len(state))]
    for name in sorted(state):
        arr = np.ascontiguousarray(state[name], dtype="<f8")
        raw = name.encode("utf-8")
        out.append(struct.pack("<I", len(raw)))
        out.append(raw)
        out.append(struct.pack("<B", arr.ndim))
        out.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        out.append(arr.tobytes())
    return b"".join(out)


def loads_state(buf: bytes) -> dict[str, np.ndarray]:
    mv = memoryview(buf)
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(mv):
            raise CheckpointError(f"truncated checkpoint at byte {pos}")
        chunk = mv[pos:pos + n]
        pos += n
        return chunk

    if bytes(take(4)) != MAGIC:
        raise CheckpointError("bad checkpoint magic")
    version, count = struct.unpack("<HI", take(6))
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    state = {}
    for _ in range(count):
        (n,) = struct.unpack("<I", take(4))
        name = bytes(take(n)).decode("utf-8")
        (ndim,) = struct.unpack("<B", take(1))
        dims = struct.unpack(f"<{ndim}I", take(4 * ndim))
        size = int(np.prod(dims)) if ndim else 1
        state[name] = np.frombuffer(bytes(take(8 * size)), dtype="<f8").reshape(dims).astype(np.float64)
    if pos != len(mv):
        raise CheckpointError(f"{len(mv) - pos} trailing bytes after checkpoint")
    return state


def save_checkpoint(module_or_state, path) -> None:
    state = module_or_state if isinstance(module_or_state, dict) else module_or_state.state_dict()
    Path(path).write_bytes(dumps_state(state))


def load_checkpoint(path) -> dict[str, np.ndarray]:
    return loads_state(Path(path).read_bytes())

"""Binary wire format for V2X plane messages.

Little-endian layout::

    b"CHFF" | u16 version | u32 sender | 4 x f32 pose (x, y, z, yaw) | u8 plane count (= 2)
    per plane: u8 axis | u16 H | u16 W | u16 F | u32 kept | kept x u32 indices | kept x F x f32 values

Axis codes: 0 = xy, 1 = xz, 2 = yz. Only xz then yz are legal in a message.
Decoding is total: any malformed input raises a DecodeError subclass.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..scene.types import Pose
from .sparsify import SEND_AXES, SparsePlanePayload

MAGIC = b"CHFF"
VERSION = 1
AXIS_CODES = {"xy": 0, "xz": 1, "yz": 2}
CODE_AXES = {v: k for k, v in AXIS_CODES.items()}
HEADER = struct.Struct("<4sHI4fB")
PLANE_HEADER = struct.Struct("<BHHHI")


class DecodeError(ValueError):
    """Base of all structured decode failures; ``offset`` is the byte position."""

    def __init__(self, msg: str, offset: int = 0):
        super().__init__(f"{msg} (at byte {offset})")
        self.offset = offset


class BadMagic(DecodeError):
    pass


class Truncated(DecodeError):
    pass


class VersionMismatch(DecodeError):
    pass


class IndexOutOfRange(DecodeError):
    pass


class MalformedMessage(DecodeError):
    """Invalid content: pose, plane count/axis, unsorted indices, trailing bytes."""


@dataclass
class V2XMessage:
    sender: int
    pose: Pose
    xz: SparsePlanePayload
    yz: SparsePlanePayload
    version: int = VERSION

    def __post_init__(self):
        if self.xz.axis != "xz" or self.yz.axis != "yz":
            raise ValueError(f"message planes must be (xz, yz), got ({self.xz.axis}, {self.yz.axis})")

    @property
    def payloads(self) -> tuple[SparsePlanePayload, SparsePlanePayload]:
        return self.xz, self.yz

    def replace_payloads(self, xz, yz) -> "V2XMessage":
        return V2XMessage(self.sender, self.pose, xz, yz, self.version)


def _wire_yaw(yaw: float) -> float:
    """f32 yaw that stays inside (-pi, pi] so decoding does not re-wrap it."""
    y = np.float32(yaw)
    if float(y) > np.pi:
        y = np.nextafter(np.float32(np.pi), np.float32(0.0))
    elif float(y) <= -np.pi:
        y = np.nextafter(np.float32(-np.pi), np.float32(0.0))
    return float(y)


def encode_message(msg: V2XMessage) -> bytes:
    p = msg.pose
    out = [HEADER.pack(MAGIC, msg.version, msg.sender, p.x, p.y, p.z, _wire_yaw(p.yaw), 2)]
    for pl in msg.payloads:
        pl.validate()
        H, W = pl.dims
        out.append(PLANE_HEADER.pack(AXIS_CODES[pl.axis], H, W, pl.features, pl.kept))
        out.append(pl.indices.astype("<u4").tobytes())
        out.append(pl.values.astype("<f4").tobytes())
    return b"".join(out)


def decode_message(buf: bytes) -> V2XMessage:
    buf = bytes(buf)
    pos = 0

    def take(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(buf):
            raise Truncated(f"need {n} bytes, {len(buf) - pos} left", pos)
        chunk = buf[pos:pos + n]
        pos += n
        return chunk

    if buf[:4] != MAGIC[:min(len(buf), 4)]:
        raise BadMagic(f"bad magic {buf[:4]!r}", 0)
    head = take(HEADER.size)
    magic, version, sender, x, y, z, yaw, count = HEADER.unpack(head)
    if magic != MAGIC:
        raise BadMagic(f"bad magic {magic!r}", 0)
    if version != VERSION:
        raise VersionMismatch(f"unsupported version {version}, expected {VERSION}", 4)
    if not np.all(np.isfinite([x, y, z, yaw])) or not -np.pi < yaw <= np.pi:
        # the encoder only emits finite poses with a wrapped yaw
        raise MalformedMessage(f"invalid pose ({x}, {y}, {z}, {yaw})", 10)
    if count != 2:
        raise MalformedMessage(f"plane count {count}, expected 2", HEADER.size - 1)
    planes = []
    for want in SEND_AXES:
        start = pos
        code, H, W, F, kept = PLANE_HEADER.unpack(take(PLANE_HEADER.size))
        axis = CODE_AXES.get(code)
        if axis != want:
            raise MalformedMessage(f"plane axis code {code}, expected {AXIS_CODES[want]} ({want})", start)
        if kept > H * W:
            raise MalformedMessage(f"kept {kept} exceeds {H}x{W} cells", start)
        idx_at = pos
        idx = np.frombuffer(take(4 * kept), dtype="<u4")
        if kept and int(idx.max()) >= H * W:
            raise IndexOutOfRange(f"cell index {int(idx.max())} >= {H * W}", idx_at)
        if kept > 1 and np.any(idx[1:] <= idx[:-1]):
            raise MalformedMessage("cell indices not strictly increasing", idx_at)
        vals = np.frombuffer(take(4 * kept * F), dtype="<f4").reshape(kept, F)
        planes.append(SparsePlanePayload(axis, (H, W), F, idx.astype(np.uint32), vals.astype(np.float32)))
    if pos != len(buf):
        raise MalformedMessage(f"{len(buf) - pos} trailing bytes", pos)
    return V2XMessage(sender, Pose(x, y, z, yaw), planes[0], planes[1], version)


def messages_equal(a: V2XMessage, b: V2XMessage) -> bool:
    """Bit-level equality of the wire content."""
    return encode_message(a) == encode_message(b)


def dump_message(msg: V2XMessage, path) -> int:
    data = encode_message(msg)
    Path(path).write_bytes(data)
    return len(data)


def hexdump(data: bytes, width: int = 16) -> str:
    lines = []
    for off in range(0, len(data), width):
        chunk = data[off:off + width]
        hx = " ".join(f"{b:02x}" for b in chunk)
        txt = "".join(chr(b) if 32 <= b < 127 else "." for b in chunk)
        lines.append(f"{off:08x}  {hx:<{3 * width - 1}}  |{txt}|")
    return "\n".join(lines)

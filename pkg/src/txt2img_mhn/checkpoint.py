"""Named float32 array container (``THN1``).

Layout, all integers little-endian::

    b"THN1"  u16 version  u32 count
    repeated count times:
        u16 name_len  name (UTF-8)  u8 rank  u32 dim * rank  float32 * prod(dims)
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Mapping

import numpy as np

__all__ = ["CheckpointFormatError", "MAGIC", "VERSION", "save_checkpoint", "load_checkpoint", "dumps", "loads"]

MAGIC = b"THN1"
VERSION = 1


class CheckpointFormatError(ValueError):
    """Malformed container; ``offset`` is the byte position where parsing failed."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


def dumps(arrays: Mapping[str, np.ndarray]) -> bytes:
    parts = [MAGIC, struct.pack("<HI", VERSION, len(arrays))]
    for name, arr in arrays.items():
        raw = name.encode("utf-8")
        if len(raw) > 0xFFFF:
            raise ValueError(f"array name too long: {name[:40]}...")
        a = np.asarray(arr, dtype="<f4", order="C")
        if a.ndim > 0xFF:
            raise ValueError(f"{name}: rank {a.ndim} too large")
        parts.append(struct.pack("<H", len(raw)) + raw + struct.pack("<B", a.ndim))
        parts.append(struct.pack(f"<{a.ndim}I", *a.shape))
        parts.append(a.tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.buf):
            raise CheckpointFormatError(f"truncated while reading {what}: need {n} bytes, {len(self.buf) - self.pos} left", self.pos)
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def loads(buf: bytes) -> dict[str, np.ndarray]:
    r = _Reader(buf)
    if r.take(4, "magic") != MAGIC:
        raise CheckpointFormatError("bad magic, not a THN1 checkpoint", 0)
    (version,) = r.unpack("<H", "version")
    if version != VERSION:
        raise CheckpointFormatError(f"unsupported version {version}", 4)
    (count,) = r.unpack("<I", "array count")
    out: dict[str, np.ndarray] = {}
    for _ in range(count):
        at = r.pos
        (name_len,) = r.unpack("<H", "name length")
        try:
            name = r.take(name_len, "name").decode("utf-8")
        except UnicodeDecodeError:
            raise CheckpointFormatError("array name is not UTF-8", at + 2) from None
        if name in out:
            raise CheckpointFormatError(f"duplicate array name {name!r}", at)
        (rank,) = r.unpack("<B", "rank")
        dims = r.unpack(f"<{rank}I", f"dims of {name!r}")
        size = int(np.prod(dims, dtype=np.int64))
        payload = r.take(4 * size, f"payload of {name!r}")
        out[name] = np.frombuffer(payload, dtype="<f4").reshape(dims).astype(np.float32)
    if r.pos != len(buf):
        raise CheckpointFormatError(f"{len(buf) - r.pos} trailing bytes after the last array", r.pos)
    return out


def save_checkpoint(path, arrays: Mapping[str, np.ndarray]) -> None:
    Path(path).write_bytes(dumps(arrays))


def load_checkpoint(path) -> dict[str, np.ndarray]:
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"checkpoint not found: {p}")
    return loads(p.read_bytes())

"""Binary container format shared by encoder and density artifacts.

Layout: 4-byte magic, u32 format version, 16-byte kind tag, then scalars
and little-endian float64 arrays in the order each kind declares. Loaders
reject unknown magic, version, or kind tags.
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"FTRK"
VERSION = 1


class ContainerError(IOError):
    """Unreadable or unsupported model container."""


def write_header(fh, kind: str) -> None:
    tag = kind.encode("ascii")
    if len(tag) > 16:
        raise ValueError(f"kind tag too long: {kind!r}")
    fh.write(MAGIC)
    fh.write(struct.pack("<I", VERSION))
    fh.write(tag.ljust(16, b"\0"))


def read_header(fh, expected_kinds) -> str:
    magic = fh.read(4)
    if magic != MAGIC:
        raise ContainerError(f"bad magic {magic!r}, expected {MAGIC!r}")
    (version,) = struct.unpack("<I", fh.read(4))
    if version != VERSION:
        raise ContainerError(f"unsupported container version {version}")
    kind = fh.read(16).rstrip(b"\0").decode("ascii")
    if kind not in expected_kinds:
        raise ContainerError(f"unknown kind tag {kind!r}")
    return kind


def write_u32(fh, value: int) -> None:
    fh.write(struct.pack("<I", int(value)))


def read_u32(fh) -> int:
    return struct.unpack("<I", fh.read(4))[0]


def write_u64(fh, value: int) -> None:
    fh.write(struct.pack("<Q", int(value)))


def read_u64(fh) -> int:
    return struct.unpack("<Q", fh.read(8))[0]


def write_f64(fh, value: float) -> None:
    fh.write(struct.pack("<d", float(value)))


def read_f64(fh) -> float:
    return struct.unpack("<d", fh.read(8))[0]


def write_array(fh, arr: np.ndarray) -> None:
    fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def read_array(fh, shape) -> np.ndarray:
    count = int(np.prod(shape))
    buf = fh.read(count * 8)
    if len(buf) != count * 8:
        raise ContainerError(f"truncated array: expected {count * 8} bytes, got {len(buf)}")
    return np.frombuffer(buf, dtype="<f8").reshape(shape).copy()

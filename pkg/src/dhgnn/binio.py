"""Helpers for the little-endian binary container files."""

from __future__ import annotations

import struct
from typing import BinaryIO

import numpy as np


class MagicMismatch(ValueError):
    """File does not start with the expected 4-byte magic."""


def write_u32(f: BinaryIO, x: int) -> None:
    f.write(struct.pack("<I", x))


def write_u64(f: BinaryIO, x: int) -> None:
    f.write(struct.pack("<Q", x))


def read_exact(f: BinaryIO, n: int) -> bytes:
    buf = f.read(n)
    if len(buf) != n:
        raise ValueError(f"truncated file: wanted {n} bytes, got {len(buf)}")
    return buf


def read_u32(f: BinaryIO) -> int:
    return struct.unpack("<I", read_exact(f, 4))[0]


def read_u64(f: BinaryIO) -> int:
    return struct.unpack("<Q", read_exact(f, 8))[0]


def expect_magic(f: BinaryIO, magic: bytes, what: str) -> None:
    got = read_exact(f, len(magic))
    if got != magic:
        raise MagicMismatch(f"{what}: expected magic {magic!r}, found {got!r}")


def write_f64_block(f: BinaryIO, arr: np.ndarray) -> None:
    f.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def read_f64_block(f: BinaryIO, rows: int, cols: int) -> np.ndarray:
    buf = read_exact(f, 8 * rows * cols)
    return np.frombuffer(buf, dtype="<f8").reshape(rows, cols).copy()

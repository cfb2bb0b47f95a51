"""SGNM dense-matrix files and the FNV-1a checksum used by manifests.

Layout (all little-endian)::

    offset  size  field
    0       4     magic  b"SGNM"
    4       1     version (= 1)
    5       8     n_rows (uint64)
    13      8     n_cols (uint64)
    21      4*n   float32 values, row-major

Matrices are held as float64 in memory; writing rounds each value to the
nearest float32 once, reading widens back to float64.
"""

from __future__ import annotations

import os
import struct
from pathlib import Path

import numpy as np
from numba import njit

MAGIC = b"SGNM"
VERSION = 1
_HEADER = struct.Struct("<4sBQQ")

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3


class FormatError(ValueError):
    """Raised when a file does not follow the SGNM layout."""


def encode(matrix: np.ndarray) -> bytes:
    m = np.asarray(matrix)
    if m.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {m.shape}")
    header = _HEADER.pack(MAGIC, VERSION, m.shape[0], m.shape[1])
    body = np.ascontiguousarray(m, dtype="<f4").tobytes()
    return header + body


def decode(buf: bytes) -> np.ndarray:
    if len(buf) < _HEADER.size:
        raise FormatError("truncated SGNM header")
    magic, version, n_rows, n_cols = _HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"unsupported SGNM version {version}")
    expected = _HEADER.size + 4 * n_rows * n_cols
    if len(buf) != expected:
        raise FormatError(f"SGNM payload size {len(buf)} != expected {expected}")
    data = np.frombuffer(buf, dtype="<f4", offset=_HEADER.size)
    return data.astype(np.float64).reshape(n_rows, n_cols)


def write_atomic(path: str | os.PathLike, data: bytes) -> None:
    """Write via a ``.tmp`` sibling and rename; a crash leaves only the ``.tmp``."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(data)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)


def save(path: str | os.PathLike, matrix: np.ndarray) -> bytes:
    """Write ``matrix`` to ``path``; returns the bytes written."""
    data = encode(matrix)
    write_atomic(path, data)
    return data


def load(path: str | os.PathLike) -> np.ndarray:
    with open(path, "rb") as fh:
        return decode(fh.read())


@njit(cache=True)
def _fnv1a(data):
    h = np.uint64(FNV_OFFSET)
    prime = np.uint64(FNV_PRIME)
    for b in data:
        h = (h ^ np.uint64(b)) * prime
    return h


def fnv1a_64(data: bytes) -> int:
    """64-bit FNV-1a over ``data``."""
    return int(_fnv1a(np.frombuffer(data, dtype=np.uint8)))

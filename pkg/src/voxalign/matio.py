"""Bit-exact binary matrix serialization (MAT1 format).

Layout, all little-endian:

====== ======= =====================================
bytes  content
====== ======= =====================================
0-3    magic   ``BMC1``
4      version ``1``
5      dtype   ``1`` (float64; the only value accepted)
6-7    padding zero
8-15   rows    unsigned 64-bit
16-23  cols    unsigned 64-bit
24-    data    rows*cols float64 values, row-major
====== ======= =====================================

``load_matrix(save_matrix(M))`` reproduces ``M`` bit for bit, including
the sign of zero. Loads reject NaN/Inf payloads, so every matrix read
from disk satisfies the finiteness invariant.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import FormatError, ShapeMismatch

MAGIC = b"BMC1"
_HEADER = struct.Struct("<4sBBHQQ")
HEADER_SIZE = _HEADER.size  # 24


def save_matrix(matrix, path) -> None:
    """Write a 2-D float64 matrix to `path` in MAT1 format."""
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim != 2:
        raise ShapeMismatch(f"save_matrix expects a 2-D array, got shape {m.shape}")
    if m.shape[0] < 1 or m.shape[1] < 1:
        raise ShapeMismatch(f"save_matrix expects non-empty dimensions, got {m.shape}")
    header = _HEADER.pack(MAGIC, 1, 1, 0, m.shape[0], m.shape[1])
    payload = np.ascontiguousarray(m, dtype="<f8").tobytes()
    Path(path).write_bytes(header + payload)


def load_matrix(path) -> np.ndarray:
    """Read a MAT1 file; malformed input raises FormatError with a byte offset."""
    raw = Path(path).read_bytes()
    if len(raw) < HEADER_SIZE:
        raise FormatError("file shorter than the 24-byte header", offset=len(raw))
    magic, version, dtype, padding, rows, cols = _HEADER.unpack_from(raw, 0)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}", offset=0)
    if version != 1:
        raise FormatError(f"unsupported version {version}", offset=4)
    if dtype != 1:
        raise FormatError(f"unsupported dtype code {dtype} (only 1 = float64)", offset=5)
    if padding != 0:
        raise FormatError("padding bytes 6-7 must be zero", offset=6)
    if rows < 1:
        raise FormatError(f"rows must be >= 1, got {rows}", offset=8)
    if cols < 1:
        raise FormatError(f"cols must be >= 1, got {cols}", offset=16)
    expected = HEADER_SIZE + 8 * rows * cols
    if len(raw) < expected:
        raise FormatError(
            f"truncated payload: expected {expected} bytes, file has {len(raw)}",
            offset=len(raw),
        )
    if len(raw) > expected:
        raise FormatError(f"{len(raw) - expected} trailing bytes", offset=expected)
    flat = np.frombuffer(raw, dtype="<f8", count=rows * cols, offset=HEADER_SIZE)
    bad = np.where(~np.isfinite(flat))[0]
    if bad.size:
        raise FormatError(
            f"non-finite value at element {bad[0]}",
            offset=HEADER_SIZE + 8 * int(bad[0]),
        )
    return flat.astype(np.float64).reshape(rows, cols)

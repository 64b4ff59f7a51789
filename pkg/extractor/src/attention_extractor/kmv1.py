"""Standalone writer for the KMV1 matrix format.

Implements the documented interchange schema (magic "KMV1", u32 dtype tag
1 = float64, u64 rows, u64 cols, row-major little-endian float64 payload)
so exported activations can be consumed by the kernel matrix-vector tooling
without importing it.
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"KMV1"
DTYPE_FLOAT64 = 1
_HEADER = struct.Struct("<4sIQQ")


def write_matrix(matrix: np.ndarray, path: str) -> None:
    arr = np.ascontiguousarray(matrix, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise ValueError(f"can only write 2-D matrices, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("refusing to write non-finite values")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, DTYPE_FLOAT64, arr.shape[0], arr.shape[1]))
        fh.write(arr.astype("<f8", copy=False).tobytes(order="C"))

"""The KMV1 binary matrix format and CSV ingestion.

KMV1 layout, little-endian throughout:

    bytes 0..3    magic "KMV1"
    bytes 4..7    u32 dtype tag (1 = float64; other values reserved)
    bytes 8..15   u64 row count
    bytes 16..23  u64 column count
    bytes 24..    row-major float64 payload, exactly rows*cols*8 bytes

Write-then-read round trips are bit exact. Parsing failures raise distinct
error types so callers can map them to distinct exit codes.
"""

from __future__ import annotations

import struct

import numpy as np

from .core import DataValidationError

MAGIC = b"KMV1"
DTYPE_FLOAT64 = 1
_HEADER = struct.Struct("<4sIQQ")


class MatrixFormatError(DataValidationError):
    """Malformed matrix file."""


class BadMagicError(MatrixFormatError):
    """The file does not start with the KMV1 magic."""


class TruncatedPayloadError(MatrixFormatError):
    """The payload is shorter than the header promises."""


class UnsupportedDtypeError(MatrixFormatError):
    """The dtype tag is reserved / unknown to this version."""


class NonFiniteDataError(MatrixFormatError):
    """The matrix contains NaN or Inf entries."""


def write_matrix(matrix, path: str) -> None:
    arr = np.ascontiguousarray(matrix, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise DataValidationError(f"can only write 2-D matrices, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteDataError("refusing to write non-finite values")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, DTYPE_FLOAT64, arr.shape[0], arr.shape[1]))
        fh.write(arr.astype("<f8", copy=False).tobytes(order="C"))


def _read_kmv1(path: str) -> np.ndarray:
    with open(path, "rb") as fh:
        header = fh.read(_HEADER.size)
        if len(header) < 4 or header[:4] != MAGIC:
            raise BadMagicError(f"{path}: not a KMV1 file (bad magic)")
        if len(header) < _HEADER.size:
            raise TruncatedPayloadError(f"{path}: truncated header")
        _, dtype_tag, rows, cols = _HEADER.unpack(header)
        if dtype_tag != DTYPE_FLOAT64:
            raise UnsupportedDtypeError(f"{path}: unsupported dtype tag {dtype_tag}")
        payload = fh.read()
    expected = rows * cols * 8
    if len(payload) < expected:
        raise TruncatedPayloadError(
            f"{path}: truncated payload ({len(payload)} of {expected} bytes)"
        )
    if len(payload) > expected:
        raise MatrixFormatError(
            f"{path}: payload length mismatch ({len(payload)} > {expected} bytes)"
        )
    arr = np.frombuffer(payload, dtype="<f8").reshape(rows, cols)
    arr = np.ascontiguousarray(arr, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise NonFiniteDataError(f"{path}: matrix contains non-finite values")
    return arr


def _read_csv(path: str) -> np.ndarray:
    try:
        arr = np.loadtxt(path, delimiter=",", dtype=np.float64, ndmin=2)
    except ValueError as exc:
        raise MatrixFormatError(f"{path}: CSV parse failure: {exc}") from exc
    if arr.size == 0:
        raise MatrixFormatError(f"{path}: empty CSV matrix")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteDataError(f"{path}: matrix contains non-finite values")
    return arr


def read_matrix(path: str, fmt: str = "kmv1") -> np.ndarray:
    if fmt == "kmv1":
        return _read_kmv1(path)
    if fmt == "csv":
        return _read_csv(path)
    raise DataValidationError(f"unknown matrix format {fmt!r}")

"""Domain types, Gaussian kernel evaluation, and exact dense oracles.

Everything downstream (hashing, density estimation, sampling) is tested
against the dense computations in this module, so they are kept deliberately
simple: float64 throughout, row-blocked only to bound memory, deterministic
summation order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class KmvError(Exception):
    """Base class for errors raised by this package."""


class DataValidationError(KmvError, ValueError):
    """Invalid numeric input: wrong shape, non-finite values, bad parameters."""


class EstimatorFailureError(KmvError, RuntimeError):
    """A randomized estimator produced an unusable value (e.g. a nonpositive
    attention row sum)."""

    def __init__(self, message: str, rows: list[int] | None = None):
        super().__init__(message)
        self.rows = rows or []


def _as_matrix(data, name: str = "data") -> np.ndarray:
    arr = np.ascontiguousarray(data, dtype=np.float64)
    if arr.ndim != 2:
        raise DataValidationError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DataValidationError(f"{name} contains non-finite values")
    return arr


def as_vector(x, n: int | None = None, name: str = "x") -> np.ndarray:
    """Validate and convert to a finite 1-D float64 array of length ``n``."""
    arr = np.ascontiguousarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise DataValidationError(f"{name} must be 1-D, got shape {arr.shape}")
    if n is not None and arr.shape[0] != n:
        raise DataValidationError(f"{name} has length {arr.shape[0]}, expected {n}")
    if not np.all(np.isfinite(arr)):
        raise DataValidationError(f"{name} contains non-finite values")
    return arr


@dataclass(frozen=True)
class PointSet:
    """An n x d table of real coordinates, one point per row."""

    data: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "data", _as_matrix(self.data, "points"))
        if self.data.shape[0] < 1 or self.data.shape[1] < 1:
            raise DataValidationError(
                f"point set must be at least 1x1, got {self.data.shape}"
            )

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def d(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class GaussianKernel:
    """Gaussian kernel exp(-||p-q||^2 / (2 sigma^2)) with bandwidth sigma."""

    sigma: float

    def __post_init__(self):
        if not (math.isfinite(self.sigma) and self.sigma > 0):
            raise DataValidationError(f"sigma must be positive and finite, got {self.sigma}")

    def squared(self) -> "GaussianKernel":
        """Kernel whose value is this kernel's value squared.

        k_sigma(p, q)^2 == k_{sigma/sqrt(2)}(p, q), so squaring is just a
        bandwidth change.
        """
        return GaussianKernel(self.sigma / math.sqrt(2.0))


@dataclass(frozen=True)
class KernelProblem:
    """Queries, keys and a bandwidth, implicitly defining K_ij = k(q_i, k_j).

    The subquadratic guarantee is stated for the square case
    (queries.n == keys.n); rectangular inputs are accepted for the dense
    oracles.
    """

    queries: PointSet
    keys: PointSet
    kernel: GaussianKernel

    def __post_init__(self):
        if self.queries.d != self.keys.d:
            raise DataValidationError(
                f"query dim {self.queries.d} != key dim {self.keys.d}"
            )

    @property
    def n(self) -> int:
        return self.keys.n

    @property
    def d(self) -> int:
        return self.keys.d

    @property
    def is_square(self) -> bool:
        return self.queries.n == self.keys.n


def eval_kernel(kernel: GaussianKernel, p, q) -> float:
    """Evaluate exp(-||p-q||^2 / (2 sigma^2)) for a single pair of points.

    Computed from the literal difference vector, so identical inputs give
    exactly 1.0. Extreme distances underflow to 0.0 without error.
    """
    p = as_vector(p, name="p")
    q = as_vector(q, name="q")
    if p.shape[0] != q.shape[0]:
        raise DataValidationError(
            f"point dimensions differ: {p.shape[0]} vs {q.shape[0]}"
        )
    diff = p - q
    sq = float(diff @ diff)
    return float(np.exp(-sq / (2.0 * kernel.sigma**2)))


def squared_distances(queries: np.ndarray, keys: np.ndarray) -> np.ndarray:
    """Pairwise squared Euclidean distances, clamped at 0 against rounding."""
    q_norms = np.einsum("ij,ij->i", queries, queries)[:, None]
    k_norms = np.einsum("ij,ij->i", keys, keys)[None, :]
    sq = q_norms + k_norms - 2.0 * (queries @ keys.T)
    np.maximum(sq, 0.0, out=sq)
    return sq


def kernel_block(kernel: GaussianKernel, queries: np.ndarray, keys: np.ndarray) -> np.ndarray:
    """Dense kernel values for a block of queries against a block of keys."""
    sq = squared_distances(queries, keys)
    sq *= -1.0 / (2.0 * kernel.sigma**2)
    return np.exp(sq, out=sq)


def _row_block_size(n_cols: int, target_bytes: int = 1 << 26) -> int:
    return max(1, target_bytes // max(1, 8 * n_cols))


def exact_matvec(problem: KernelProblem, x, block_bytes: int = 1 << 26) -> np.ndarray:
    """Exact y = Kx by dense row blocks; the O(n^2 d) oracle."""
    x = as_vector(x, n=problem.keys.n)
    q = problem.queries.data
    k = problem.keys.data
    out = np.empty(q.shape[0], dtype=np.float64)
    rows = _row_block_size(k.shape[0], block_bytes)
    for start in range(0, q.shape[0], rows):
        stop = min(start + rows, q.shape[0])
        out[start:stop] = kernel_block(problem.kernel, q[start:stop], k) @ x
    return out


MATERIALIZE_CAP = 8192


def materialize(problem: KernelProblem, cap: int = MATERIALIZE_CAP) -> np.ndarray:
    """Dense K, row-major. Guarded by a size cap: this is test/validation
    support, not the fast path."""
    if max(problem.queries.n, problem.keys.n) > cap:
        raise DataValidationError(
            f"refusing to materialize {problem.queries.n}x{problem.keys.n} "
            f"kernel matrix (cap {cap}); raise the cap only for oracle use"
        )
    return kernel_block(problem.kernel, problem.queries.data, problem.keys.data)


def kernel_pairs(
    kernel: GaussianKernel,
    queries: np.ndarray,
    keys: np.ndarray,
    q_ids: np.ndarray,
    k_ids: np.ndarray,
    chunk: int = 1 << 17,
) -> np.ndarray:
    """Kernel values for an explicit list of (query, key) index pairs."""
    inv_two_sigma_sq = 1.0 / (2.0 * kernel.sigma**2)
    out = np.empty(q_ids.shape[0], dtype=np.float64)
    for start in range(0, q_ids.shape[0], chunk):
        sl = slice(start, start + chunk)
        diff = queries[q_ids[sl]] - keys[k_ids[sl]]
        sq = np.einsum("ij,ij->i", diff, diff)
        out[sl] = np.exp(-sq * inv_two_sigma_sq)
    return out


def sum_top_t(matrix, t: int) -> tuple[float, float]:
    """Sum of the t largest entries of ``matrix`` and the sum of the rest.

    Entries are accumulated in descending sorted order, so results are
    reproducible; ties between equal values cannot change either sum.
    """
    arr = _as_matrix(matrix, "matrix")
    size = arr.size
    if not (0 <= t <= size):
        raise DataValidationError(f"t={t} out of range for {size} entries")
    flat = np.sort(arr, axis=None)[::-1]
    head = float(flat[:t].sum())
    tail = float(flat[t:].sum())
    return head, tail

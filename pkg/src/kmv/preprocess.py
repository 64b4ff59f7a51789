"""Input vector normalization and the huge/negligible/tail coordinate split.

The pipeline operates on x rescaled to squared norm n. Coordinates with
x_j^2 >= n^gamma (at most n^(1-gamma) of them, by Markov) get their kernel
columns summed exactly; coordinates with x_j^2 <= n^(-4) are dropped, which
costs at most n^(-2.5) in l2 against the dense product; the rest form the
tail T handled by hashing and sampling.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import KernelProblem, KmvError, as_vector, kernel_block


class TrivialInputError(KmvError):
    """The input vector is all-zero; the product is zero with no work."""


NEGLIGIBLE_EXPONENT = 4.0  # coordinates with x_j^2 <= n^(-4) are dropped


@dataclass(frozen=True)
class XPartition:
    """Index split of a squared-norm-n vector into huge (h1), negligible
    (h2) and tail (t) coordinates, with the scale that produced it."""

    scale: float
    gamma: float
    h1: np.ndarray
    h2: np.ndarray
    t: np.ndarray

    @property
    def n(self) -> int:
        return self.h1.size + self.h2.size + self.t.size


def normalize_x(x) -> tuple[np.ndarray, float]:
    """Rescale x to squared norm n; returns (x_scaled, scale)."""
    x = as_vector(x)
    norm = float(np.linalg.norm(x))
    if norm == 0.0:
        raise TrivialInputError("x is all-zero; Kx is zero")
    scale = float(np.sqrt(x.size)) / norm
    return x * scale, scale


def partition_x(x_scaled, gamma: float, scale: float = 1.0) -> XPartition:
    """Split coordinates by squared magnitude against n^gamma and n^(-4).

    Both thresholds are closed (>= into h1, <= into h2). Requires
    ||x_scaled||^2 == n up to 1e-6 relative.
    """
    x_scaled = as_vector(x_scaled)
    if not 0.0 <= gamma <= 1.0:
        raise ValueError(f"gamma must be in [0, 1], got {gamma}")
    n = x_scaled.size
    sq_norm = float(x_scaled @ x_scaled)
    if abs(sq_norm - n) > 1e-6 * n:
        raise ValueError(
            f"partition_x requires ||x||^2 == n; got {sq_norm} for n={n}"
        )
    xsq = x_scaled * x_scaled
    hi_thresh = float(n) ** gamma
    lo_thresh = float(n) ** -NEGLIGIBLE_EXPONENT
    in_h1 = xsq >= hi_thresh
    in_h2 = (xsq <= lo_thresh) & ~in_h1
    h1 = np.flatnonzero(in_h1)
    h2 = np.flatnonzero(in_h2)
    t = np.flatnonzero(~in_h1 & ~in_h2)
    # Markov: |h1| * n^gamma <= sum x_j^2 == n (up to the norm tolerance).
    assert h1.size <= n ** (1.0 - gamma) * (1.0 + 2e-6)
    return XPartition(scale=scale, gamma=gamma, h1=h1, h2=h2, t=t)


def compute_y_h(problem: KernelProblem, x_scaled, part: XPartition) -> np.ndarray:
    """Exact contribution of the huge coordinates: sum over h1 columns only.

    Cost is O(d * n * |h1|) = O(d * n^(2-gamma)).
    """
    x_scaled = as_vector(x_scaled, n=problem.keys.n)
    if part.n != problem.keys.n:
        raise ValueError("partition size does not match problem size")
    nq = problem.queries.n
    if part.h1.size == 0:
        return np.zeros(nq, dtype=np.float64)
    keys_h1 = problem.keys.data[part.h1]
    x_h1 = x_scaled[part.h1]
    out = np.empty(nq, dtype=np.float64)
    rows = max(1, (1 << 26) // max(1, 8 * part.h1.size))
    q = problem.queries.data
    for start in range(0, nq, rows):
        stop = min(start + rows, nq)
        out[start:stop] = kernel_block(problem.kernel, q[start:stop], keys_h1) @ x_h1
    return out

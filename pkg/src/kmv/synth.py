"""Synthetic instance generators for tests and the scaling bench.

The clustered generator produces data satisfying the head/tail mass
assumption by construction: each query sits inside a small key cluster, and
clusters are separated far enough that inter-cluster kernel values are
numerically zero. Tail mass per row is then bounded by the cluster size,
independent of n.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._rng import rng_from
from .core import GaussianKernel, KernelProblem, PointSet


@dataclass(frozen=True)
class ClusteredSpec:
    """Parameters of the clustered generator.

    separation is in units of sigma * sqrt(ln n), so inter-cluster kernel
    values shrink polynomially in n and clusters stay well separated at
    every size on the bench ladder.
    """

    n: int
    d: int
    sigma: float = 1.0
    cluster_size: int = 4
    spread: float = 0.5
    separation: float = 12.0

    def __post_init__(self):
        if self.n < 1 or self.d < 1:
            raise ValueError("n and d must be positive")
        if self.cluster_size < 1:
            raise ValueError("cluster_size must be positive")


def _lattice_centers(num: int, d: int, step: float, rng: np.random.Generator) -> np.ndarray:
    """num points of a scaled integer lattice in generic position.

    Lattice spacing guarantees pairwise distance >= step; a random rotation
    removes axis alignment.
    """
    side = int(np.ceil(num ** (1.0 / d))) if d > 1 else num
    side = max(side, 2)
    coords = np.empty((num, d), dtype=np.float64)
    idx = np.arange(num)
    for axis in range(d):
        coords[:, axis] = idx % side
        idx = idx // side
    coords *= step
    gauss = rng.standard_normal((d, d))
    q_rot, _ = np.linalg.qr(gauss)
    return coords @ q_rot.T


def clustered_problem(spec: ClusteredSpec, seed: int) -> KernelProblem:
    """Assumption-satisfying keys and queries: co-located small clusters."""
    rng = rng_from(seed, 0xC1)
    n, d = spec.n, spec.d
    num_clusters = -(-n // spec.cluster_size)
    step = spec.separation * spec.sigma * np.sqrt(max(np.log(n), 1.0))
    centers = _lattice_centers(num_clusters, d, step, rng)
    # contiguous blocks: any index prefix covers whole clusters, so prefix
    # head/tail structure does not drift with the prefix length
    assign = np.arange(n) // spec.cluster_size
    scale = spec.spread * spec.sigma / np.sqrt(d)
    keys = centers[assign] + rng.normal(scale=scale, size=(n, d))
    queries = centers[assign] + rng.normal(scale=scale, size=(n, d))
    return KernelProblem(
        queries=PointSet(queries),
        keys=PointSet(keys),
        kernel=GaussianKernel(spec.sigma),
    )


def gaussian_x(n: int, seed: int, min_abs: float = 0.0) -> np.ndarray:
    """Mixed-sign standard normal vector; entries below min_abs are resampled
    so tests can force the negligible-coordinate set to be empty."""
    rng = rng_from(seed, 0xF7)
    x = rng.standard_normal(n)
    if min_abs > 0.0:
        for _ in range(100):
            small = np.abs(x) < min_abs
            if not small.any():
                break
            x[small] = rng.standard_normal(int(small.sum()))
    return x


def embedding_like(n: int, d: int, seed: int, norm_low: float = 1.0, norm_high: float = 6.0) -> np.ndarray:
    """Rows with random directions and word-embedding-like norms."""
    rng = rng_from(seed, 0xE0)
    vecs = rng.standard_normal((n, d))
    vecs /= np.linalg.norm(vecs, axis=1, keepdims=True)
    norms = rng.uniform(norm_low, norm_high, size=n)
    return vecs * norms[:, None]


def clustered_embeddings(
    n: int,
    d: int,
    seed: int,
    cluster_size: int = 4,
    norm_low: float = 26.0,
    norm_high: float = 26.5,
    jitter: float = 0.01,
) -> tuple[np.ndarray, np.ndarray]:
    """(queries, keys) whose attention matrix reduces to an
    assumption-satisfying kernel matrix.

    Tokens in a cluster share a direction (high mutual inner products,
    heavy reduced entries); distinct clusters are near-orthogonal, and the
    norm range keeps the off-cluster reduced entries far below any heavy
    threshold, so the head carries the mass.
    """
    rng = rng_from(seed, 0xCE)
    num_clusters = -(-n // cluster_size)
    dirs = rng.standard_normal((num_clusters, d))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    assign = np.arange(n) // cluster_size

    def draw():
        vecs = dirs[assign] + jitter * rng.standard_normal((n, d))
        vecs /= np.linalg.norm(vecs, axis=1, keepdims=True)
        norms = rng.uniform(norm_low, norm_high, size=n)
        return vecs * norms[:, None]

    return draw(), draw()

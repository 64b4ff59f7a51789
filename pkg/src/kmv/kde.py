"""Gaussian kernel-density estimators behind a single query contract.

The contract, for parameters (beta, mu, delta): when the true mean kernel
value mu(q) is at least mu, the estimate is within (1 +- beta) relative with
probability >= 1 - delta; below mu the output may be truncated to 0 but
never exceeds (1 + beta) * mu(q).

Three interchangeable kinds:

* ``exact``: stores the points; queries are true means.
* ``uniform_sampling``: mean over ceil(C ln(1/delta) / (beta^2 mu)) indices
  drawn with replacement at build time; saturates to exact when that count
  reaches the point count. Estimates below (1 - beta) mu are truncated to 0
  so sub-threshold queries cannot overshoot.
* ``hashing_based``: LSH range reporting. Points with kernel value below
  beta * mu contribute at most beta * mu to the mean and are dropped; the
  rest lie within a cutoff radius and are recovered exactly through
  calibrated hash tables, so the error is one-sided and the estimate never
  exceeds the truth. Query cost adapts to how many points are actually near.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._hashing import (
    atom_collision_prob,
    composite_codes,
    ragged_ranges,
    search_code_ranges,
    solve_cell_width,
)
from ._rng import rng_from, seed_seq
from .core import DataValidationError, GaussianKernel, PointSet, as_vector, kernel_block

ESTIMATOR_KINDS = ("exact", "uniform_sampling", "hashing_based")


@dataclass(frozen=True)
class KdeConfig:
    beta: float
    mu: float
    delta: float
    estimator_kind: str = "uniform_sampling"
    seed: int = 0
    sample_constant: float = 3.0
    median_copies: int = 1  # optional amplification: median of this many independent means
    near_target: float = 0.5  # hashing: per-table collision prob at the cutoff radius
    far_target: float = 0.01  # hashing: composite collision prob at 4x the cutoff
    value_ceiling: float | None = None  # serve k * 1[k < ceiling] instead of k

    def __post_init__(self):
        if not 0.0 < self.beta < 1.0:
            raise DataValidationError(f"beta must be in (0,1), got {self.beta}")
        if not 0.0 < self.mu <= 1.0:
            raise DataValidationError(f"mu must be in (0,1], got {self.mu}")
        if not 0.0 < self.delta < 1.0:
            raise DataValidationError(f"delta must be in (0,1), got {self.delta}")
        if self.estimator_kind not in ESTIMATOR_KINDS:
            raise DataValidationError(f"unknown estimator kind {self.estimator_kind!r}")
        if self.median_copies < 1:
            raise DataValidationError("median_copies must be >= 1")


def uniform_sample_count(cfg: KdeConfig) -> int:
    return math.ceil(cfg.sample_constant * math.log(1.0 / cfg.delta) / (cfg.beta**2 * cfg.mu))


@dataclass(frozen=True)
class _HashLevel:
    projections: np.ndarray
    offsets: np.ndarray
    salt: np.uint64
    order: np.ndarray  # argsort of point codes
    sorted_codes: np.ndarray


@dataclass(frozen=True)
class KdeStructure:
    points: PointSet
    kernel: GaussianKernel
    cfg: KdeConfig
    kind: str  # actual kind after saturation (may be "exact")
    sample_idx: np.ndarray | None = None  # (copies, m) for uniform sampling
    hash_tables: list[_HashLevel] | None = field(default=None, repr=False)
    cutoff_sq: float = 0.0  # hashing: squared cutoff radius
    cell_width: float = 0.0

    @property
    def n(self) -> int:
        return self.points.n


def exact_kde(points: PointSet, kernel: GaussianKernel, q) -> float:
    """True mean kernel value; the oracle for query_kde."""
    q = as_vector(q, n=points.d, name="q")
    return float(kernel_block(kernel, q[None, :], points.data).mean())


def build_kde(points: PointSet, kernel: GaussianKernel, cfg: KdeConfig) -> KdeStructure:
    """Preprocess one point set for repeated density queries."""
    if cfg.estimator_kind == "exact":
        return KdeStructure(points=points, kernel=kernel, cfg=cfg, kind="exact")
    if cfg.estimator_kind == "uniform_sampling":
        m = uniform_sample_count(cfg)
        if m >= points.n:
            return KdeStructure(points=points, kernel=kernel, cfg=cfg, kind="exact")
        rng = rng_from(cfg.seed, 0xCDE)
        idx = rng.integers(0, points.n, size=(cfg.median_copies, m))
        return KdeStructure(points=points, kernel=kernel, cfg=cfg,
                            kind="uniform_sampling", sample_idx=idx)
    return _build_hashing(points, kernel, cfg)


def _build_hashing(points: PointSet, kernel: GaussianKernel, cfg: KdeConfig) -> KdeStructure:
    value_cutoff = cfg.beta * cfg.mu
    # kernel >= value_cutoff  <=>  squared distance <= cutoff_sq
    cutoff_sq = 2.0 * kernel.sigma**2 * math.log(1.0 / value_cutoff)
    cutoff = math.sqrt(cutoff_sq)
    concat, width = 1, solve_cell_width(cutoff, cfg.near_target)
    for k in range(1, 17):
        w_k = solve_cell_width(cutoff, cfg.near_target ** (1.0 / k))
        concat, width = k, w_k
        if atom_collision_prob(w_k, 4.0 * cutoff) ** k <= cfg.far_target:
            break
    p_near = atom_collision_prob(width, cutoff) ** concat
    num_tables = math.ceil(math.log(points.n / cfg.delta) / -math.log1p(-min(p_near, 1 - 1e-12)))
    if num_tables * concat >= points.n:
        # Hashing costs more than scanning this point set; store it whole.
        return KdeStructure(points=points, kernel=kernel, cfg=cfg, kind="exact")
    root = seed_seq(cfg.seed, 0x4DE)
    levels = []
    for child in root.spawn(num_tables):
        rng = np.random.default_rng(child)
        salt = np.uint64(rng.integers(0, 2**63, dtype=np.uint64))
        proj = rng.standard_normal((concat, points.d))
        offs = rng.uniform(0.0, width, concat)
        codes = composite_codes(points.data, proj, offs, width, salt)
        order = np.argsort(codes, kind="stable")
        levels.append(_HashLevel(projections=proj, offsets=offs, salt=salt,
                                 order=order, sorted_codes=codes[order]))
    return KdeStructure(points=points, kernel=kernel, cfg=cfg, kind="hashing_based",
                        hash_tables=levels, cutoff_sq=cutoff_sq, cell_width=width)


def query_kde(s: KdeStructure, q) -> float:
    """Density estimate for one query point under the structure's contract."""
    q = as_vector(q, name="q")
    if q.shape[0] != s.points.d:
        raise DataValidationError(
            f"query has dimension {q.shape[0]}, points have {s.points.d}"
        )
    return float(query_kde_many(s, q[None, :])[0])


def query_kde_many(s: KdeStructure, queries: np.ndarray) -> np.ndarray:
    """Vectorized query_kde over the rows of ``queries``."""
    queries = np.ascontiguousarray(queries, dtype=np.float64)
    if queries.ndim != 2 or queries.shape[1] != s.points.d:
        raise DataValidationError(
            f"queries must be m x {s.points.d}, got {queries.shape}"
        )
    if s.kind == "exact":
        out = np.empty(queries.shape[0])
        rows = max(1, (1 << 25) // max(1, 8 * s.points.n))
        for start in range(0, queries.shape[0], rows):
            block = kernel_block(s.kernel, queries[start : start + rows], s.points.data)
            _apply_ceiling(block, s.cfg.value_ceiling)
            out[start : start + rows] = block.mean(axis=1)
        return out
    if s.kind == "uniform_sampling":
        return _query_uniform(s, queries)
    return _query_hashing(s, queries)


def _apply_ceiling(values: np.ndarray, ceiling: float | None) -> np.ndarray:
    if ceiling is not None:
        values[values >= ceiling] = 0.0
    return values


def _query_uniform(s: KdeStructure, queries: np.ndarray) -> np.ndarray:
    copies, m = s.sample_idx.shape
    means = np.empty((queries.shape[0], copies))
    for c in range(copies):
        pts = s.points.data[s.sample_idx[c]]
        rows = max(1, (1 << 25) // max(1, 8 * m))
        for start in range(0, queries.shape[0], rows):
            block = kernel_block(s.kernel, queries[start : start + rows], pts)
            _apply_ceiling(block, s.cfg.value_ceiling)
            means[start : start + rows, c] = block.mean(axis=1)
    est = np.median(means, axis=1)
    # Truncate sub-threshold estimates so queries with mu(q) < mu cannot
    # overshoot the (1+beta) mu(q) bound.
    est[est < (1.0 - s.cfg.beta) * s.cfg.mu] = 0.0
    return est


def _query_hashing(s: KdeStructure, queries: np.ndarray) -> np.ndarray:
    nq = queries.shape[0]
    n_u64 = np.uint64(s.points.n)
    pending = []
    for level in s.hash_tables:
        q_codes = composite_codes(queries, level.projections, level.offsets,
                                  s.cell_width, level.salt)
        lefts, rights = search_code_ranges(level.sorted_codes, q_codes)
        q_ids, positions = ragged_ranges(lefts, rights)
        if q_ids.size:
            p_ids = level.order[positions]
            pending.append(q_ids.astype(np.uint64) * n_u64 + p_ids.astype(np.uint64))
    sums = np.zeros(nq)
    if pending:
        pairs = np.unique(np.concatenate(pending))
        q_ids = (pairs // n_u64).astype(np.int64)
        p_ids = (pairs % n_u64).astype(np.int64)
        inv_two_sigma_sq = 1.0 / (2.0 * s.kernel.sigma**2)
        chunk = 1 << 17
        for start in range(0, q_ids.shape[0], chunk):
            sl = slice(start, start + chunk)
            diff = queries[q_ids[sl]] - s.points.data[p_ids[sl]]
            sq = np.einsum("ij,ij->i", diff, diff)
            vals = np.where(sq <= s.cutoff_sq, np.exp(-sq * inv_two_sigma_sq), 0.0)
            _apply_ceiling(vals, s.cfg.value_ceiling)
            np.add.at(sums, q_ids[sl], vals)
    return sums / s.points.n

"""Subsampled estimation of the light-key contribution per row.

Tail coordinates are bucketed by squared magnitude into geometric levels;
per-bucket squared-kernel density structures turn into a per-row estimate of
sum_j x_j^2 K_ij^2 over the tail, which (times n, over eps^2) is the number
of unit-rate subsampling repetitions needed to push the variance of the
basic estimator under the target. Groups of repetitions are averaged and a
median across groups amplifies the per-row success probability.

Repetition counts are realized as Binomial(r, 1/n) survivor multiplicities,
sampled by geometric gap skipping, so the cost scales with the number of
survivors rather than with r * |tail|.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._rng import derive_seed, rng_from
from .core import KernelProblem, PointSet, as_vector, kernel_pairs
from .kde import KdeConfig, KdeStructure, build_kde, query_kde_many
from .lsh import HeavyIndex

DEFAULT_BUDGET_EXPONENT = 0.218
DEFAULT_REPETITION_MULTIPLIER = 10.0
DEFAULT_GROUP_MULTIPLIER = 10.0


@dataclass(frozen=True)
class BucketPartition:
    """Tail indices grouped by rounded squared magnitude (1+eps)^m.

    Membership is the half-open interval (1+eps)^(m-1) < x_j^2 <= (1+eps)^m,
    so every tail index lies in exactly one bucket; only nonempty buckets
    are stored.
    """

    eps: float
    m_lo: int
    m_hi: int
    buckets: dict[int, np.ndarray]

    def rounded_weight(self, m: int) -> float:
        return (1.0 + self.eps) ** m

    @property
    def tail_size(self) -> int:
        return sum(idx.size for idx in self.buckets.values())


@dataclass(frozen=True)
class RowBudget:
    """Aggregated squared-kernel estimate and the derived repetition count."""

    t: float
    s: float
    repetitions: int


def bucketize_x(x_scaled, t_idx: np.ndarray, eps: float, gamma: float) -> BucketPartition:
    """Assign each tail coordinate to its geometric magnitude bucket."""
    if not 0.0 < eps <= 1.0:
        raise ValueError(f"eps must be in (0,1], got {eps}")
    x_scaled = as_vector(x_scaled)
    n = x_scaled.size
    log_base = math.log1p(eps)
    m_lo = math.ceil(-4.0 * math.log(n) / log_base)
    m_hi = math.ceil(gamma * math.log(n) / log_base)
    t_idx = np.asarray(t_idx, dtype=np.int64)
    if t_idx.size == 0:
        return BucketPartition(eps=eps, m_lo=m_lo, m_hi=m_hi, buckets={})
    xsq = x_scaled[t_idx] ** 2
    base = 1.0 + eps
    m = np.ceil(np.log(xsq) / log_base).astype(np.int64)
    # Fix rounding at bucket boundaries: enforce (1+eps)^(m-1) < xsq <= (1+eps)^m.
    for _ in range(2):
        m[base ** (m - 1) >= xsq] -= 1
        m[base**m < xsq] += 1
    if (base ** (m - 1) >= xsq).any() or (base**m < xsq).any():
        raise ValueError("bucket assignment failed to converge")
    if (m < m_lo).any() or (m > m_hi).any():
        raise ValueError(
            "tail coordinate outside representable bucket range; "
            "x was not partitioned with matching gamma"
        )
    buckets = {}
    for level in np.unique(m):
        buckets[int(level)] = np.sort(t_idx[m == level])
    return BucketPartition(eps=eps, m_lo=m_lo, m_hi=m_hi, buckets=buckets)


def bucket_kde_threshold(n: int, eps: float, m: int, bucket_size: int) -> float:
    """Density cutoff for bucket m: eps^2 / (n ln^2(n) (1+eps)^m |B_m|).

    Buckets whose density falls below this contribute at most eps/ln(n) to
    any row and may be dropped. Clamped to 1 since densities never exceed 1.
    """
    raw = eps**2 / (n * math.log(n) ** 2 * (1.0 + eps) ** m * bucket_size)
    return min(raw, 1.0)


def build_bucket_kdes(
    keys,  # PointSet
    part: BucketPartition,
    kernel,  # GaussianKernel
    n: int,
    *,
    beta: float | None = None,
    delta: float | None = None,
    estimator_kind: str = "uniform_sampling",
    seed: int = 0,
    sample_constant: float = 3.0,
    heavy_ceiling: float | None = None,
) -> dict[int, KdeStructure]:
    """One squared-kernel density structure per nonempty bucket.

    The squared kernel is served by halving the bandwidth variance
    (sigma / sqrt(2)); beta defaults to n^-0.218 and delta to 1/n^2.

    With heavy_ceiling set (a kernel value, typically the heaviness
    threshold n^-alpha), the structures serve the squared kernel truncated
    at that value: keys at or above the ceiling contribute 0. Budgets built
    this way track the light mass directly, with no per-row correction.
    """
    beta = float(n) ** -DEFAULT_BUDGET_EXPONENT if beta is None else beta
    delta = 1.0 / n**2 if delta is None else delta
    sq_kernel = kernel.squared()
    kdes = {}
    for m, idx in part.buckets.items():
        cfg = KdeConfig(
            beta=beta,
            mu=bucket_kde_threshold(n, part.eps, m, idx.size),
            delta=delta,
            estimator_kind=estimator_kind,
            seed=derive_seed(seed, 0xB0C, m),
            sample_constant=sample_constant,
            value_ceiling=None if heavy_ceiling is None else heavy_ceiling**2,
        )
        kdes[m] = build_kde(PointSet(keys.data[idx]), sq_kernel, cfg)
    return kdes


def _heavy_tail_pairs(heavy: HeavyIndex, t_mask: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(row_ids, key_ids) for all heavy pairs whose key lies in the tail."""
    rows = []
    cols = []
    for i, s in enumerate(heavy.sets):
        if s.size:
            sel = s[t_mask[s]]
            if sel.size:
                rows.append(np.full(sel.size, i, dtype=np.int64))
                cols.append(sel)
    if not rows:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    return np.concatenate(rows), np.concatenate(cols)


def row_budgets(
    problem: KernelProblem,
    part: BucketPartition,
    kdes: dict[int, KdeStructure],
    heavy: HeavyIndex,
    x_scaled: np.ndarray,
    eps: float,
    *,
    budget_beta: float | None = None,
    repetition_multiplier: float = DEFAULT_REPETITION_MULTIPLIER,
    skip_correction: bool = False,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized budgets for all rows: (t, s, repetitions).

    t aggregates bucket densities weighted by (1+eps)^m |B_m|; the heavy
    correction subtracts the exact squared-kernel mass of heavy tail keys
    (unrounded weights); s gets the beta * t over-estimation margin and a
    clamp at 0, and repetitions = ceil(mult * n * s / eps^2), at least 1.

    skip_correction is for truncated structures, whose t excludes the heavy
    keys by construction.
    """
    n = problem.keys.n
    nq = problem.queries.n
    if budget_beta is None:
        budget_beta = float(n) ** -DEFAULT_BUDGET_EXPONENT
    t_vec = np.zeros(nq)
    for m, kde in kdes.items():
        weight = part.rounded_weight(m) * part.buckets[m].size
        t_vec += weight * query_kde_many(kde, problem.queries.data)
    corr = np.zeros(nq)
    if not skip_correction:
        t_mask = np.zeros(n, dtype=bool)
        for idx in part.buckets.values():
            t_mask[idx] = True
        rows, cols = _heavy_tail_pairs(heavy, t_mask)
        if rows.size:
            k_vals = kernel_pairs(problem.kernel, problem.queries.data, problem.keys.data, rows, cols)
            np.add.at(corr, rows, (x_scaled[cols] ** 2) * k_vals**2)
    s_vec = np.maximum(t_vec - corr + budget_beta * t_vec, 0.0)
    reps = np.maximum(np.ceil(repetition_multiplier * n * s_vec / eps**2), 1.0).astype(np.int64)
    return t_vec, s_vec, reps


def row_budget(
    q_i,
    keys,  # PointSet
    part: BucketPartition,
    kdes: dict[int, KdeStructure],
    s_i: np.ndarray,
    x_scaled,
    kernel,
    n: int,
    eps: float,
    *,
    budget_beta: float | None = None,
    repetition_multiplier: float = DEFAULT_REPETITION_MULTIPLIER,
) -> RowBudget:
    """Single-row budget; see row_budgets for the vectorized form."""
    q_i = as_vector(q_i, name="q_i")
    x_scaled = as_vector(x_scaled, n=n)
    if budget_beta is None:
        budget_beta = float(n) ** -DEFAULT_BUDGET_EXPONENT
    t_val = 0.0
    for m, kde in kdes.items():
        weight = part.rounded_weight(m) * part.buckets[m].size
        t_val += weight * float(query_kde_many(kde, q_i[None, :])[0])
    t_mask = np.zeros(n, dtype=bool)
    for idx in part.buckets.values():
        t_mask[idx] = True
    s_i = np.asarray(s_i, dtype=np.int64)
    tail_heavy = s_i[t_mask[s_i]] if s_i.size else s_i
    corr = 0.0
    if tail_heavy.size:
        k_vals = kernel_pairs(
            kernel,
            q_i[None, :],
            keys.data,
            np.zeros(tail_heavy.size, dtype=np.int64),
            tail_heavy,
        )
        corr = float(((x_scaled[tail_heavy] ** 2) * k_vals**2).sum())
    s_val = max(t_val - corr + budget_beta * t_val, 0.0)
    reps = max(int(math.ceil(repetition_multiplier * n * s_val / eps**2)), 1)
    return RowBudget(t=t_val, s=s_val, repetitions=reps)


def _bernoulli_positions(rng: np.random.Generator, grid: int, p: float) -> np.ndarray:
    """Positions of successes of ``grid`` independent Bernoulli(p) trials,
    sampled by geometric gaps so the cost scales with the success count."""
    if grid <= 0:
        return np.empty(0, dtype=np.int64)
    chunks = []
    last = -1
    while last < grid - 1:
        remaining = grid - 1 - last
        need = int(remaining * p + 6.0 * math.sqrt(remaining * p + 1.0)) + 16
        gaps = rng.geometric(p, size=need)
        pos = last + np.cumsum(gaps)
        chunks.append(pos)
        last = int(pos[-1])
    out = np.concatenate(chunks)
    return out[out < grid]


def _group_estimates(
    rng: np.random.Generator,
    problem: KernelProblem,
    x_scaled: np.ndarray,
    row: int,
    light_idx: np.ndarray,
    repetitions: int,
    groups: int,
) -> np.ndarray:
    """Group averages of the subsampled estimator for one row.

    Each of ``groups * repetitions`` repetitions keeps every light key
    independently with probability 1/n and contributes n * x_j * K_ij per
    survivor; survivor multiplicities come from the Bernoulli position
    process over the (group, repetition, key) grid.
    """
    n = problem.keys.n
    size = light_idx.size
    grid = groups * repetitions * size
    positions = _bernoulli_positions(rng, grid, 1.0 / n)
    sums = np.zeros(groups)
    if positions.size:
        per_group = repetitions * size
        g_ids = positions // per_group
        slots = (positions % per_group) % size
        key_ids = light_idx[slots]
        k_vals = kernel_pairs(
            problem.kernel,
            problem.queries.data,
            problem.keys.data,
            np.full(key_ids.size, row, dtype=np.int64),
            key_ids,
        )
        contrib = n * x_scaled[key_ids] * k_vals
        np.add.at(sums, g_ids, contrib)
    return sums / repetitions


def _exact_light_row(problem: KernelProblem, x_scaled: np.ndarray, row: int, light_idx: np.ndarray) -> float:
    if light_idx.size == 0:
        return 0.0
    k_vals = kernel_pairs(
        problem.kernel,
        problem.queries.data,
        problem.keys.data,
        np.full(light_idx.size, row, dtype=np.int64),
        light_idx,
    )
    return float((x_scaled[light_idx] * k_vals).sum())


def approx_light(
    problem: KernelProblem,
    x_scaled,
    t_idx: np.ndarray,
    heavy: HeavyIndex,
    eps: float,
    gamma: float,
    seed: int,
    *,
    estimator_kind: str = "uniform_sampling",
    budget_exponent: float = DEFAULT_BUDGET_EXPONENT,
    repetition_multiplier: float = DEFAULT_REPETITION_MULTIPLIER,
    group_multiplier: float = DEFAULT_GROUP_MULTIPLIER,
    sample_constant: float = 3.0,
    uniform_budget: bool = False,
    heavy_ceiling: float | None = None,
) -> np.ndarray:
    """z with |z_i - sum_{j in T \\ S_i} x_j K_ij| <= eps per row, w.h.p.

    Rows whose repetition count reaches n are summed exactly (the expected
    survivor count already covers every light key). With uniform_budget the
    per-row counts are replaced by their mean, for comparisons of adaptive
    vs flat budgets. heavy_ceiling switches the budget structures to the
    truncated squared kernel (see build_bucket_kdes); budgets then track
    the light mass directly instead of carrying the heavy mass through a
    subtract-then-pad cycle, which otherwise forces near-exact sampling on
    every heavy-carrying row.
    """
    x_scaled = as_vector(x_scaled, n=problem.keys.n)
    n = problem.keys.n
    nq = problem.queries.n
    t_idx = np.sort(np.asarray(t_idx, dtype=np.int64))
    z = np.zeros(nq)
    if t_idx.size == 0:
        return z
    part = bucketize_x(x_scaled, t_idx, eps, gamma)
    kdes = build_bucket_kdes(
        problem.keys,
        part,
        problem.kernel,
        n,
        beta=float(n) ** -budget_exponent,
        estimator_kind=estimator_kind,
        seed=seed,
        sample_constant=sample_constant,
        heavy_ceiling=heavy_ceiling,
    )
    _, s_vec, reps = row_budgets(
        problem, part, kdes, heavy, x_scaled, eps,
        budget_beta=float(n) ** -budget_exponent,
        repetition_multiplier=repetition_multiplier,
        skip_correction=heavy_ceiling is not None,
    )
    if uniform_budget:
        flat = max(int(math.ceil(repetition_multiplier * n * float(s_vec.mean()) / eps**2)), 1)
        reps = np.full(nq, flat, dtype=np.int64)
    groups = max(1, int(round(group_multiplier * math.ceil(math.log(max(n, 2))))))
    for i in range(nq):
        s_i = heavy.sets[i] if i < len(heavy.sets) else np.empty(0, dtype=np.int64)
        light_idx = np.setdiff1d(t_idx, s_i, assume_unique=True)
        if light_idx.size == 0:
            continue
        if reps[i] >= n:
            z[i] = _exact_light_row(problem, x_scaled, i, light_idx)
            continue
        rng = rng_from(seed, 0x11647, i)
        sums = _group_estimates(rng, problem, x_scaled, i, light_idx, int(reps[i]), groups)
        z[i] = float(np.median(sums))
    return z

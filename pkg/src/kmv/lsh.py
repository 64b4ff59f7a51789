"""Calibrated Euclidean LSH and recovery of all heavy keys per query.

A key is heavy for a query when their kernel value is at least n^-alpha,
equivalently their distance is at most r_near = sigma*sqrt(2 alpha ln n).
The family is calibrated so one composite hash collides at r_near with
probability in [n^-alpha, n^-alpha/2]; with ~10 n^alpha ln n independent
tables a heavy pair is missed with probability <= n^-10. Every candidate is
verified by an exact kernel evaluation, so reported sets never contain a
non-heavy key regardless of hashing behavior.
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
from ._rng import seed_seq
from .core import KernelProblem, KmvError, PointSet, kernel_block

BRUTE_FORCE_CUTOFF = 256


class CalibrationError(KmvError):
    """Calibration could not meet the near-collision contract."""


@dataclass(frozen=True)
class LshFamilyConfig:
    """A concatenation of quantized random projections with its calibration.

    Calibrated so the composite collision probability at r_near lies in
    [n^-alpha, n^-alpha/2]; near_collision_prob records the achieved value.
    concat_width 0 is the degenerate alpha -> 0 limit where everything lands
    in a single bucket.
    """

    n: int
    sigma: float
    alpha: float
    r_near: float
    concat_width: int
    cell_width: float
    seed: int
    near_collision_prob: float
    table_multiplier: float = 10.0

    @property
    def num_tables(self) -> int:
        return max(1, math.ceil(self.table_multiplier * self.n**self.alpha * math.log(self.n)))

    @property
    def heavy_threshold(self) -> float:
        return float(self.n) ** -self.alpha


def calibrate_family(
    n: int,
    d: int,
    sigma: float,
    alpha: float,
    seed: int,
    table_multiplier: float = 10.0,
    near_exponent_frac: float = 0.9,
) -> LshFamilyConfig:
    """Choose (concat_width, cell_width) hitting the near-collision target.

    The composite probability at r_near is aimed at n^(-frac * alpha) with
    frac inside (1/2, 1), strictly inside the required
    [n^-alpha, n^-alpha/2] bracket, by fixing the atom count so each atom
    collides at r_near with probability about 1/2 and solving for the exact
    width by bisection. Aiming near the bracket's lower edge buys more
    atoms and hence faster far-collision decay, which is where this family
    is weaker than the ball-carving one it substitutes for.
    """
    if not 0.5 < near_exponent_frac < 1.0:
        raise CalibrationError(
            f"near_exponent_frac must be in (1/2, 1), got {near_exponent_frac}"
        )
    if n < 2:
        raise CalibrationError(f"need n >= 2 to calibrate, got {n}")
    if not (0.0 < alpha <= 1.0):
        raise CalibrationError(f"alpha must be in (0, 1], got {alpha}")
    if not (math.isfinite(sigma) and sigma > 0.0):
        raise CalibrationError(f"sigma must be positive and finite, got {sigma}")
    if d < 1:
        raise CalibrationError(f"need d >= 1, got {d}")
    r_near = sigma * math.sqrt(2.0 * alpha * math.log(n))
    log_target = -near_exponent_frac * alpha * math.log(n)
    concat_width = round(-log_target / math.log(2.0))
    if concat_width == 0:
        # alpha small enough that even a single coarse atom over-collides:
        # degenerate single-bucket family, collision probability 1 >= n^-alpha.
        return LshFamilyConfig(
            n=n, sigma=sigma, alpha=alpha, r_near=r_near,
            concat_width=0, cell_width=math.inf, seed=seed,
            near_collision_prob=1.0, table_multiplier=table_multiplier,
        )
    atom_target = math.exp(log_target / concat_width)
    try:
        cell_width = solve_cell_width(r_near, atom_target)
    except ValueError as exc:
        raise CalibrationError(
            f"cannot calibrate family for n={n}, sigma={sigma}, alpha={alpha}: {exc}"
        ) from exc
    achieved = atom_collision_prob(cell_width, r_near) ** concat_width
    lo, hi = float(n) ** -alpha, float(n) ** (-alpha / 2.0)
    if not (lo * (1.0 - 1e-9) <= achieved <= hi * (1.0 + 1e-9)):
        raise CalibrationError(
            f"calibration landed outside [{lo:.3g}, {hi:.3g}]: {achieved:.3g}"
        )
    return LshFamilyConfig(
        n=n, sigma=sigma, alpha=alpha, r_near=r_near,
        concat_width=concat_width, cell_width=cell_width, seed=seed,
        near_collision_prob=achieved, table_multiplier=table_multiplier,
    )


@dataclass(frozen=True)
class _Table:
    projections: np.ndarray  # (concat_width, d)
    offsets: np.ndarray  # (concat_width,)
    salt: np.uint64
    codes_sorted: np.ndarray  # (n_keys,) uint64, ascending
    order: np.ndarray  # key index of each sorted position

    @property
    def codes(self) -> np.ndarray:
        """Per-key codes in original key order."""
        out = np.empty_like(self.codes_sorted)
        out[self.order] = self.codes_sorted
        return out

    def hash_points(self, points: np.ndarray, cell_width: float) -> np.ndarray:
        return composite_codes(points, self.projections, self.offsets, cell_width, self.salt)


@dataclass(frozen=True)
class HashTables:
    """Independent hash tables over one key set; immutable after build."""

    cfg: LshFamilyConfig
    n_keys: int
    tables: list[_Table] = field(repr=False)

    def buckets(self, t: int) -> dict[int, np.ndarray]:
        """Bucket contents of table t as {code: sorted key indices}."""
        codes = self.tables[t].codes
        order = np.argsort(codes, kind="stable")
        sorted_codes = codes[order]
        cuts = np.flatnonzero(np.diff(sorted_codes)) + 1
        starts = np.concatenate([[0], cuts])
        groups = np.split(order, cuts)
        return {int(sorted_codes[s]): np.sort(g) for s, g in zip(starts, groups)}


def build_tables(keys: PointSet, cfg: LshFamilyConfig) -> HashTables:
    """Hash all keys under num_tables independent draws from the family."""
    if keys.n != cfg.n:
        raise ValueError(f"family calibrated for n={cfg.n}, keys have n={keys.n}")
    root = seed_seq(cfg.seed, 0x5A17)
    tables = []
    for child in root.spawn(cfg.num_tables):
        rng = np.random.default_rng(child)
        salt = np.uint64(rng.integers(0, 2**63, dtype=np.uint64))
        proj = rng.standard_normal((cfg.concat_width, keys.d))
        if math.isfinite(cfg.cell_width):
            offs = rng.uniform(0.0, cfg.cell_width, cfg.concat_width)
        else:
            offs = np.zeros(cfg.concat_width)
        codes = composite_codes(keys.data, proj, offs, cfg.cell_width, salt)
        order = np.argsort(codes)
        table = _Table(
            projections=proj,
            offsets=offs,
            salt=salt,
            codes_sorted=codes[order],
            order=order,
        )
        tables.append(table)
    return HashTables(cfg=cfg, n_keys=keys.n, tables=tables)


@dataclass(frozen=True)
class HeavyIndex:
    """Per-query sorted index lists of keys with kernel value >= threshold.

    Soundness is exact by construction: membership implies the verified
    kernel inequality. Recall is probabilistic (>= 1 - n^-10 per pair under
    the calibrated family).
    """

    sets: list[np.ndarray]
    threshold: float
    alpha: float

    def total_size(self) -> int:
        return sum(s.size for s in self.sets)


def brute_force_heavy(problem: KernelProblem, alpha: float) -> HeavyIndex:
    """Exact heavy sets by dense scan; the oracle and the small-n path."""
    n = problem.keys.n
    threshold = float(n) ** -alpha
    sets = []
    q = problem.queries.data
    rows = max(1, (1 << 25) // max(1, 8 * n))
    for start in range(0, q.shape[0], rows):
        block = kernel_block(problem.kernel, q[start : start + rows], problem.keys.data)
        for r in range(block.shape[0]):
            sets.append(np.flatnonzero(block[r] >= threshold).astype(np.int64))
    return HeavyIndex(sets=sets, threshold=threshold, alpha=alpha)


def _verify_pairs(
    problem: KernelProblem, q_ids: np.ndarray, k_ids: np.ndarray, threshold: float
) -> np.ndarray:
    """Mask of candidate pairs whose exact kernel value meets the threshold."""
    qd, kd = problem.queries.data, problem.keys.data
    inv_two_sigma_sq = 1.0 / (2.0 * problem.kernel.sigma**2)
    keep = np.empty(q_ids.shape[0], dtype=bool)
    chunk = 1 << 17
    for start in range(0, q_ids.shape[0], chunk):
        sl = slice(start, start + chunk)
        diff = qd[q_ids[sl]] - kd[k_ids[sl]]
        sq = np.einsum("ij,ij->i", diff, diff)
        keep[sl] = np.exp(-sq * inv_two_sigma_sq) >= threshold
    return keep


def find_heavy(
    problem: KernelProblem,
    tables: HashTables | None,
    cfg: LshFamilyConfig,
    brute_force_cutoff: int = BRUTE_FORCE_CUTOFF,
) -> HeavyIndex:
    """All heavy keys per query: bucket scan, dedup, exact verification.

    Below the cutoff (or without tables) the dense scan is cheaper than the
    table machinery and is used directly.
    """
    n = problem.keys.n
    if tables is None or n < brute_force_cutoff:
        return brute_force_heavy(problem, cfg.alpha)
    if tables.n_keys != n:
        raise ValueError("tables were built over a different key set size")
    threshold = cfg.heavy_threshold
    queries = problem.queries.data
    nq = queries.shape[0]
    n_u64 = np.uint64(n)

    pending: list[np.ndarray] = []
    pending_size = 0
    seen = np.empty(0, dtype=np.uint64)
    compact_at = max(4 * n, 1 << 20)

    def compact():
        nonlocal seen, pending, pending_size
        if pending:
            seen = np.unique(np.concatenate([seen] + pending))
            pending = []
            pending_size = 0

    for table in tables.tables:
        q_codes = table.hash_points(queries, cfg.cell_width)
        lefts, rights = search_code_ranges(table.codes_sorted, q_codes)
        q_ids, positions = ragged_ranges(lefts, rights)
        if q_ids.size:
            k_ids = table.order[positions]
            pending.append(q_ids.astype(np.uint64) * n_u64 + k_ids.astype(np.uint64))
            pending_size += q_ids.size
        if pending_size >= compact_at:
            compact()
    compact()

    q_ids = (seen // n_u64).astype(np.int64)
    k_ids = (seen % n_u64).astype(np.int64)
    keep = _verify_pairs(problem, q_ids, k_ids, threshold)
    q_ids, k_ids = q_ids[keep], k_ids[keep]

    # seen is sorted by (query, key), so one split yields sorted sets.
    cuts = np.searchsorted(q_ids, np.arange(1, nq))
    sets = [s.copy() for s in np.split(k_ids, cuts)]
    return HeavyIndex(sets=sets, threshold=threshold, alpha=cfg.alpha)

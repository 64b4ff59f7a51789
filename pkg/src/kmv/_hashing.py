"""Low-level utilities shared by the LSH index and the hashing KDE.

One hash atom is a quantized random projection h(v) = floor((a.v + b) / w)
with a ~ N(0, I) and b ~ U[0, w). Its collision probability at distance r
has a closed form, monotone decreasing in r and increasing in w, which is
what calibration inverts. Concatenated atom tuples are folded into single
64-bit codes; code collisions between unequal tuples are harmless because
every candidate is verified exactly downstream.
"""

from __future__ import annotations

import math

import numpy as np

_SPLIT1 = np.uint64(0xBF58476D1CE4E5B9)
_SPLIT2 = np.uint64(0x94D049BB133111EB)


def atom_collision_prob(cell_width: float, dist: float) -> float:
    """P[floor((a.p+b)/w) == floor((a.q+b)/w)] at ||p-q|| = dist."""
    if dist <= 0.0:
        return 1.0
    if not math.isfinite(cell_width) or cell_width <= 0.0:
        raise ValueError(f"cell_width must be positive, got {cell_width}")
    t = cell_width / dist
    near_tail = math.erfc(t / math.sqrt(2.0))  # == 2 * Phi(-t)
    bulk = (2.0 / (math.sqrt(2.0 * math.pi) * t)) * (1.0 - math.exp(-t * t / 2.0))
    p = 1.0 - near_tail - bulk
    return min(max(p, 0.0), 1.0)


def solve_cell_width(dist: float, target_prob: float, tol: float = 1e-13) -> float:
    """Width w with atom_collision_prob(w, dist) == target_prob (bisection)."""
    if not 0.0 < target_prob < 1.0:
        raise ValueError(f"target collision probability must be in (0,1), got {target_prob}")
    if not (math.isfinite(dist) and dist > 0.0):
        raise ValueError(f"distance must be positive and finite, got {dist}")
    lo, hi = dist * 1e-9, dist
    for _ in range(200):
        if atom_collision_prob(hi, dist) >= target_prob:
            break
        hi *= 2.0
    else:
        raise ValueError("could not bracket cell width during calibration")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if atom_collision_prob(mid, dist) < target_prob:
            lo = mid
        else:
            hi = mid
        if hi - lo <= tol * hi:
            break
    return hi


def mix64(z: np.ndarray) -> np.ndarray:
    """splitmix64 finalizer, vectorized over uint64."""
    z = (z ^ (z >> np.uint64(30))) * _SPLIT1
    z = (z ^ (z >> np.uint64(27))) * _SPLIT2
    return z ^ (z >> np.uint64(31))


def composite_codes(
    points: np.ndarray,
    projections: np.ndarray,
    offsets: np.ndarray,
    cell_width: float,
    salt: np.uint64,
) -> np.ndarray:
    """Fold a tuple of quantized projections into one uint64 code per point.

    Equal atom tuples always produce equal codes; unequal tuples collide only
    with ~2^-64 probability, and such collisions are removed by verification.
    """
    n = points.shape[0]
    codes = np.full(n, salt, dtype=np.uint64)
    if projections.shape[0] == 0:
        return codes
    atoms = np.floor((points @ projections.T + offsets) / cell_width)
    atoms = atoms.astype(np.int64).astype(np.uint64)
    for col in range(atoms.shape[1]):
        col_salt = np.uint64((0x9E3779B97F4A7C15 * (col + 1)) & 0xFFFFFFFFFFFFFFFF)
        codes ^= mix64(atoms[:, col] + col_salt)
    return mix64(codes)


def search_code_ranges(sorted_codes: np.ndarray, query_codes: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """[left, right) bucket ranges of query codes within sorted codes.

    One searchsorted over the concatenation of codes and codes+1 replaces
    the left/right pair of calls; a query code of 2^64-1 wraps and yields an
    empty (clamped) range, losing that bucket with negligible probability.
    """
    nq = query_codes.shape[0]
    probes = np.concatenate([query_codes, query_codes + np.uint64(1)])
    found = np.searchsorted(sorted_codes, probes, side="left")
    lefts = found[:nq]
    rights = np.maximum(found[nq:], lefts)
    return lefts, rights


def ragged_ranges(lefts: np.ndarray, rights: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Expand per-row [left, right) ranges into (row_ids, positions) arrays."""
    counts = rights - lefts
    total = int(counts.sum())
    if total == 0:
        return (np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64))
    row_ids = np.repeat(np.arange(lefts.shape[0], dtype=np.int64), counts)
    cum_prev = np.cumsum(counts) - counts
    positions = np.arange(total, dtype=np.int64) + np.repeat(lefts - cum_prev, counts)
    return row_ids, positions

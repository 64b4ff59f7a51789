"""Empirical checks of the head/tail mass assumption on kernel matrices.

Three measurements: the head/tail ratio maximized over principal prefixes
(the constant the model postulates), order-statistic ratios around the n-th
largest entry (is there a uniform gap between head and tail values?), and
how the prefix ratio scales with context length across instances.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .core import DataValidationError, KernelProblem, kernel_block, materialize, sum_top_t

MATERIALIZE_DEFAULT_CAP = 2048


@dataclass(frozen=True)
class ValidationReport:
    max_ratio: float
    per_prefix: list[tuple[int, float]]
    order_stats: dict[str, float]
    c_curve: list[tuple[int, float, float]] = field(default_factory=list)

    def to_json_dict(self) -> dict:
        def enc(v: float):
            return "inf" if np.isinf(v) else float(v)

        return {
            "max_ratio": float(self.max_ratio),
            "per_prefix": [[int(i), float(r)] for i, r in self.per_prefix],
            "order_stats": {k: enc(v) for k, v in self.order_stats.items()},
            "c_curve": [[int(l), float(m), float(s)] for l, m, s in self.c_curve],
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_json_dict(), **kwargs)


def head_tail_ratio(matrix: np.ndarray, t: int) -> float:
    """(sum of all but the t largest entries) / (sum of the t largest)."""
    head, tail = sum_top_t(matrix, t)
    if head <= 0.0:
        raise DataValidationError("head sum must be positive for ratio")
    return tail / head


def _require_square(problem: KernelProblem) -> int:
    if problem.queries.n != problem.keys.n:
        raise DataValidationError("prefix validation requires a square problem")
    return problem.keys.n


def _top_entries_streaming(problem: KernelProblem, i: int, keep: int) -> tuple[np.ndarray, float]:
    """(top-``keep`` entries of K[:i,:i] descending, total sum) without
    materializing the prefix; used above the memory cap."""
    keys = problem.keys.data[:i]
    total = 0.0
    buf = np.empty(0)
    rows = max(1, (1 << 24) // max(1, 8 * i))
    for start in range(0, i, rows):
        block = kernel_block(problem.kernel, problem.queries.data[start : min(start + rows, i)], keys)
        total += float(block.sum())
        buf = np.concatenate([buf, block.ravel()])
        if buf.size > 4 * keep:
            buf = np.partition(buf, buf.size - keep)[buf.size - keep :]
    if buf.size > keep:
        buf = np.partition(buf, buf.size - keep)[buf.size - keep :]
    return np.sort(buf)[::-1], total


def _prefix_ratio_from_dense(k_full: np.ndarray, i: int) -> float:
    return head_tail_ratio(k_full[:i, :i], i)


def _prefix_ratio(problem: KernelProblem, i: int, cap: int) -> float:
    if i <= cap:
        sub = KernelProblem(
            queries=_slice_points(problem, i, True),
            keys=_slice_points(problem, i, False),
            kernel=problem.kernel,
        )
        return head_tail_ratio(materialize(sub, cap=max(cap, i)), i)
    top, total = _top_entries_streaming(problem, i, i)
    head = float(top.sum())
    if head <= 0.0:
        raise DataValidationError("head sum must be positive for ratio")
    return (total - head) / head


def _slice_points(problem: KernelProblem, i: int, queries: bool):
    from .core import PointSet

    data = problem.queries.data if queries else problem.keys.data
    return PointSet(data[:i])


def head_tail_max_ratio(
    problem: KernelProblem,
    min_prefix: int = 50,
    step: int = 1,
    materialize_cap: int = MATERIALIZE_DEFAULT_CAP,
) -> tuple[float, list[tuple[int, float]]]:
    """Prefix ratios (total - a_i)/a_i for i in [min_prefix, n] and their max.

    a_i is the sum of the top i entries of K[:i,:i]. When n < min_prefix the
    single prefix at n is evaluated, with a warning.
    """
    n = _require_square(problem)
    if n < min_prefix:
        warnings.warn(
            f"n={n} is below min_prefix={min_prefix}; evaluating the single prefix at n",
            stacklevel=2,
        )
        prefixes = [n]
    else:
        prefixes = list(range(min_prefix, n + 1, step))
        if prefixes[-1] != n:
            prefixes.append(n)
    if n <= materialize_cap:
        k_full = materialize(problem, cap=max(materialize_cap, n))
        per_prefix = [(i, _prefix_ratio_from_dense(k_full, i)) for i in prefixes]
    else:
        per_prefix = [(i, _prefix_ratio(problem, i, materialize_cap)) for i in prefixes]
    max_ratio = max(r for _, r in per_prefix)
    return max_ratio, per_prefix


def _order_stats_from_sorted(top: np.ndarray, n: int) -> tuple[float, float]:
    """Ratios from entries sorted descending (at least the top 2n of them)."""
    v_n, v_n1, v_2n = top[n - 1], top[n], top[2 * n - 1]

    def ratio(num: float, den: float) -> float:
        return float(num / den) if den > 0.0 else np.inf

    return ratio(v_n, v_2n), ratio(v_n, v_n1)


def order_stat_ratios(
    problem: KernelProblem, materialize_cap: int = MATERIALIZE_DEFAULT_CAP
) -> tuple[float, float]:
    """(n-th / 2n-th, n-th / (n+1)-th) largest entries of K, descending.

    An underflowed denominator yields the infinite marker (inf) rather than
    an error, matching how such cells are reported.
    """
    n = _require_square(problem)
    if n < 2:
        raise DataValidationError("order statistics need n >= 2 (so n^2 >= 2n)")
    if n <= materialize_cap:
        flat = np.sort(materialize(problem, cap=max(materialize_cap, n)), axis=None)[::-1]
        top = flat[: 2 * n]
    else:
        top, _ = _top_entries_streaming(problem, n, 2 * n)
    return _order_stats_from_sorted(top, n)


def c_scaling_profile(
    problems: list[KernelProblem],
    lengths: list[int],
    materialize_cap: int = MATERIALIZE_DEFAULT_CAP,
) -> list[tuple[int, float, float]]:
    """Per length: mean and standard deviation of the prefix ratio across
    the instances long enough to cover it."""
    if not problems:
        raise DataValidationError("c_scaling_profile needs at least one instance")
    curve = []
    for length in lengths:
        vals = [
            _prefix_ratio(p, length, materialize_cap)
            for p in problems
            if p.keys.n >= length and p.queries.n >= length
        ]
        if not vals:
            raise DataValidationError(f"no instance covers context length {length}")
        arr = np.asarray(vals)
        curve.append((int(length), float(arr.mean()), float(arr.std())))
    return curve


def validate_problem(
    problem: KernelProblem,
    min_prefix: int = 50,
    step: int = 1,
    curve_start: int = 50,
    curve_step: int = 50,
    materialize_cap: int = MATERIALIZE_DEFAULT_CAP,
) -> ValidationReport:
    """All three measurements on one instance, bundled for serialization."""
    max_ratio, per_prefix = head_tail_max_ratio(
        problem, min_prefix=min_prefix, step=step, materialize_cap=materialize_cap
    )
    r_2n, r_n1 = order_stat_ratios(problem, materialize_cap=materialize_cap)
    n = problem.keys.n
    lengths = [i for i in range(curve_start, n + 1, curve_step)]
    curve = c_scaling_profile([problem], lengths, materialize_cap) if lengths else []
    return ValidationReport(
        max_ratio=max_ratio,
        per_prefix=per_prefix,
        order_stats={"r_2n": r_2n, "r_n1": r_n1},
        c_curve=curve,
    )

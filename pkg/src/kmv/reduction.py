"""Reduction from inner-product (attention) exponentials to Gaussian kernels.

Appending one coordinate to every key equalizes key norms, which turns
exp(<q_i, k_j>/sqrt(d)) into a per-row scale factor times a Gaussian kernel
entry with sigma^2 = sqrt(d). The reduction depends only on the points, not
on the vector being multiplied, so it is performed once per instance.

Row scale factors are kept in log space; normalized attention divides them
out entirely, so no large exponentials are ever formed on that path.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import (
    DataValidationError,
    EstimatorFailureError,
    GaussianKernel,
    KernelProblem,
    PointSet,
    as_vector,
)

MatvecFn = Callable[[KernelProblem, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class AttentionInstance:
    """Per-head attention inputs: queries, keys, and optionally values."""

    queries: PointSet
    keys: PointSet
    values: np.ndarray | None = None

    def __post_init__(self):
        if self.queries.d != self.keys.d:
            raise DataValidationError(
                f"query dim {self.queries.d} != key dim {self.keys.d}"
            )
        if self.values is not None:
            vals = np.ascontiguousarray(self.values, dtype=np.float64)
            if vals.ndim != 2 or vals.shape[0] != self.keys.n:
                raise DataValidationError(
                    f"values must be {self.keys.n} x d_v, got {vals.shape}"
                )
            if not np.all(np.isfinite(vals)):
                raise DataValidationError("values contain non-finite entries")
            object.__setattr__(self, "values", vals)

    @property
    def n(self) -> int:
        return self.keys.n

    @property
    def d(self) -> int:
        return self.keys.d


@dataclass(frozen=True)
class ReducedInstance:
    """Gaussian-kernel form of an attention instance.

    problem lives in dimension d+1 with sigma^2 = sqrt(d);
    row_log_scales[i] = (||q_i||^2 + max_key_norm_sq) / (2 sqrt(d)) is the
    log of the per-row factor relating attention entries to kernel entries.
    """

    problem: KernelProblem
    row_log_scales: np.ndarray
    max_key_norm_sq: float


def reduce_instance(att: AttentionInstance) -> ReducedInstance:
    """Augment keys/queries by one coordinate so that
    exp(<q_i,k_j>/sqrt(d)) == exp(row_log_scales[i]) * K'_ij."""
    q = att.queries.data
    k = att.keys.data
    d = att.d
    sqrt_d = float(np.sqrt(d))
    key_norms_sq = np.einsum("ij,ij->i", k, k)
    max_key_norm_sq = float(key_norms_sq.max())
    # w_j^2 = max - ||k_j||^2; clamp tiny negatives from rounding.
    w = np.sqrt(np.maximum(max_key_norm_sq - key_norms_sq, 0.0))
    keys_aug = np.hstack([k, w[:, None]])
    queries_aug = np.hstack([q, np.zeros((q.shape[0], 1))])
    q_norms_sq = np.einsum("ij,ij->i", q, q)
    row_log_scales = (q_norms_sq + max_key_norm_sq) / (2.0 * sqrt_d)
    problem = KernelProblem(
        queries=PointSet(queries_aug),
        keys=PointSet(keys_aug),
        kernel=GaussianKernel(float(d) ** 0.25),
    )
    return ReducedInstance(
        problem=problem,
        row_log_scales=row_log_scales,
        max_key_norm_sq=max_key_norm_sq,
    )


def attention_matvec(red: ReducedInstance, x, matvec: MatvecFn) -> np.ndarray:
    """Ax for the attention matrix A, via the reduced kernel problem.

    Scale factors are exponentiated here and nowhere else; rows whose factor
    overflows come back as +Inf with a RuntimeWarning rather than an error.
    """
    x = as_vector(x, n=red.problem.keys.n)
    kx = matvec(red.problem, x)
    with np.errstate(over="ignore"):
        out = np.exp(red.row_log_scales) * kx
    if np.isinf(out).any():
        warnings.warn(
            "attention_matvec overflowed to +Inf on "
            f"{int(np.isinf(out).sum())} rows",
            RuntimeWarning,
            stacklevel=2,
        )
    return out


def normalized_attention(
    red: ReducedInstance,
    values,
    matvec: MatvecFn,
    _collect_failures: list[int] | None = None,
) -> np.ndarray:
    """Rows of D^-1 A V, where D = diag(A 1).

    The per-row scale factors cancel between numerator and denominator, so
    this works directly on kernel matvecs: row i of the output is
    (K'V)_i / (K'1)_i. A nonpositive denominator estimate signals estimator
    failure; with _collect_failures the offending rows are NaN-ed and
    recorded instead of raising.
    """
    values = np.ascontiguousarray(values, dtype=np.float64)
    if values.ndim != 2 or values.shape[0] != red.problem.keys.n:
        raise DataValidationError(
            f"values must be {red.problem.keys.n} x d_v, got {values.shape}"
        )
    row_sums = matvec(red.problem, np.ones(red.problem.keys.n))
    bad = np.flatnonzero(row_sums <= 0.0)
    if bad.size and _collect_failures is None:
        raise EstimatorFailureError(
            f"nonpositive attention row-sum estimate on rows {bad[:8].tolist()}"
            + ("..." if bad.size > 8 else ""),
            rows=bad.tolist(),
        )
    out = np.empty((red.problem.queries.n, values.shape[1]), dtype=np.float64)
    for col in range(values.shape[1]):
        out[:, col] = matvec(red.problem, values[:, col])
    with np.errstate(divide="ignore", invalid="ignore"):
        out /= row_sums[:, None]
    if bad.size:
        out[bad] = np.nan
        _collect_failures.extend(bad.tolist())
    return out

"""Approximate matrix-vector products for asymmetric Gaussian kernel
matrices under a head/tail mass assumption, with an attention-to-kernel
reduction, empirical assumption validation, and a scaling bench."""

from .core import (
    DataValidationError,
    EstimatorFailureError,
    GaussianKernel,
    KernelProblem,
    KmvError,
    PointSet,
    eval_kernel,
    exact_matvec,
    materialize,
    sum_top_t,
)
from .driver import ApproxConfig, AttentionApproxResult, approx_attention, approx_kmv
from .kde import KdeConfig, KdeStructure, build_kde, exact_kde, query_kde
from .lightsampler import BucketPartition, RowBudget, approx_light, bucketize_x
from .lsh import (
    HashTables,
    HeavyIndex,
    LshFamilyConfig,
    brute_force_heavy,
    build_tables,
    calibrate_family,
    find_heavy,
)
from .preprocess import TrivialInputError, XPartition, compute_y_h, normalize_x, partition_x
from .reduction import (
    AttentionInstance,
    ReducedInstance,
    attention_matvec,
    normalized_attention,
    reduce_instance,
)
from .validator import (
    ValidationReport,
    c_scaling_profile,
    head_tail_max_ratio,
    order_stat_ratios,
    validate_problem,
)

__all__ = [
    "ApproxConfig",
    "AttentionApproxResult",
    "AttentionInstance",
    "BucketPartition",
    "DataValidationError",
    "EstimatorFailureError",
    "GaussianKernel",
    "HashTables",
    "HeavyIndex",
    "KdeConfig",
    "KdeStructure",
    "KernelProblem",
    "KmvError",
    "LshFamilyConfig",
    "PointSet",
    "ReducedInstance",
    "RowBudget",
    "TrivialInputError",
    "ValidationReport",
    "XPartition",
    "approx_attention",
    "approx_kmv",
    "approx_light",
    "attention_matvec",
    "brute_force_heavy",
    "bucketize_x",
    "build_kde",
    "build_tables",
    "c_scaling_profile",
    "calibrate_family",
    "compute_y_h",
    "eval_kernel",
    "exact_kde",
    "exact_matvec",
    "find_heavy",
    "head_tail_max_ratio",
    "materialize",
    "normalize_x",
    "normalized_attention",
    "order_stat_ratios",
    "partition_x",
    "query_kde",
    "reduce_instance",
    "sum_top_t",
    "validate_problem",
]

__version__ = "0.1.0"

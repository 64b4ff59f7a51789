"""Command-line interface.

Exit codes: 0 success, 2 usage error (argparse), 3 data error (bad files,
bad parameters), 4 estimator failure (nonpositive attention row sums).
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .bench import run_scaling_bench, write_ratio_svg
from .core import DataValidationError, EstimatorFailureError, GaussianKernel, KernelProblem, KmvError, PointSet, exact_matvec
from .driver import ApproxConfig, approx_attention, approx_kmv
from .io import read_matrix, write_matrix
from .kde import ESTIMATOR_KINDS
from .reduction import AttentionInstance, reduce_instance
from .validator import validate_problem


def _apply_thread_cap() -> None:
    """Best-effort export of KMV_THREADS to the usual BLAS knobs. Libraries
    that read these at load time must see the variable before launch."""
    cap = os.environ.get("KMV_THREADS")
    if not cap:
        return
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(var, cap)


def _read_points(path: str, fmt: str) -> PointSet:
    return PointSet(read_matrix(path, fmt))


def _read_x(path: str, fmt: str, n: int) -> np.ndarray:
    arr = read_matrix(path, fmt)
    vec = arr.ravel()
    if vec.size != n:
        raise DataValidationError(f"x has {vec.size} entries, expected {n}")
    return vec


def _problem(args) -> KernelProblem:
    keys = _read_points(args.keys, args.format)
    queries = _read_points(args.queries, args.format)
    return KernelProblem(queries=queries, keys=keys, kernel=GaussianKernel(args.sigma))


def _add_input_flags(p: argparse.ArgumentParser, with_x: bool = True) -> None:
    p.add_argument("--keys", required=True, help="keys matrix file (n x d)")
    p.add_argument("--queries", required=True, help="queries matrix file (n x d)")
    if with_x:
        p.add_argument("--x", required=True, help="vector file (n x 1)")
    p.add_argument("--format", choices=("kmv1", "csv"), default="kmv1",
                   help="input file format (default kmv1)")


def _add_approx_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--eps", type=float, required=True, help="l2 error target")
    p.add_argument("--gamma", type=float, default=0.109)
    p.add_argument("--alpha", type=float, default=1.0 / 3.0)
    p.add_argument("--delta", type=float, default=0.01)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--estimator", choices=ESTIMATOR_KINDS, default="uniform_sampling")


def _approx_config(args) -> ApproxConfig:
    return ApproxConfig(
        eps=args.eps,
        gamma=args.gamma,
        alpha=args.alpha,
        delta=args.delta,
        seed=args.seed,
        estimator_kind=args.estimator,
    )


def _cmd_exact(args) -> int:
    problem = _problem(args)
    x = _read_x(args.x, args.format, problem.keys.n)
    write_matrix(exact_matvec(problem, x), args.out)
    return 0


def _cmd_approx(args) -> int:
    problem = _problem(args)
    x = _read_x(args.x, args.format, problem.keys.n)
    y = approx_kmv(problem, x, _approx_config(args))
    write_matrix(y, args.out)
    return 0


def _cmd_reduce(args) -> int:
    keys = _read_points(args.keys, args.format)
    queries = _read_points(args.queries, args.format)
    red = reduce_instance(AttentionInstance(queries=queries, keys=keys))
    write_matrix(red.problem.keys.data, args.out_keys)
    write_matrix(red.problem.queries.data, args.out_queries)
    write_matrix(red.row_log_scales, args.out_scales)
    print(f"reduced to d+1={red.problem.d} with sigma={red.problem.kernel.sigma:.6g} "
          f"(sigma^2 = sqrt(d))")
    return 0


def _cmd_attention(args) -> int:
    keys = _read_points(args.keys, args.format)
    queries = _read_points(args.queries, args.format)
    values = read_matrix(args.values, args.format)
    att = AttentionInstance(queries=queries, keys=keys, values=values)
    result = approx_attention(att, _approx_config(args))
    write_matrix(result.matrix, args.out)
    if result.failed_rows:
        print(
            f"estimator failure on {len(result.failed_rows)} rows "
            f"(NaN in output): {result.failed_rows[:16]}",
            file=sys.stderr,
        )
        return 4
    return 0


def _cmd_validate(args) -> int:
    problem = _problem(args)
    report = validate_problem(
        problem,
        min_prefix=args.min_prefix,
        step=args.prefix_step,
        curve_start=args.curve_start,
        curve_step=args.curve_step,
    )
    with open(args.json, "w") as fh:
        fh.write(report.to_json(indent=2))
    print(f"max head/tail ratio: {report.max_ratio:.6g}")
    os_ = report.order_stats
    print(f"order stats: n/2n = {os_['r_2n']:.6g}, n/(n+1) = {os_['r_n1']:.6g}")
    return 0


def _cmd_bench(args) -> int:
    sizes = [int(s) for s in args.sizes.split(",") if s]
    report = run_scaling_bench(
        sizes,
        d=args.d,
        eps=args.eps,
        seed=args.seed,
        repeats=args.repeats,
        estimator_kind=args.estimator,
        uniform_budget=args.uniform_budget,
    )
    print(report.to_text())
    if args.json:
        with open(args.json, "w") as fh:
            fh.write(report.to_json(indent=2))
    if args.svg:
        write_ratio_svg(report, args.svg)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kmv",
        description="Approximate Gaussian kernel matrix-vector products, "
        "attention reduction, and assumption validation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("exact", help="dense exact product Kx")
    _add_input_flags(p)
    p.add_argument("--sigma", type=float, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_exact)

    p = sub.add_parser("approx", help="subquadratic approximate product")
    _add_input_flags(p)
    p.add_argument("--sigma", type=float, required=True)
    p.add_argument("--out", required=True)
    _add_approx_flags(p)
    p.set_defaults(fn=_cmd_approx)

    p = sub.add_parser("reduce", help="attention -> Gaussian kernel reduction")
    _add_input_flags(p, with_x=False)
    p.add_argument("--out-keys", required=True)
    p.add_argument("--out-queries", required=True)
    p.add_argument("--out-scales", required=True)
    p.set_defaults(fn=_cmd_reduce)

    p = sub.add_parser("attention", help="approximate normalized attention D^-1 A V")
    _add_input_flags(p, with_x=False)
    p.add_argument("--values", required=True)
    p.add_argument("--out", required=True)
    _add_approx_flags(p)
    p.set_defaults(fn=_cmd_attention)

    p = sub.add_parser("validate", help="head/tail assumption measurements")
    _add_input_flags(p, with_x=False)
    p.add_argument("--sigma", type=float, required=True)
    p.add_argument("--min-prefix", type=int, default=50)
    p.add_argument("--prefix-step", type=int, default=1)
    p.add_argument("--curve-start", type=int, default=50)
    p.add_argument("--curve-step", type=int, default=50)
    p.add_argument("--json", required=True, help="output report path")
    p.set_defaults(fn=_cmd_validate)

    p = sub.add_parser("bench", help="exact vs approximate scaling ladder")
    p.add_argument("--sizes", required=True, help="comma-separated ascending sizes")
    p.add_argument("--d", type=int, default=64)
    p.add_argument("--eps", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--estimator", choices=ESTIMATOR_KINDS, default="hashing_based")
    p.add_argument("--uniform-budget", action="store_true",
                   help="replace per-row budgets by their mean")
    p.add_argument("--json", default="")
    p.add_argument("--svg", default="")
    p.set_defaults(fn=_cmd_bench)
    return parser


def main(argv=None) -> int:
    _apply_thread_cap()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except EstimatorFailureError as exc:
        print(f"estimator failure: {exc}", file=sys.stderr)
        return 4
    except (DataValidationError, KmvError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())

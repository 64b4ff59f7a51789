"""Wall-clock scaling of exact vs approximate products on synthetic data.

Each ladder size gets a fresh clustered instance; exact and approximate
products run on identical inputs, each timed as the median of a few runs.
Achieved error is measured against the exact product (or an unbiased
sampled-row estimate above the oracle cap) and must sit within the
configured eps for the run to count as comparable. Log-log slopes summarize
the scaling of both methods.
"""

from __future__ import annotations

import json
import math
import os
import time
from dataclasses import dataclass, field

import numpy as np

from ._rng import derive_seed, rng_from
from .core import KernelProblem, exact_matvec, kernel_block
from .driver import ApproxConfig, approx_kmv
from .synth import ClusteredSpec, clustered_problem, gaussian_x


@dataclass(frozen=True)
class BenchCell:
    n: int
    exact_seconds: float
    approx_seconds: float
    ratio: float  # exact / approx wall clock
    rel_error: float  # ||Kx - y|| / ||x||, sampled-row estimate above the cap
    error_sampled: bool


@dataclass(frozen=True)
class BenchReport:
    cells: list[BenchCell]
    exact_slope: float | None
    approx_slope: float | None
    d: int
    eps: float
    seed: int
    estimator_kind: str
    repeats: int
    cpu_count: int = field(default_factory=lambda: os.cpu_count() or 1)
    thread_cap: str = field(default_factory=lambda: os.environ.get("KMV_THREADS", ""))

    def to_json_dict(self) -> dict:
        return {
            "d": self.d,
            "eps": self.eps,
            "seed": self.seed,
            "estimator_kind": self.estimator_kind,
            "repeats": self.repeats,
            "cpu_count": self.cpu_count,
            "thread_cap": self.thread_cap,
            "exact_slope": self.exact_slope,
            "approx_slope": self.approx_slope,
            "cells": [
                {
                    "n": c.n,
                    "exact_seconds": c.exact_seconds,
                    "approx_seconds": c.approx_seconds,
                    "ratio": c.ratio,
                    "rel_error": c.rel_error,
                    "error_sampled": c.error_sampled,
                }
                for c in self.cells
            ],
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_json_dict(), **kwargs)

    def to_text(self) -> str:
        lines = [
            f"scaling bench: d={self.d} eps={self.eps} estimator={self.estimator_kind} "
            f"repeats={self.repeats}",
            f"{'n':>8} {'exact_s':>12} {'approx_s':>12} {'exact/approx':>13} {'rel_error':>10}",
        ]
        for c in self.cells:
            lines.append(
                f"{c.n:>8} {c.exact_seconds:>12.4f} {c.approx_seconds:>12.4f} "
                f"{c.ratio:>13.3f} {c.rel_error:>10.4f}{'*' if c.error_sampled else ''}"
            )
        ex = "n/a" if self.exact_slope is None else f"{self.exact_slope:.3f}"
        ap = "n/a" if self.approx_slope is None else f"{self.approx_slope:.3f}"
        lines.append(f"log-log slopes: exact {ex}, approx {ap}")
        return "\n".join(lines)


def _median_time(fn, repeats: int) -> tuple[float, object]:
    """Median wall time over repeats; returns the first run's value."""
    times = []
    first = None
    for r in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
        if r == 0:
            first = out
    return float(np.median(times)), first


def _sampled_row_error(
    problem: KernelProblem, x: np.ndarray, y: np.ndarray, rows: np.ndarray
) -> float:
    """Unbiased l2 error estimate from exactly computed sample rows:
    sqrt(n / |rows| * sum of squared row errors)."""
    block = kernel_block(problem.kernel, problem.queries.data[rows], problem.keys.data)
    exact_rows = block @ x
    sq = float(((exact_rows - y[rows]) ** 2).sum())
    return math.sqrt(problem.queries.n / rows.size * sq)


def run_scaling_bench(
    sizes: list[int],
    d: int,
    eps: float,
    seed: int,
    *,
    cluster_size: int = 4,
    repeats: int = 3,
    estimator_kind: str = "hashing_based",
    uniform_budget: bool = False,
    oracle_cap: int = 16384,
    sampled_rows: int = 64,
) -> BenchReport:
    """Run the exact/approximate ladder and fit log-log slopes.

    The hashing KDE is the default estimator here: the uniform-sampling kind
    saturates to exact scans at the thresholds this pipeline uses, which
    would flatten the very scaling difference being measured.
    """
    if list(sizes) != sorted(sizes):
        raise ValueError("sizes must be ascending")
    cells = []
    for n in sizes:
        inst_seed = derive_seed(seed, n)
        problem = clustered_problem(
            ClusteredSpec(n=n, d=d, cluster_size=cluster_size), seed=inst_seed
        )
        x = gaussian_x(n, inst_seed)
        cfg = ApproxConfig(
            eps=eps,
            seed=inst_seed,
            estimator_kind=estimator_kind,
            uniform_budget=uniform_budget,
            truncate_heavy_budget=True,
        )
        exact_t, y_exact = _median_time(lambda: exact_matvec(problem, x), repeats)
        approx_t, y_approx = _median_time(lambda: approx_kmv(problem, x, cfg), repeats)
        x_norm = float(np.linalg.norm(x))
        if n <= oracle_cap:
            err = float(np.linalg.norm(y_exact - y_approx)) / x_norm
            sampled = False
        else:
            rng = rng_from(seed, n, 0xE)
            rows = rng.choice(n, size=min(sampled_rows, n), replace=False)
            err = _sampled_row_error(problem, x, y_approx, rows) / x_norm
            sampled = True
        cells.append(
            BenchCell(
                n=n,
                exact_seconds=exact_t,
                approx_seconds=approx_t,
                ratio=exact_t / approx_t,
                rel_error=err,
                error_sampled=sampled,
            )
        )
    exact_slope = approx_slope = None
    if len(sizes) >= 2:
        logs = np.log(np.asarray(sizes, dtype=float))
        exact_slope = float(np.polyfit(logs, np.log([c.exact_seconds for c in cells]), 1)[0])
        approx_slope = float(np.polyfit(logs, np.log([c.approx_seconds for c in cells]), 1)[0])
    return BenchReport(
        cells=cells,
        exact_slope=exact_slope,
        approx_slope=approx_slope,
        d=d,
        eps=eps,
        seed=seed,
        estimator_kind=estimator_kind,
        repeats=repeats,
    )


def write_ratio_svg(report: BenchReport, path: str) -> None:
    """Line chart of the exact/approx wall-clock ratio (needs matplotlib)."""
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError as exc:  # pragma: no cover - optional extra
        raise RuntimeError(
            "SVG output requires matplotlib (install the 'plot' extra)"
        ) from exc
    ns = [c.n for c in report.cells]
    ratios = [c.ratio for c in report.cells]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(ns, ratios, marker="o")
    ax.set_xlabel("sequence length n")
    ax.set_ylabel("exact / approx wall-clock ratio")
    ax.set_xscale("log", base=2)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)

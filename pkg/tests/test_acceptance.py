"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
lines; every tolerance is pinned here, nothing is calibrated elsewhere.
"""

import math
import time

import numpy as np
import pytest

from kmv.bench import run_scaling_bench
from kmv.core import (
    GaussianKernel,
    KernelProblem,
    PointSet,
    exact_matvec,
    materialize,
)
from kmv.driver import ApproxConfig, approx_kmv
from kmv.kde import KdeConfig, build_kde, exact_kde, query_kde
from kmv.lightsampler import approx_light
from kmv.lsh import brute_force_heavy, build_tables, calibrate_family, find_heavy
from kmv.preprocess import compute_y_h, normalize_x, partition_x
from kmv.reduction import AttentionInstance, reduce_instance
from kmv.synth import ClusteredSpec, clustered_problem, gaussian_x
from kmv.validator import head_tail_max_ratio, order_stat_ratios


def _report(num: int, name: str, ok: bool, detail: str) -> None:
    print(f"ACCEPTANCE {num} [{name}]: {'PASS' if ok else 'FAIL'} ({detail})")


def test_criterion_1_reduction_identity():
    start = time.perf_counter()
    worst = 0.0
    for trial in range(100):
        rng = np.random.default_rng(51_000 + trial)
        n = int(rng.integers(2, 65))
        d = int(rng.integers(1, 17))
        queries = rng.normal(size=(n, d))
        keys = rng.normal(size=(n, d))
        att = AttentionInstance(queries=PointSet(queries), keys=PointSet(keys))
        red = reduce_instance(att)
        lhs = np.exp(queries @ keys.T / math.sqrt(d))
        rhs = np.exp(red.row_log_scales)[:, None] * materialize(red.problem)
        worst = max(worst, float(np.max(np.abs(lhs - rhs) / lhs)))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-9 and elapsed < 5.0
    _report(1, "reduction identity", ok, f"max rel err {worst:.3e}, {elapsed:.2f}s")
    assert worst <= 1e-9
    assert elapsed < 5.0


def test_criterion_2_heavy_set_oracle_equivalence():
    start = time.perf_counter()
    alpha = 1.0 / 3.0
    min_recall = 1.0
    sound = True
    for trial in range(10):
        problem = clustered_problem(
            ClusteredSpec(n=512, d=8, spread=0.8), seed=52_000 + trial
        )
        cfg = calibrate_family(512, 8, sigma=1.0, alpha=alpha, seed=trial)
        tables = build_tables(problem.keys, cfg)
        got = find_heavy(problem, tables, cfg, brute_force_cutoff=0)
        want = brute_force_heavy(problem, alpha)
        hit = expected = 0
        for s_got, s_want in zip(got.sets, want.sets):
            if np.setdiff1d(s_got, s_want, assume_unique=True).size:
                sound = False
            expected += s_want.size
            hit += np.intersect1d(s_got, s_want, assume_unique=True).size
        min_recall = min(min_recall, hit / expected if expected else 1.0)
    elapsed = time.perf_counter() - start
    ok = sound and min_recall >= 0.999 and elapsed < 30.0
    _report(
        2, "heavy-set oracle equivalence", ok,
        f"precision {'1.0' if sound else '<1'}, min recall {min_recall:.5f}, {elapsed:.1f}s",
    )
    assert sound, "precision must be exactly 1.0"
    assert min_recall >= 0.999
    assert elapsed < 30.0


def test_criterion_3_light_sampler_guarantee():
    start = time.perf_counter()
    eps = 0.5
    successes = 0
    runs = 0
    for inst in range(8):
        problem = clustered_problem(
            ClusteredSpec(n=512, d=8, spread=0.8), seed=53_000 + inst
        )
        x, scale = normalize_x(gaussian_x(512, 53_100 + inst, min_abs=1e-4))
        part = partition_x(x, 0.109, scale)
        heavy = brute_force_heavy(problem, alpha=1.0 / 3.0)
        k = materialize(problem)
        oracle = np.zeros(512)
        for i in range(512):
            light = np.setdiff1d(part.t, heavy.sets[i], assume_unique=True)
            if light.size:
                oracle[i] = float(k[i, light] @ x[light])
        for seed in range(5):
            runs += 1
            z = approx_light(
                problem, x, part.t, heavy, eps=eps, gamma=0.109,
                seed=53_200 + 97 * inst + seed,
            )
            if float(np.max(np.abs(z - oracle))) <= eps:
                successes += 1
    elapsed = time.perf_counter() - start
    ok = successes >= math.ceil(0.95 * runs) and elapsed < 120.0
    _report(3, "light-sampler guarantee", ok, f"{successes}/{runs} runs ok, {elapsed:.1f}s")
    assert successes >= math.ceil(0.95 * runs)
    assert elapsed < 120.0


def test_criterion_4_end_to_end_guarantee():
    start = time.perf_counter()
    eps = 0.5
    results = {}
    for n in (512, 2048):
        problem = clustered_problem(ClusteredSpec(n=n, d=32), seed=54_000 + n)
        x = gaussian_x(n, 54_100 + n)
        assert (x > 0).any() and (x < 0).any(), "mixed-sign input required"
        y_exact = exact_matvec(problem, x)
        bound = eps * float(np.linalg.norm(x))
        good = 0
        for seed in range(40):
            cfg = ApproxConfig(eps=eps, seed=54_200 + seed)
            y = approx_kmv(problem, x, cfg)
            if float(np.linalg.norm(y_exact - y)) <= bound:
                good += 1
        results[n] = good
    elapsed = time.perf_counter() - start
    ok = all(g >= 38 for g in results.values()) and elapsed < 600.0
    _report(
        4, "end-to-end guarantee", ok,
        f"successes {results[512]}/40 at n=512, {results[2048]}/40 at n=2048, {elapsed:.0f}s",
    )
    assert all(g >= 38 for g in results.values())
    assert elapsed < 600.0


def test_criterion_5_kde_contract():
    beta, mu, delta = 0.25, 0.05, 0.2
    kernel = GaussianKernel(1.0)
    trials = 200
    used = violations = 0
    trial = 0
    while used < trials:
        trial += 1
        if trial > 50 * trials:
            raise RuntimeError("density generator starved the contract test")
        rng = np.random.default_rng(55_000 + trial)
        pts = PointSet(rng.normal(scale=0.8, size=(600, 2)))
        q = rng.normal(scale=0.5, size=2)
        truth = exact_kde(pts, kernel, q)
        if truth < mu:
            continue
        used += 1
        cfg = KdeConfig(beta=beta, mu=mu, delta=delta, seed=trial)
        est = query_kde(build_kde(pts, kernel, cfg), q)
        if abs(est - truth) > beta * truth:
            violations += 1
    rate = violations / trials
    bound = delta + 3.0 * math.sqrt(delta / trials)
    ok = rate <= bound
    _report(5, "kde contract", ok, f"violation rate {rate:.3f} <= {bound:.3f}")
    assert rate <= bound


def test_criterion_6_preprocess_bounds():
    # |H1| <= n^(1-gamma) on fuzzed inputs
    h1_ok = True
    for trial in range(200):
        rng = np.random.default_rng(56_000 + trial)
        n = int(rng.integers(4, 600))
        gamma = float(rng.uniform(0.0, 1.0))
        raw = rng.normal(size=n) * rng.choice([1e-6, 1e-2, 1.0, 1e3], size=n)
        if np.linalg.norm(raw) == 0.0:
            continue
        x, scale = normalize_x(raw)
        part = partition_x(x, gamma, scale)
        if part.h1.size > n ** (1.0 - gamma) * (1.0 + 1e-9):
            h1_ok = False

    # residual bound vs dense oracle with planted negligible coordinates
    resid_ok = True
    worst_margin = 0.0
    for n in (64, 256, 512):
        problem = clustered_problem(ClusteredSpec(n=n, d=4), seed=56_500 + n)
        rng = np.random.default_rng(56_600 + n)
        raw = rng.normal(size=n)
        raw[: n // 6] = rng.normal(size=n // 6) * (float(n) ** -3.0)
        x, scale = normalize_x(raw)
        part = partition_x(x, 0.109, scale)
        y_h = compute_y_h(problem, x, part)
        k = materialize(problem)
        y_t = k[:, part.t] @ x[part.t] if part.t.size else np.zeros(n)
        resid = float(np.linalg.norm(k @ x - y_h - y_t))
        worst_margin = max(worst_margin, resid / n**-2.5)
        if resid > n**-2.5 * (1.0 + 1e-9):
            resid_ok = False
    ok = h1_ok and resid_ok
    _report(
        6, "preprocess bounds", ok,
        f"|H1| bound {'held' if h1_ok else 'violated'}, "
        f"residual worst {worst_margin:.2e} of n^-2.5",
    )
    assert h1_ok
    assert resid_ok


@pytest.mark.slow
def test_criterion_7_scaling_bench():
    start = time.perf_counter()
    eps = 0.5
    report = run_scaling_bench(
        [1024, 2048, 4096, 8192], d=64, eps=eps, seed=57_000, repeats=3
    )
    elapsed = time.perf_counter() - start
    ratios = [c.ratio for c in report.cells]
    errors = [c.rel_error for c in report.cells]
    exact_ok = 1.8 <= report.exact_slope <= 2.2
    gap_ok = report.approx_slope <= report.exact_slope - 0.1
    err_ok = all(e <= eps for e in errors)
    mono_ok = all(a <= b * (1.0 + 1e-9) for a, b in zip(ratios, ratios[1:]))
    ok = exact_ok and gap_ok and err_ok and mono_ok and elapsed < 1200.0
    _report(
        7, "scaling bench", ok,
        f"exact slope {report.exact_slope:.2f}, approx {report.approx_slope:.2f}, "
        f"ratios {[round(r, 3) for r in ratios]}, max err {max(errors):.3f}, {elapsed:.0f}s",
    )
    assert exact_ok, f"exact slope {report.exact_slope} outside 2.0 +- 0.2"
    assert gap_ok, "approx exponent must be at least 0.1 below exact"
    assert err_ok, f"bench errors exceed eps: {errors}"
    assert mono_ok, f"exact/approx ratio must be non-decreasing: {ratios}"
    assert elapsed < 1200.0


def test_criterion_8_validator_determinism():
    mismatches = 0
    for trial in range(50):
        rng = np.random.default_rng(58_000 + trial)
        n = int(rng.integers(8, 257))
        d = int(rng.integers(1, 6))
        sigma = float(rng.uniform(0.3, 3.0))
        problem = KernelProblem(
            queries=PointSet(rng.normal(size=(n, d))),
            keys=PointSet(rng.normal(size=(n, d))),
            kernel=GaussianKernel(sigma),
        )
        min_prefix = int(rng.integers(2, max(3, n // 2)))
        step = int(rng.integers(1, 8))
        _, per_prefix = head_tail_max_ratio(problem, min_prefix=min_prefix, step=step)
        k = materialize(problem)
        for i, ratio in per_prefix:
            flat = np.sort(k[:i, :i], axis=None)[::-1]
            head = float(flat[:i].sum())
            tail = float(flat[i:].sum())
            if ratio != tail / head:
                mismatches += 1
        r_2n, r_n1 = order_stat_ratios(problem)
        flat = np.sort(k, axis=None)[::-1]
        want_2n = flat[n - 1] / flat[2 * n - 1] if flat[2 * n - 1] > 0 else np.inf
        want_n1 = flat[n - 1] / flat[n] if flat[n] > 0 else np.inf
        if not (r_2n == want_2n or (np.isinf(r_2n) and np.isinf(want_2n))):
            mismatches += 1
        if not (r_n1 == want_n1 or (np.isinf(r_n1) and np.isinf(want_n1))):
            mismatches += 1
    ok = mismatches == 0
    _report(8, "validator determinism", ok, f"{mismatches} mismatches over 50 matrices")
    assert mismatches == 0

"""Acceptance criteria, one test each, printing a PASS/FAIL line per criterion."""

import itertools
import math
import statistics
import time
from importlib.resources import files

import numpy as np
import pytest

from hetprice import (
    AsianArithmetic,
    BarrierKnockOut,
    LocalCpu,
    MetricModels,
    Portfolio,
    PricingTask,
    brute_force,
    estimate,
    fit_latency,
    frontier,
    load_table1,
    objective,
    optimize,
    parse_task_file,
    run,
)
from hetprice.mcengine import chunk_moments, run_chunks
from hetprice.metrics import benchmark, fit_confidence
from hetprice.orchestrator import fit_models

from conftest import bs_european, grid_cell_bound, heston_flat, random_instance
from oracles import bs_price

BS_REFERENCE = bs_price(100, 100, 0.05, 0.2, 1.0)


@pytest.fixture
def verdict(capsys):
    def _verdict(number, title, ok, detail):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {number}: {title} ({detail})")
        assert ok, detail

    return _verdict


def _example(name):
    return parse_task_file(files("hetprice.data").joinpath(name).read_bytes())


def test_criterion_1_analytic_oracle(verdict, bs_task):
    t0 = time.perf_counter()
    est = estimate(run_chunks(bs_task, 10**6))
    elapsed = time.perf_counter() - t0
    err = abs(est.price - BS_REFERENCE)
    ok = err <= 3 * est.ci_half_width and elapsed < 30
    verdict(1, "Black-Scholes oracle at 1e6 paths", ok,
            f"price {est.price:.5f} vs {BS_REFERENCE:.5f}, |err| {err:.5f} <= 3*ci {3 * est.ci_half_width:.5f}, "
            f"{elapsed:.2f} s")


def test_criterion_2_ci_coverage(verdict):
    covered = 0
    for rep in range(200):
        est = estimate(run_chunks(bs_european(seed=10_000 + rep), 10**4))
        covered += abs(est.price - BS_REFERENCE) <= est.ci_half_width
    rate = covered / 200
    verdict(2, "95% CI coverage over 200 runs of 1e4 paths", 0.92 <= rate <= 0.98, f"coverage {rate:.3f}")


def test_criterion_3_degenerate_models(verdict):
    n = 200_000
    heston = estimate(run_chunks(heston_flat(xi=0.0, task_id="shared", steps=16), n))
    bs = estimate(run_chunks(bs_european(task_id="shared", steps=16), n))
    heston_gap = abs(heston.price - bs.price)
    heston_ok = heston_gap <= math.hypot(heston.ci_half_width, bs.ci_half_width)

    base = bs_european(task_id="shared", steps=16)
    barrier_task = PricingTask("shared", base.underlying, BarrierKnockOut(100.0, 1.0, 1e8, "up"), 16, base.base_seed)
    barrier = estimate(run_chunks(barrier_task, n))
    barrier_gap = abs(barrier.price - bs.price)
    barrier_ok = barrier_gap <= math.hypot(barrier.ci_half_width, bs.ci_half_width)

    asian_task = PricingTask("shared", base.underlying, AsianArithmetic(100.0, 1.0, 1), 16, base.base_seed)
    asian_ok = run_chunks(asian_task, n).moments() == run_chunks(base, n).moments()

    verdict(3, "degenerate-model equivalence", heston_ok and barrier_ok and asian_ok,
            f"heston gap {heston_gap:.2e}, barrier gap {barrier_gap:.2e}, asian bit-identical {asian_ok}")


def test_criterion_4_model_recovery(verdict):
    worst = 0.0
    for platform in load_table1():
        for task in _example("portfolio.json"):
            model = fit_latency(benchmark(platform, task))
            worst = max(worst, abs(model.rate_ / platform.rate_for(task) - 1), abs(model.setup_s_ - platform.setup_s))
    task = bs_european()
    predicted = fit_confidence(benchmark(LocalCpu("cpu"), task)).predict([10**6])[0]
    realized = estimate(run_chunks(task.with_seed(4242), 10**6)).ci_half_width
    ci_err = abs(predicted / realized - 1)
    verdict(4, "latency and confidence model recovery", worst <= 1e-9 and ci_err <= 0.15,
            f"worst latency rel err {worst:.2e}, ci prediction err {ci_err:.2%}")


def test_criterion_5_local_extrapolation(verdict):
    platform = LocalCpu("cpu", workers=1)
    task = bs_european()
    sizes = (1 << 14, 1 << 16)
    model = fit_latency(benchmark(platform, task, sizes, repeats=5))
    n = 100 * max(sizes)
    measured = statistics.median(platform.execute(task, n, 1 << 40).elapsed_s for _ in range(5))
    predicted = model.latency(n)
    err = abs(predicted / measured - 1)
    verdict(5, "LocalCpu 100x extrapolation", err <= 0.25,
            f"predicted {predicted:.3f} s, measured {measured:.3f} s, err {err:.1%}")


def test_criterion_6_optimizer_exactness(verdict):
    rng = np.random.default_rng(2024)
    worst_gap = -math.inf
    failures = 0
    for _ in range(100):
        P, T = (int(x) for x in rng.integers(1, 4, size=2))
        models, N = random_instance(rng, P, T)
        F_opt = objective(optimize(models, N), models, N)
        F_bf = objective(brute_force(models, N, 0.01), models, N)
        cell = grid_cell_bound(models, N)
        worst_gap = max(worst_gap, (F_opt - F_bf) / cell)
        failures += F_opt > F_bf + cell
    worst_rel = 0.0
    for _ in range(50):
        P = int(rng.integers(1, 6))
        rate = 10 ** rng.uniform(3, 8, size=(P, 1))
        models = MetricModels.from_arrays(np.zeros_like(rate), rate)
        N = np.array([int(10 ** rng.uniform(2, 10))])
        F = objective(optimize(models, N), models, N)
        worst_rel = max(worst_rel, abs(F / (N[0] / rate.sum()) - 1))
    verdict(6, "optimizer vs brute force and closed form", failures == 0 and worst_rel <= 1e-9,
            f"{failures} of 100 beyond one grid cell (worst (F_opt - F_bf)/cell {worst_gap:.3f}), "
            f"closed-form rel err {worst_rel:.1e}")


def test_criterion_7_table1_ratios(verdict):
    registry = load_table1()
    worst = 0.0
    for task in _example("portfolio.json"):
        latency = {p.name: p.execute(task, 10**5, 0).elapsed_s for p in registry}
        for a, b in itertools.combinations(registry, 2):
            expected = b.rate_for(task) / a.rate_for(task)
            worst = max(worst, abs(latency[a.name] / latency[b.name] / expected - 1))
    stratix = registry["altera_stratix_v_gxa7"].execute(heston_flat(), 10**5, 0).elapsed_s
    opteron = registry["amd_opteron_6272"].execute(heston_flat(), 10**5, 0).elapsed_s
    headline = opteron / stratix
    ok = worst <= 1e-6 and abs(headline / (274.87 / 28.99) - 1) <= 1e-6
    verdict(7, "shipped profile ratio closure", ok, f"worst rel err {worst:.1e}, Stratix/Opteron speedup {headline:.4f}")


def test_criterion_8_frontier(verdict):
    portfolio = _example("portfolio.json")
    models, _ = fit_models(portfolio, load_table1())
    base = (0.01, 0.005)
    points = frontier(portfolio, models, [tuple(s * b for b in base) for s in (1, 2, 4)])
    F = [p.makespan_s for p in points]
    decreasing = F[0] > F[1] > F[2]
    r1, r2 = F[0] / F[2], F[1] / F[2]
    ratio_ok = abs(r1 / 16 - 1) <= 0.01 and abs(r2 / 4 - 1) <= 0.01
    verdict(8, "frontier monotone, 16:4:1 at zero setup", decreasing and ratio_ok,
            f"ratios {r1:.4f}:{r2:.4f}:1")


def test_criterion_9_end_to_end(verdict):
    portfolio = _example("portfolio.json")
    targets = [0.05, 0.02]
    chunk_moments.cache_clear()
    first = run(portfolio, load_table1(), targets).to_dict()
    chunk_moments.cache_clear()
    second = run(portfolio, load_table1(), targets).to_dict()
    worst = max(t["ci_half_width"] / t["target_ci"] for t in first["tasks"])
    identical = first == second
    verdict(9, "end-to-end targets met and reproducible", worst <= 1.2 and identical,
            f"worst achieved/target {worst:.3f}, bit-identical {identical}")

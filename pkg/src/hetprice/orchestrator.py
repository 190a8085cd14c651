"""End-to-end pipeline: benchmark, model, allocate, execute, merge, report."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .allocator import MetricModels, build_cost_matrix, frontier, objective, optimize
from .errors import InfeasibleError, NoFeasiblePointError, ValidationError
from .mcengine import PartialResult, estimate, merge
from .metrics import DEFAULT_SIZES, MAX_PATHS, benchmark, fit_confidence, fit_latency

__all__ = [
    "RunReport",
    "fit_models",
    "model_dump",
    "allocation_dump",
    "plan_shards",
    "run",
    "select_tradeoff",
    "default_ladder",
    "broadcast_targets",
    "run_with_budget",
]

log = logging.getLogger(__name__)


@dataclass
class RunReport:
    tasks: list
    platforms: list
    makespan_s: dict
    mixed_domain: bool
    predicted_makespan_s: float
    allocation: dict
    models: list
    observations: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "tasks": self.tasks,
            "platforms": self.platforms,
            "makespan_s": self.makespan_s,
            "mixed_domain": self.mixed_domain,
            "predicted_makespan_s": self.predicted_makespan_s,
            "allocation": self.allocation,
            "models": self.models,
        }


def broadcast_targets(targets, n_tasks: int) -> tuple:
    targets = [float(t) for t in targets]
    if len(targets) == 1:
        targets = targets * n_tasks
    if len(targets) != n_tasks:
        raise ValidationError(f"expected 1 or {n_tasks} ci targets, got {len(targets)}", field="ci_target")
    for t in targets:
        if not (t > 0 and math.isfinite(t)):
            raise ValidationError(f"ci target must be > 0, got {t!r}", field="ci_target")
    return tuple(targets)


def fit_models(portfolio, registry, sizes=DEFAULT_SIZES, repeats: int = 1):
    """Benchmark every (platform, task) pair and fit the metric models.

    Numerics do not depend on the platform, so the confidence model comes
    from the first platform's observations.
    """
    latency = {}
    confidence = {}
    observations = {}
    for task in portfolio:
        for i, platform in enumerate(registry):
            obs = benchmark(platform, task, sizes, repeats=repeats)
            observations[(platform.name, task.id)] = obs
            latency[(platform.name, task.id)] = fit_latency(obs)
            if i == 0:
                confidence[task.id] = fit_confidence(obs)
    models = MetricModels(registry.names, portfolio.ids, latency, confidence)
    return models, observations


def model_dump(models: MetricModels) -> list:
    return [
        {
            "task_id": task,
            "confidence": {"k": models.confidence[task].k_},
            "latency": [
                {
                    "platform": p,
                    "setup_s": models.latency[(p, task)].setup_s_,
                    "rate": models.latency[(p, task)].rate_,
                }
                for p in models.platforms
            ],
        }
        for task in models.tasks
    ]


def allocation_dump(A, models: MetricModels) -> dict:
    return {
        p: {t: float(A[i, j]) for j, t in enumerate(models.tasks)}
        for i, p in enumerate(models.platforms)
    }


def plan_shards(A, N, chunk_size: int):
    """Round each share up to whole paths and lay out disjoint chunk ranges.

    Returns ``paths[p][t]`` and ``first_chunk[p][t]``. Each task's chunk
    indices start at 0 and run contiguously in platform order; a shard's
    last chunk may be partial.
    """
    P, T = A.shape
    paths = [[0] * T for _ in range(P)]
    first = [[0] * T for _ in range(P)]
    for t in range(T):
        cursor = 0
        for p in range(P):
            if A[p, t] <= 0:
                continue
            n = max(1, math.ceil(float(A[p, t]) * int(N[t])))
            paths[p][t] = n
            first[p][t] = cursor
            cursor += math.ceil(n / chunk_size)
        if sum(paths[p][t] for p in range(P)) > MAX_PATHS:
            raise InfeasibleError(f"task #{t} needs more paths than fit in 64 bits")
    return paths, first


def _run_platform(platform, shards):
    return [(t, platform.execute(task, n, first)) for t, task, n, first in shards]


def run(portfolio, registry, targets, *, sizes=DEFAULT_SIZES, repeats: int = 1,
        chunk_size: int | None = None, models: MetricModels | None = None) -> RunReport:
    """Price every task to its CI target using all platforms.

    ``targets`` holds one CI half-width per task (or one for all).
    """
    targets = broadcast_targets(targets, len(portfolio))
    if chunk_size is not None:
        registry.with_chunk_size(chunk_size)
    chunk = registry[0].chunk_size
    if models is None:
        models, _ = fit_models(portfolio, registry, sizes, repeats)
    _, N = build_cost_matrix(models, targets)
    A = optimize(models, N)
    predicted = objective(A, models, N)
    paths, first = plan_shards(A, N, chunk)
    log.info("allocation %s, predicted makespan %.6g s", A.tolist(), predicted)

    tasks = list(portfolio)
    P, T = A.shape
    with ThreadPoolExecutor(max_workers=P) as pool:
        futures = [
            pool.submit(
                _run_platform,
                platform,
                [(t, tasks[t], paths[p][t], first[p][t]) for t in range(T) if paths[p][t] > 0],
            )
            for p, platform in enumerate(registry)
        ]
        results = [f.result() for f in futures]

    merged = [PartialResult.zero() for _ in range(T)]
    per_platform = [[None] * T for _ in range(P)]
    for p, shard_results in enumerate(results):
        for t, part in shard_results:
            merged[t] = merge(merged[t], part)
            per_platform[p][t] = part

    task_rows = []
    for t, task in enumerate(tasks):
        est = estimate(merged[t])
        task_rows.append({
            "id": task.id,
            "price": est.price,
            "std_error": est.std_error,
            "ci_half_width": est.ci_half_width,
            "target_ci": targets[t],
            "required_paths": int(N[t]),
            "paths": merged[t].n,
            "platforms": {
                registry[p].name: {"paths": paths[p][t], "latency_s": per_platform[p][t].elapsed_s}
                for p in range(P)
                if paths[p][t] > 0
            },
        })

    platform_rows = []
    domains = {}
    for p, platform in enumerate(registry):
        latency = sum(per_platform[p][t].elapsed_s for t in range(T) if paths[p][t] > 0)
        model_latency = sum(
            models.latency[(platform.name, tasks[t].id)].latency(paths[p][t])
            for t in range(T)
            if paths[p][t] > 0
        )
        platform_rows.append({
            "name": platform.name,
            "clock": platform.clock,
            "paths": sum(paths[p]),
            "latency_s": latency,
            "predicted_latency_s": model_latency,
        })
        domains[platform.clock] = max(domains.get(platform.clock, 0.0), latency)

    return RunReport(
        tasks=task_rows,
        platforms=platform_rows,
        makespan_s=domains,
        mixed_domain=len(domains) > 1,
        predicted_makespan_s=predicted,
        allocation=allocation_dump(A, models),
        models=model_dump(models),
    )


def default_ladder(models: MetricModels, lo: int = 10, hi: int = 30) -> list:
    """Target vectors asking every task for ``2**e`` paths, ``e = lo..hi``."""
    ladder = []
    for e in range(lo, hi + 1):
        n = float(1 << e)
        tv = tuple(
            max(models.confidence[t].k_, 1e-300) / math.sqrt(n) for t in models.tasks
        )
        ladder.append(tv)
    return ladder


def select_tradeoff(points, index: int | None = None, max_latency: float | None = None) -> tuple:
    """Pick a frontier point's targets by position or by a latency budget.

    With ``max_latency``, returns the tightest targets whose optimal
    makespan fits the budget.
    """
    if not points:
        raise ValueError("empty frontier")
    if (index is None) == (max_latency is None):
        raise ValueError("give exactly one of index or max_latency")
    if index is not None:
        return points[index].targets
    feasible = [pt for pt in points if pt.makespan_s <= max_latency]
    if not feasible:
        best = min(pt.makespan_s for pt in points)
        raise NoFeasiblePointError(
            f"no frontier point within {max_latency!r} s (fastest is {best!r} s)"
        )
    # points are ordered tightest first
    return feasible[0].targets


def run_with_budget(portfolio, registry, max_latency: float, ladder=None, **kwargs) -> RunReport:
    """Choose the tightest ladder targets that fit ``max_latency``, then run."""
    sizes = kwargs.pop("sizes", DEFAULT_SIZES)
    repeats = kwargs.pop("repeats", 1)
    if kwargs.get("chunk_size") is not None:
        registry.with_chunk_size(kwargs["chunk_size"])
    models, _ = fit_models(portfolio, registry, sizes, repeats)
    ladder = ladder if ladder is not None else default_ladder(models)
    points = frontier(portfolio, models, ladder)
    targets = select_tradeoff(points, max_latency=max_latency)
    return run(portfolio, registry, targets, models=models, **kwargs)

"""Command-line entry point: ``hetprice <command> ...``.

Exit codes: 0 success, 2 invalid input, 3 infeasible target or budget.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path

from . import allocator, orchestrator
from .errors import InfeasibleError, ValidationError
from .findomain import Portfolio, parse_task_file
from .mcengine import DEFAULT_CHUNK_SIZE, estimate
from .metrics import DEFAULT_SIZES, benchmark
from .platforms import LocalCpu, PlatformRegistry, load_registry

EXIT_VALIDATION = 2
EXIT_INFEASIBLE = 3


def _read(path: str) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise ValidationError(f"cannot read {path}: {exc.strerror}") from None


def _floats(text: str, name: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ValidationError(f"expected comma-separated numbers, got {text!r}", field=name) from None


def _ints(text: str, name: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ValidationError(f"expected comma-separated integers, got {text!r}", field=name) from None


def _portfolio(args) -> Portfolio:
    portfolio = parse_task_file(_read(args.tasks))
    if args.seed is not None:
        portfolio = Portfolio(tuple(t.with_seed(args.seed) for t in portfolio))
    return portfolio


def _registry(args, required=True) -> PlatformRegistry:
    if args.platforms is None:
        if required:
            raise ValidationError("--platforms is required", field="platforms")
        registry = PlatformRegistry([LocalCpu("local")])
    else:
        registry = load_registry(_read(args.platforms))
    return registry.with_chunk_size(args.chunk_size)


def _sizes(args):
    return _ints(args.sizes, "sizes") if args.sizes else list(DEFAULT_SIZES)


def _emit(payload, args, rows=None, header=None):
    if args.format == "csv" and rows is not None:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
        sys.stdout.write(buf.getvalue())
    else:
        sys.stdout.write(json.dumps(payload, indent=2) + "\n")


# --- commands ---------------------------------------------------------------


def cmd_price(args):
    portfolio = _portfolio(args)
    registry = _registry(args, required=False)
    try:
        platform = registry[args.platform]
    except KeyError:
        raise ValidationError(f"unknown platform {args.platform!r}", field="platform") from None
    if args.paths < 2:
        raise ValidationError("need at least 2 paths", field="paths")
    out = []
    for task in portfolio:
        result = platform.execute(task, args.paths, 0)
        row = {"task_id": task.id, **estimate(result).to_dict(), "elapsed_s": result.elapsed_s}
        out.append(row)
    header = ["task_id", "price", "std_error", "ci_half_width", "n", "elapsed_s"]
    _emit({"platform": platform.name, "estimates": out}, args,
          [[r[h] for h in header] for r in out], header)


def cmd_bench(args):
    portfolio = _portfolio(args)
    registry = _registry(args)
    sizes = _sizes(args)
    out = []
    for task in portfolio:
        for platform in registry:
            for obs in benchmark(platform, task, sizes, repeats=args.repeats):
                out.append({"platform": platform.name, "task_id": task.id, **obs.to_dict()})
    header = ["platform", "task_id", "n", "elapsed_s", "sample_std"]
    _emit({"observations": out}, args, [[r[h] for h in header] for r in out], header)


def cmd_model(args):
    portfolio = _portfolio(args)
    registry = _registry(args)
    models, _ = orchestrator.fit_models(portfolio, registry, _sizes(args), args.repeats)
    _emit({"models": orchestrator.model_dump(models)}, args)


def cmd_frontier(args):
    portfolio = _portfolio(args)
    registry = _registry(args)
    levels = _floats(args.ci_targets, "ci_targets")
    ladder = [orchestrator.broadcast_targets([lv], len(portfolio)) for lv in levels]
    models, _ = orchestrator.fit_models(portfolio, registry, _sizes(args), args.repeats)
    points = allocator.frontier(portfolio, models, ladder)
    header = ["ci_scale", "makespan_s"] + [
        f"alloc_{p}_{t}" for p in models.platforms for t in models.tasks
    ]
    rows = [[pt.targets[0], pt.makespan_s, *pt.allocation.ravel().tolist()] for pt in points]
    payload = {
        "points": [
            {
                "ci_scale": pt.targets[0],
                "targets": list(pt.targets),
                "makespan_s": pt.makespan_s,
                "required_paths": list(pt.demands),
                "allocation": orchestrator.allocation_dump(pt.allocation, models),
            }
            for pt in points
        ]
    }
    if args.format == "json":
        _emit(payload, args)
    else:
        args.format = "csv"
        _emit(payload, args, rows, header)


def cmd_partition(args):
    portfolio = _portfolio(args)
    registry = _registry(args)
    targets = orchestrator.broadcast_targets(_floats(args.ci_target, "ci_target"), len(portfolio))
    models, _ = orchestrator.fit_models(portfolio, registry, _sizes(args), args.repeats)
    C, N = allocator.build_cost_matrix(models, targets)
    A = allocator.optimize(models, N)
    _emit({
        "targets": dict(zip(models.tasks, targets)),
        "required_paths": {t: int(n) for t, n in zip(models.tasks, N)},
        "cost_matrix": orchestrator.allocation_dump(C, models),
        "allocation": orchestrator.allocation_dump(A, models),
        "makespan_s": allocator.objective(A, models, N),
    }, args)


def cmd_run(args):
    portfolio = _portfolio(args)
    registry = _registry(args)
    kwargs = {"sizes": _sizes(args), "repeats": args.repeats}
    if args.max_latency is not None:
        report = orchestrator.run_with_budget(portfolio, registry, args.max_latency, **kwargs)
    else:
        targets = _floats(args.ci_target, "ci_target")
        report = orchestrator.run(portfolio, registry, targets, **kwargs)
    _emit(report.to_dict(), args)


# --- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, help="override every task's base_seed")
    common.add_argument("--chunk-size", type=int, default=DEFAULT_CHUNK_SIZE)
    common.add_argument("--format", choices=("json", "csv"), default=None)
    common.add_argument("--sizes", help="benchmark sizes, comma-separated")
    common.add_argument("--repeats", type=int, default=1, help="timed repeats per benchmark size")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="hetprice", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("price", parents=[common], help="price directly on one platform")
    p.add_argument("tasks")
    p.add_argument("--platform", default="local")
    p.add_argument("--platforms")
    p.add_argument("--paths", type=int, required=True)
    p.set_defaults(func=cmd_price)

    p = sub.add_parser("bench", parents=[common], help="benchmark observations")
    p.add_argument("tasks")
    p.add_argument("--platforms", required=True)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("model", parents=[common], help="fitted latency and confidence models")
    p.add_argument("tasks")
    p.add_argument("--platforms", required=True)
    p.set_defaults(func=cmd_model)

    p = sub.add_parser("frontier", parents=[common], help="latency / CI tradeoff curve")
    p.add_argument("tasks")
    p.add_argument("--platforms", required=True)
    p.add_argument("--ci-targets", required=True)
    p.set_defaults(func=cmd_frontier)

    p = sub.add_parser("partition", parents=[common], help="optimal allocation for CI targets")
    p.add_argument("tasks")
    p.add_argument("--platforms", required=True)
    p.add_argument("--ci-target", required=True)
    p.set_defaults(func=cmd_partition)

    p = sub.add_parser("run", parents=[common], help="full pipeline")
    p.add_argument("tasks")
    p.add_argument("--platforms", required=True)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--ci-target")
    group.add_argument("--max-latency", type=float)
    p.set_defaults(func=cmd_run)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if not 1 <= args.chunk_size <= 1 << 24:
            raise ValidationError("must be in [1, 16777216]", field="chunk_size")
        args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    return 0


if __name__ == "__main__":
    sys.exit(main())

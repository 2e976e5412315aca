"""Command line entry point: ``supplyaco <command> ...``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 run failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .acs_engine import AcsParams
from .bench_harness import (
    BenchResults, emit_report, load_config, load_experiment_instance, read_traces, run_matrix,
    timing_run, with_overrides,
)
from .cost_engine import check_constraints, proximity
from .errors import ConfigError, DataError, RunError, SupplyAcoError
from .instance_model import load_instance, validate_instance, write_instance
from .oracle_and_gen import GenSpec, brute_force_optimum, generate_instance, search_space_size
from .parallel_runtime import RunConfig, run

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_RUN = 0, 2, 3, 4

_ARCH = {"iac": "IAC", "pa": "PA", "pawv": "PAwV"}
_PRECISION = {"f32": "single", "f64": "double", "single": "single", "double": "double"}


def _arch(text: str) -> str:
    try:
        return _ARCH[text.lower()]
    except KeyError:
        raise argparse.ArgumentTypeError(f"unknown architecture {text!r}") from None


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _dataset_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data-dir", type=Path, required=True)
    p.add_argument("--mapping", type=Path, help="column mapping file for renamed headers")
    p.add_argument("--lenient", action="store_true",
                   help="drop orders without a feasible route instead of failing")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="supplyaco",
                                     description="Parallel ACS solver for outbound routing.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="run the solver once")
    _dataset_args(p)
    p.add_argument("--arch", type=_arch, default="PA")
    p.add_argument("--instances", type=int, default=1)
    p.add_argument("--ants", type=int, default=1)
    p.add_argument("--budget", type=int, default=768_000)
    p.add_argument("--iterations", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--precision", choices=sorted(_PRECISION), default="f64")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--time-limit", type=float)
    p.add_argument("--update-from", choices=("iteration", "best_so_far"), default="best_so_far")
    p.add_argument("--best-known", type=float, help="reference cost for proximity")
    p.add_argument("--out", type=Path, help="write the result as JSON here")

    bench = sub.add_parser("bench", help="experiment protocol")
    bsub = bench.add_subparsers(dest="bench_command", required=True)
    for name in ("convergence", "timing"):
        b = bsub.add_parser(name)
        b.add_argument("config", type=Path, help="TOML experiment config")
        b.add_argument("--output-dir", type=Path)
        b.add_argument("--data-dir", type=Path)
        b.add_argument("--arch", type=_arch, action="append", dest="architectures")
        b.add_argument("--instances", type=_int_list, dest="instance_counts")
        if name == "convergence":
            b.add_argument("--jobs", type=int)
            b.add_argument("--repeats", type=int)

    p = sub.add_parser("report", help="recompute tables from raw traces")
    p.add_argument("config", type=Path)
    p.add_argument("--runs", type=Path, help="runs.csv (default: <output_dir>/runs.csv)")
    p.add_argument("--output-dir", type=Path)
    p.add_argument("--best-known", type=float)

    p = sub.add_parser("validate", help="lint a dataset")
    _dataset_args(p)

    p = sub.add_parser("oracle", help="brute-force optimum of a tiny instance")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--data-dir", type=Path)
    src.add_argument("--generate", type=int, metavar="SEED", help="use a synthetic instance")
    p.add_argument("--orders", type=int, default=3)
    p.add_argument("--mapping", type=Path)

    p = sub.add_parser("generate", help="write a synthetic instance as CSV tables")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--orders", type=int, default=3)
    p.add_argument("--warehouses", type=int, default=2)
    return parser


def _load(args):
    return load_instance(args.data_dir, args.mapping, strict=not getattr(args, "lenient", False))


def _cmd_solve(args) -> int:
    instance = _load(args)
    config = RunConfig(
        architecture=args.arch, parallel_instances=args.instances, ants_per_instance=args.ants,
        solution_budget=args.budget, master_seed=args.seed, precision=_PRECISION[args.precision],
        iterations=args.iterations, workers=args.workers, time_limit_s=args.time_limit,
        update_from=args.update_from, params=AcsParams())
    result = run(config, instance)
    best = result.best_solution
    violations = check_constraints(instance, best.assignment)
    if violations:
        raise RunError(f"best solution violates constraints: {violations[:3]}")
    ref = args.best_known or instance.best_known_cost
    payload = {
        "architecture": config.architecture,
        "best_cost": best.cost.total,
        "warehouse_cost": best.cost.warehouse_total,
        "transport_cost": best.cost.transport_total,
        "proximity": proximity(ref, best.cost.total) if ref else None,
        "iterations": result.iterations_executed,
        "solutions_constructed": result.solutions_constructed,
        "seconds_per_iteration": result.wall_time_per_iteration_s,
        "convergence": [[it, c] for it, c in result.convergence],
        "assignment": [
            {"order_id": o.order_id,
             "warehouse": instance.warehouses[opt.warehouse_index].warehouse_id,
             "lane": list(opt.lane.key) if opt.lane is not None else None}
            for o, opt in zip(instance.orders,
                              (instance.route_options[k][c]
                               for k, c in enumerate(best.assignment.choices)))],
    }
    print(f"{config.architecture}: best cost {best.cost.total:.2f} after "
          f"{result.iterations_executed} iterations")
    if args.out:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        args.out.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    return EXIT_OK


def _bench_config(args):
    overrides = {k: getattr(args, k, None)
                 for k in ("output_dir", "data_dir", "architectures", "instance_counts",
                           "jobs", "repeats")}
    return with_overrides(load_config(args.config), **overrides)


def _cmd_bench(args) -> int:
    config = _bench_config(args)
    if args.bench_command == "convergence":
        results = run_matrix(config, progress=lambda t: print(
            f"{t.architecture} n={t.instance_count} rep={t.repeat}: {t.best_cost:.2f}",
            flush=True))
    else:
        instance = load_experiment_instance(config)  # excluded from every timing window
        results = BenchResults(config)
        for arch in config.architectures:
            for n in config.instance_counts:
                rec = timing_run(config, arch, n, instance)
                results.timings.append(rec)
                print(f"{arch} n={n}: {rec.seconds_per_iteration:.6f} s/iteration", flush=True)
    if args.bench_command == "convergence":
        paths = emit_report(results, parts=("convergence", "checkpoint", "runs"))
    else:
        paths = emit_report(results, parts=("timing",), meta_name="timing_meta.json")
    for path in paths:
        print(path)
    return EXIT_OK


def _cmd_report(args) -> int:
    config = with_overrides(load_config(args.config), output_dir=args.output_dir)
    runs = args.runs or config.output_dir / "runs.csv"
    try:
        traces = read_traces(runs)
    except OSError as exc:
        raise DataError(f"cannot read {runs}: {exc}") from exc
    archs = tuple(dict.fromkeys(t.architecture for t in traces)) or config.architectures
    counts = tuple(sorted({t.instance_count for t in traces})) or config.instance_counts
    repeats = max((t.repeat + 1 for t in traces), default=config.repeats)
    config = with_overrides(config, architectures=archs, instance_counts=counts, repeats=repeats)
    for path in emit_report(BenchResults(config, traces), best_known_cost=args.best_known,
                            parts=("convergence", "checkpoint"), meta_name="report_meta.json"):
        print(path)
    return EXIT_OK


def _cmd_validate(args) -> int:
    instance = load_instance(args.data_dir, args.mapping, strict=False)
    issues = validate_instance(instance)
    for issue in issues:
        print(f"{issue.kind}\t{issue.subject}\t{issue.detail}")
    print(f"{instance.n_orders} orders, {len(instance.warehouses)} warehouses, "
          f"{len(instance.lanes)} lanes, {len(issues)} issue(s)")
    return EXIT_DATA if issues else EXIT_OK


def _cmd_oracle(args) -> int:
    if args.generate is not None:
        instance = generate_instance(GenSpec(n_orders=args.orders, seed=args.generate))
    else:
        instance = load_instance(args.data_dir, args.mapping)
    assignment, cost = brute_force_optimum(instance)
    print(f"search space {search_space_size(instance)}; optimum {cost!r}; "
          f"assignment {list(assignment.choices)}")
    return EXIT_OK


def _cmd_generate(args) -> int:
    instance = generate_instance(GenSpec(n_orders=args.orders, n_warehouses=args.warehouses,
                                         seed=args.seed))
    print(write_instance(instance, args.out))
    return EXIT_OK


_COMMANDS = {"solve": _cmd_solve, "bench": _cmd_bench, "report": _cmd_report,
             "validate": _cmd_validate, "oracle": _cmd_oracle, "generate": _cmd_generate}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (RunError, SupplyAcoError, ValueError) as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return EXIT_RUN


if __name__ == "__main__":
    sys.exit(main())

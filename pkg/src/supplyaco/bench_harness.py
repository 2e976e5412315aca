"""Experiment protocol: convergence matrices, checkpoint tables and timing runs.

Raw per-run traces are the source of truth. They hold costs only, so every
proximity figure is recomputed from ``best_known_cost`` at report time and a
different reference cost rescales all tables without rerunning anything.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
import platform
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Callable, Iterable, Sequence

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from .acs_engine import AcsParams
from .cost_engine import proximity
from .errors import ConfigError
from .instance_model import ProblemInstance, load_instance
from .parallel_runtime import RunConfig, normalize_architecture, run
from .rng import cell_seed

DEFAULT_INSTANCE_COUNTS = tuple(2**n for n in range(11))
DEFAULT_CHECKPOINTS = (99.00, 99.25, 99.50, 99.60, 99.75, 99.90)
DEFAULT_BEST_KNOWN = 2_701_367.58

RUNS_FILE = "runs.csv"
RUNS_HEADER = ("architecture", "instance_count", "repeat", "seed", "iteration", "best_cost")


@dataclass(frozen=True)
class ExperimentConfig:
    data_dir: Path | None = None
    architectures: tuple[str, ...] = ("IAC", "PA", "PAwV")
    instance_counts: tuple[int, ...] = DEFAULT_INSTANCE_COUNTS
    repeats: int = 10
    solution_budget: int = 768_000
    checkpoints: tuple[float, ...] = DEFAULT_CHECKPOINTS
    best_known_cost: float = DEFAULT_BEST_KNOWN
    timing_iteration_cap: int = 500
    timing_time_limit_s: float = 600.0
    timing_repeats: int = 3
    output_dir: Path = Path("results")
    ants_per_instance: int = 1
    master_seed: int = 0
    precision: str = "double"
    checkpoint_stride: int = 5
    reach_quorum: float = 0.8
    workers: int = 1
    jobs: int = 1
    update_from: str = "best_so_far"
    equivalence: bool = False  # benchmarks allow reordered arithmetic in PAwV
    mapping_file: Path | None = None
    params: AcsParams = field(default_factory=AcsParams)

    def __post_init__(self) -> None:
        object.__setattr__(self, "architectures",
                           tuple(normalize_architecture(a) for a in self.architectures))
        object.__setattr__(self, "instance_counts", tuple(int(n) for n in self.instance_counts))
        object.__setattr__(self, "checkpoints", tuple(float(c) for c in self.checkpoints))
        if self.data_dir is not None:
            object.__setattr__(self, "data_dir", Path(self.data_dir))
        if self.mapping_file is not None:
            object.__setattr__(self, "mapping_file", Path(self.mapping_file))
        object.__setattr__(self, "output_dir", Path(self.output_dir))
        if self.repeats < 1 or self.timing_repeats < 1:
            raise ConfigError("repeats must be >= 1")
        if any(b <= a for a, b in zip(self.checkpoints, self.checkpoints[1:])):
            raise ConfigError("checkpoints must be strictly increasing")
        if any(n < 1 for n in self.instance_counts):
            raise ConfigError("instance counts must be >= 1")
        if not self.best_known_cost > 0:
            raise ConfigError("best_known_cost must be positive")
        if not 0.0 < self.reach_quorum <= 1.0:
            raise ConfigError("reach_quorum must lie in (0, 1]")
        if self.timing_iteration_cap < 1 or self.timing_time_limit_s <= 0:
            raise ConfigError("timing limits must be positive")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")
        self.run_config("PA" if not self.architectures else self.architectures[0], 1, 0)

    def run_config(self, architecture: str, instance_count: int, seed: int,
                   **overrides) -> RunConfig:
        settings = dict(
            architecture=architecture, parallel_instances=instance_count,
            ants_per_instance=self.ants_per_instance, solution_budget=self.solution_budget,
            master_seed=seed, precision=self.precision, checkpoint_stride=self.checkpoint_stride,
            workers=self.workers, update_from=self.update_from, equivalence=self.equivalence,
            params=self.params)
        settings.update(overrides)
        return RunConfig(**settings)

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, Path):
                value = str(value)
            elif isinstance(value, AcsParams):
                value = asdict(value)
            elif isinstance(value, tuple):
                value = list(value)
            out[f.name] = value
        return out

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()


def load_config(path: str | Path, **overrides) -> ExperimentConfig:
    """Read an experiment config from a TOML file.

    Top-level keys map onto :class:`ExperimentConfig` fields. An optional
    ``[params]`` table sets ACS parameters. Relative paths resolve against
    the config file's directory.
    """
    path = Path(path)
    try:
        raw = tomllib.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from exc
    raw.update({k: v for k, v in overrides.items() if v is not None})
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    params = raw.pop("params", None)
    if isinstance(params, dict):
        try:
            raw["params"] = AcsParams(**params)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad [params] table: {exc}") from exc
    for key in ("data_dir", "output_dir", "mapping_file"):
        if isinstance(raw.get(key), str):
            p = Path(raw[key])
            raw[key] = p if p.is_absolute() else path.parent / p
    try:
        return ExperimentConfig(**raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


# --------------------------------------------------------------------------
# traces and matrices
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class RunTrace:
    architecture: str
    instance_count: int
    repeat: int
    seed: int
    convergence: tuple[tuple[int, float], ...]  # (iteration, best-so-far cost)
    solutions_constructed: int = 0
    iterations_executed: int = 0

    @property
    def best_cost(self) -> float:
        return self.convergence[-1][1] if self.convergence else math.inf


@dataclass
class ConvergenceMatrix:
    architecture: str
    cells: dict[tuple[int, int], float]  # (instance_count, iteration) -> mean proximity
    repeats: int
    seeds: dict[tuple[int, int], int]  # (instance_count, repeat) -> seed
    best_known_cost: float

    def column(self, instance_count: int) -> list[tuple[int, float]]:
        return sorted((it, v) for (n, it), v in self.cells.items() if n == instance_count)

    @property
    def instance_counts(self) -> list[int]:
        return sorted({n for n, _ in self.cells})

    @property
    def iterations(self) -> list[int]:
        return sorted({it for _, it in self.cells})


@dataclass
class CheckpointTable:
    cells: dict[tuple[str, float, int], float]  # (arch, checkpoint, count) -> mean iterations
    reached: dict[tuple[str, float, int], tuple[int, int]]  # -> (runs reaching, runs total)
    iteration_cap: dict[tuple[str, int], int] = field(default_factory=dict)


@dataclass(frozen=True)
class TimingRecord:
    architecture: str
    instance_count: int
    seconds_per_iteration: float
    samples: tuple[float, ...]
    iterations: tuple[int, ...]


@dataclass
class BenchResults:
    config: ExperimentConfig
    traces: list[RunTrace] = field(default_factory=list)
    timings: list[TimingRecord] = field(default_factory=list)

    def matrices(self, best_known_cost: float | None = None) -> dict[str, ConvergenceMatrix]:
        ref = self.config.best_known_cost if best_known_cost is None else best_known_cost
        return {arch: convergence_matrix(self.traces, arch, ref, self.config.repeats)
                for arch in self.config.architectures}


def convergence_matrix(traces: Iterable[RunTrace], architecture: str, best_known_cost: float,
                       repeats: int | None = None) -> ConvergenceMatrix:
    """Mean proximity per (instance count, iteration) over the runs of one architecture.

    A column only covers iterations every run reached, which keeps it monotone
    when a time limit cut some runs short.
    """
    by_count: dict[int, list[RunTrace]] = {}
    seeds = {}
    for t in traces:
        if t.architecture == architecture:
            by_count.setdefault(t.instance_count, []).append(t)
            seeds[(t.instance_count, t.repeat)] = t.seed
    cells = {}
    for n, runs in by_count.items():
        per_run = [dict(r.convergence) for r in runs]
        common = set.intersection(*(set(p) for p in per_run))
        for it in common:
            cells[(n, it)] = math.fsum(proximity(best_known_cost, p[it]) for p in per_run) / len(runs)
    n_rep = repeats if repeats is not None else max((len(r) for r in by_count.values()), default=0)
    return ConvergenceMatrix(architecture, cells, n_rep, seeds, best_known_cost)


def checkpoint_iterations(traces: Iterable[RunTrace], checkpoints: Sequence[float],
                          best_known_cost: float, reach_quorum: float = 0.8) -> CheckpointTable:
    """Mean iterations to first reach each proximity threshold.

    Per run, the hit is the first recorded iteration whose proximity meets
    the threshold. A cell appears only if at least ``reach_quorum`` of its
    runs hit; the mean is over the runs that did.
    """
    groups: dict[tuple[str, int], list[RunTrace]] = {}
    for t in traces:
        groups.setdefault((t.architecture, t.instance_count), []).append(t)
    cells, reached, caps = {}, {}, {}
    for (arch, n), runs in sorted(groups.items()):
        caps[(arch, n)] = max((r.iterations_executed for r in runs), default=0)
        required = math.ceil(reach_quorum * len(runs) - 1e-9)
        for cp in checkpoints:
            hits = []
            for r in runs:
                for it, cost in r.convergence:
                    if proximity(best_known_cost, cost) >= cp:
                        hits.append(it)
                        break
            reached[(arch, float(cp), n)] = (len(hits), len(runs))
            if hits and len(hits) >= required:
                cells[(arch, float(cp), n)] = math.fsum(hits) / len(hits)
    return CheckpointTable(cells, reached, caps)


# --------------------------------------------------------------------------
# execution
# --------------------------------------------------------------------------

def load_experiment_instance(config: ExperimentConfig,
                             instance: ProblemInstance | None = None) -> ProblemInstance:
    if instance is not None:
        return instance
    if config.data_dir is None:
        raise ConfigError("data_dir is not set")
    return load_instance(config.data_dir, config.mapping_file, config.best_known_cost)


def _cells(config: ExperimentConfig) -> list[tuple[str, int, int, int]]:
    return [(arch, n, rep, cell_seed(config.master_seed, n, rep))
            for arch in config.architectures
            for n in config.instance_counts
            for rep in range(config.repeats)]


def _run_cell(args) -> RunTrace:
    config, instance, arch, n, rep, seed = args
    result = run(config.run_config(arch, n, seed), instance)
    return RunTrace(arch, n, rep, seed, tuple(result.convergence),
                    result.solutions_constructed, result.iterations_executed)


def _append_runs(path: Path, trace: RunTrace) -> None:
    new = not path.exists()
    with path.open("a", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if new:
            w.writerow(RUNS_HEADER)
        for it, cost in trace.convergence:
            w.writerow((trace.architecture, trace.instance_count, trace.repeat, trace.seed,
                        it, repr(float(cost))))


def run_matrix(config: ExperimentConfig, instance: ProblemInstance | None = None,
               progress: Callable[[RunTrace], None] | None = None,
               persist: bool = True) -> BenchResults:
    """Run every (architecture, instance count, repeat) cell of the experiment.

    Each run's iteration cap is ``budget // (instances * ants)``. Raw traces
    are appended to ``runs.csv`` as cells finish, so a failure keeps every
    completed cell on disk. Seeds depend on (instance count, repeat) only,
    so architectures are compared on common random streams.
    """
    instance = load_experiment_instance(config, instance)
    runs_path = config.output_dir / RUNS_FILE
    if persist:
        config.output_dir.mkdir(parents=True, exist_ok=True)
        if runs_path.exists():
            runs_path.unlink()
    results = BenchResults(config)
    jobs = [(config, instance, *cell) for cell in _cells(config)]

    def collect(trace: RunTrace) -> None:
        results.traces.append(trace)
        if persist:
            _append_runs(runs_path, trace)
        if progress is not None:
            progress(trace)

    if config.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(config.jobs) as pool:
            for trace in pool.map(_run_cell, jobs):
                collect(trace)
    else:
        for job in jobs:
            collect(_run_cell(job))
    return results


def timing_run(config: ExperimentConfig, architecture: str, instance_count: int,
               instance: ProblemInstance | None = None) -> TimingRecord:
    """Mean wall-clock seconds per iteration over ``config.timing_repeats`` runs.

    The window opens before pheromone allocation and closes after the run
    returns, so model setup and teardown are inside it and loading is not.
    """
    instance = load_experiment_instance(config, instance)
    arch = normalize_architecture(architecture)
    cap = config.timing_iteration_cap
    samples, iterations = [], []
    for rep in range(config.timing_repeats):
        rc = config.run_config(
            arch, instance_count, cell_seed(config.master_seed, instance_count, rep),
            solution_budget=cap * instance_count * config.ants_per_instance,
            iterations=cap, time_limit_s=config.timing_time_limit_s)
        start = time.perf_counter()
        result = run(rc, instance)
        elapsed = time.perf_counter() - start
        samples.append(elapsed / result.iterations_executed)
        iterations.append(result.iterations_executed)
    return TimingRecord(arch, instance_count, math.fsum(samples) / len(samples),
                        tuple(samples), tuple(iterations))


# --------------------------------------------------------------------------
# reports
# --------------------------------------------------------------------------

def read_traces(path: str | Path) -> list[RunTrace]:
    """Rebuild run traces from a ``runs.csv`` file."""
    rows: dict[tuple[str, int, int, int], list[tuple[int, float]]] = {}
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != RUNS_HEADER:
            raise ConfigError(f"{path}: expected columns {', '.join(RUNS_HEADER)}")
        for row in reader:
            key = (row["architecture"], int(row["instance_count"]), int(row["repeat"]),
                   int(row["seed"]))
            rows.setdefault(key, []).append((int(row["iteration"]), float(row["best_cost"])))
    traces = []
    for (arch, n, rep, seed), conv in rows.items():
        conv.sort()
        last = conv[-1][0] if conv else 0
        traces.append(RunTrace(arch, n, rep, seed, tuple(conv), 0, last))
    return traces


def _fmt(value: float | None) -> str:
    return "" if value is None else repr(float(value))


def _write_csv(path: Path, header: Sequence, rows: Iterable[Sequence]) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def host_info() -> dict:
    return {"platform": platform.platform(), "python": platform.python_version(),
            "machine": platform.machine(), "cpu_count": os.cpu_count()}


REPORT_PARTS = ("convergence", "checkpoint", "timing", "runs")


def emit_report(results: BenchResults, output_dir: str | Path | None = None,
                best_known_cost: float | None = None,
                parts: Sequence[str] = REPORT_PARTS,
                meta_name: str = "run_meta.json") -> list[Path]:
    """Write the CSV tables and a metadata file; returns the paths written.

    ``parts`` limits which tables are (re)written, so a timing-only session
    leaves earlier convergence output alone. Content depends only on
    ``results`` apart from the ``host`` block of the metadata file.
    """
    unknown = set(parts) - set(REPORT_PARTS)
    if unknown:
        raise ConfigError(f"unknown report parts: {sorted(unknown)}")
    config = results.config
    out = Path(output_dir) if output_dir is not None else config.output_dir
    out.mkdir(parents=True, exist_ok=True)
    ref = config.best_known_cost if best_known_cost is None else best_known_cost
    counts = list(config.instance_counts)
    paths = []

    if "convergence" in parts:
        _write_matrix(out / "convergence_matrix.csv", results, ref, counts)
        paths.append(out / "convergence_matrix.csv")
    if "checkpoint" in parts:
        _write_checkpoints(out / "checkpoint_table.csv", results, ref, counts)
        paths.append(out / "checkpoint_table.csv")
    if "timing" in parts:
        _write_timing(out / "timing.csv", results, counts)
        paths.append(out / "timing.csv")
    if "runs" in parts:
        _write_runs(out / RUNS_FILE, results.traces)
        paths.append(out / RUNS_FILE)
    meta = {
        "config": config.to_dict(),
        "config_hash": config.config_hash(),
        "best_known_cost": ref,
        "precision": config.precision,
        "seeds": [{"architecture": t.architecture, "instance_count": t.instance_count,
                   "repeat": t.repeat, "seed": t.seed} for t in _sorted_traces(results.traces)],
        "timings": [{"architecture": t.architecture, "instance_count": t.instance_count,
                     "samples": list(t.samples), "iterations": list(t.iterations)}
                    for t in results.timings],
        "host": host_info(),
    }
    paths.append(out / meta_name)
    paths[-1].write_text(json.dumps(meta, indent=2, sort_keys=True, default=str) + "\n",
                         encoding="utf-8")
    return paths


def _sorted_traces(traces: Iterable[RunTrace]) -> list[RunTrace]:
    return sorted(traces, key=lambda t: (t.architecture, t.instance_count, t.repeat))


def _write_matrix(path: Path, results: BenchResults, ref: float, counts: list[int]) -> None:
    rows = []
    for arch, matrix in results.matrices(ref).items():
        for it in matrix.iterations:
            rows.append([arch, it, *(_fmt(matrix.cells.get((n, it))) for n in counts)])
    _write_csv(path, ["architecture", "iteration", *counts], rows)


def _write_checkpoints(path: Path, results: BenchResults, ref: float, counts: list[int]) -> None:
    config = results.config
    table = checkpoint_iterations(results.traces, config.checkpoints, ref, config.reach_quorum)
    rows = [[arch, f"{cp:.2f}", *(_fmt(table.cells.get((arch, cp, n))) for n in counts)]
            for arch in config.architectures for cp in config.checkpoints]
    _write_csv(path, ["architecture", "checkpoint", *counts], rows)


def _write_timing(path: Path, results: BenchResults, counts: list[int]) -> None:
    # architecture rows by instance-count columns, seconds per iteration
    timing = {(t.architecture, t.instance_count): t.seconds_per_iteration for t in results.timings}
    timed = sorted({t.instance_count for t in results.timings}) or counts
    rows = [[arch, *(_fmt(timing.get((arch, n))) for n in timed)]
            for arch in results.config.architectures]
    _write_csv(path, ["architecture", *timed], rows)


def _write_runs(path: Path, traces: Iterable[RunTrace]) -> None:
    _write_csv(path, RUNS_HEADER, (
        (t.architecture, t.instance_count, t.repeat, t.seed, it, repr(float(c)))
        for t in _sorted_traces(traces) for it, c in t.convergence))


def with_overrides(config: ExperimentConfig, **overrides) -> ExperimentConfig:
    return replace(config, **{k: v for k, v in overrides.items() if v is not None})


__all__ = [
    "ExperimentConfig", "load_config", "RunTrace", "ConvergenceMatrix", "CheckpointTable",
    "TimingRecord", "BenchResults", "convergence_matrix", "checkpoint_iterations", "run_matrix",
    "timing_run", "load_experiment_instance", "read_traces", "emit_report", "host_info",
    "with_overrides", "REPORT_PARTS",
]

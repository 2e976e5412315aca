"""Independent Ant Colonies (IAC), Parallel Ants (PA) and Parallel Ants with
Vectorization (PAwV).

Every ant draws from an :class:`~supplyaco.rng.AntStream` keyed by
``(master_seed, instance, iteration, ant)`` and every reduction breaks ties
by instance index, so a run is a pure function of ``(instance, config)`` no
matter how many workers execute it.

PAwV replaces the per-route scalar loop with array kernels
(:func:`build_choice_vector`, :func:`reduce_max_index`, :func:`scan_roulette`)
and, because Python call overhead dominates short route vectors, also
advances all ants of a worker in lockstep, one order at a time.
"""

from __future__ import annotations

import math
import os
import time
from concurrent.futures import ProcessPoolExecutor, ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .acs_engine import (
    AcsParams, AntSolution, PheromoneModel, construct_solution, global_pheromone_update,
    greedy_solution, init_model,
)
from .cost_engine import Assignment, batch_solution_cost, precision_dtype, solution_cost
from .errors import AllMasked, ConfigError, ConstructionStuck
from .instance_model import ProblemInstance
from .rng import AntStream

ARCHITECTURES = ("IAC", "PA", "PAwV")

SolutionHook = Callable[[AntSolution], None]


@dataclass(frozen=True)
class RunConfig:
    architecture: str = "PA"
    parallel_instances: int = 1
    ants_per_instance: int = 1
    solution_budget: int = 768_000
    master_seed: int = 0
    precision: str = "double"
    checkpoint_stride: int = 5
    time_limit_s: float | None = None
    iterations: int | None = None  # explicit cap, still bounded by the budget
    workers: int = 1
    equivalence: bool = True
    update_from: str = "best_so_far"  # or "iteration"
    params: AcsParams = field(default_factory=AcsParams)

    def __post_init__(self) -> None:
        arch = normalize_architecture(self.architecture)
        object.__setattr__(self, "architecture", arch)
        if self.parallel_instances < 1 or self.ants_per_instance < 1:
            raise ConfigError("parallel_instances and ants_per_instance must be >= 1")
        if self.solution_budget < self.parallel_instances * self.ants_per_instance:
            raise ConfigError(
                f"budget {self.solution_budget} < instances x ants "
                f"({self.parallel_instances} x {self.ants_per_instance})")
        if self.checkpoint_stride < 1:
            raise ConfigError("checkpoint_stride must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.update_from not in ("iteration", "best_so_far"):
            raise ConfigError("update_from must be 'iteration' or 'best_so_far'")
        if self.iterations is not None and self.iterations < 1:
            raise ConfigError("iterations must be >= 1")
        try:
            precision_dtype(self.precision)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    @property
    def iteration_cap(self) -> int:
        cap = self.solution_budget // (self.parallel_instances * self.ants_per_instance)
        return min(cap, self.iterations) if self.iterations is not None else cap


@dataclass
class RunResult:
    best_solution: AntSolution
    convergence: list[tuple[int, float]]
    iterations_executed: int
    wall_time_per_iteration_s: float
    instance_bests: list[float]
    solutions_constructed: int = 0


def normalize_architecture(name: str) -> str:
    for arch in ARCHITECTURES:
        if name.lower() == arch.lower():
            return arch
    raise ConfigError(f"unknown architecture {name!r}; expected one of {ARCHITECTURES}")


def max_workers() -> int:
    return os.cpu_count() or 1


# --------------------------------------------------------------------------
# data-parallel selection kernels
# --------------------------------------------------------------------------

def build_choice_vector(tau_row, eta_row, tabu_mask, params: AcsParams | None = None, *,
                        alpha: float | None = None, beta: float | None = None) -> np.ndarray:
    """Elementwise ``tau**alpha * eta**beta * mask``; broadcasts over leading axes."""
    params = params or AcsParams()
    alpha = params.alpha if alpha is None else alpha
    beta = params.beta if beta is None else beta
    tau_row = np.asarray(tau_row)
    eta_row = np.asarray(eta_row)
    t = tau_row if alpha == 1.0 else np.power(tau_row, alpha)
    e = eta_row if beta == 1.0 else np.power(eta_row, beta)
    return (t * e) * np.asarray(tabu_mask, dtype=np.result_type(t, e))


def reduce_max_index(values) -> np.ndarray | int:
    """Smallest index attaining the maximum, along the last axis."""
    values = np.asarray(values)
    if values.shape[-1] == 0:
        raise ValueError("reduce_max_index of an empty vector")
    idx = np.argmax(values, axis=-1)
    return int(idx) if values.ndim == 1 else idx


def scan_roulette(values, u) -> np.ndarray | int:
    """Roulette selection via an inclusive prefix scan.

    Returns the smallest ``j`` whose prefix sum exceeds ``u * sum(values)``.
    For 2-D input each row is spun with its own ``u``; rows summing to zero
    yield -1, a 1-D all-zero vector raises :class:`AllMasked`.
    """
    values = np.asarray(values)
    one_d = values.ndim == 1
    v = np.atleast_2d(values)
    u = np.broadcast_to(np.asarray(u, dtype=np.float64), v.shape[:1])
    prefix = np.cumsum(v, axis=1)
    total = prefix[:, -1]
    idx = np.sum(prefix <= (u * total)[:, None], axis=1)
    # u * total can round up to total; fall back to the last positive entry
    overflow = idx >= v.shape[1]
    if np.any(overflow):
        last_pos = v.shape[1] - 1 - np.argmax((v > 0)[:, ::-1], axis=1)
        idx = np.where(overflow, last_pos, idx)
    idx = np.where(total > 0, idx, -1)
    if one_d:
        if idx[0] < 0:
            raise AllMasked("every choice value is zero")
        return int(idx[0])
    return idx


def reduce_best(candidates: Iterable[AntSolution]) -> AntSolution:
    """Lowest total cost; ties go to the lowest (instance, ant) index."""
    candidates = list(candidates)
    if not candidates:
        raise ValueError("reduce_best of no candidates")
    return min(candidates, key=lambda s: (s.cost.total, s.instance_index, s.ant_index))


# --------------------------------------------------------------------------
# lockstep (vectorized) construction
# --------------------------------------------------------------------------

def _construct_lockstep(model: PheromoneModel, instance: ProblemInstance, draws: np.ndarray,
                        equivalence: bool) -> tuple[np.ndarray, np.ndarray]:
    """Advance ``len(draws)`` ants through all orders together.

    Returns ``(choices, dead)``: local route indices per ant and order, and a
    flag for ants that hit an all-masked order.
    """
    a = instance.arrays
    n_ants, n_orders = draws.shape[0], instance.n_orders
    n_lanes = len(a.lane_max)
    lane_max = np.append(a.lane_max, np.inf)
    opt_lane = np.where(a.opt_lane < 0, n_lanes, a.opt_lane)
    offsets = a.offsets.tolist()
    params = model.params
    if equivalence or model.precision in ("double", "f64"):
        tau = model.tau.astype(np.float64, copy=False)
        eta = model.eta_pow
    else:
        tau = model.tau
        eta = model.eta_pow.astype(tau.dtype)
    counts = np.zeros((n_ants, len(a.wh_capacity)), dtype=np.int64)
    line_w = np.zeros((n_ants, n_lanes + 1))
    choices = np.zeros((n_ants, n_orders), dtype=np.int64)
    dead = np.zeros(n_ants, dtype=bool)
    rows = np.arange(n_ants)
    weights = a.order_weight.tolist()
    for k in range(n_orders):
        lo, hi = offsets[k], offsets[k + 1]
        whs = a.opt_wh[lo:hi]
        lns = opt_lane[lo:hi]
        w = weights[k]
        mask = (counts[:, whs] < a.wh_capacity[whs]) & (line_w[:, lns] + w <= lane_max[lns])
        vals = build_choice_vector(tau[lo:hi], eta[lo:hi], mask, alpha=params.alpha, beta=1.0)
        empty = ~vals.any(axis=1)
        if not equivalence and np.any(empty & mask.any(axis=1)):
            # reduced precision underflowed; redo those rows in double
            redo = empty & mask.any(axis=1)
            vals = vals.astype(np.float64)
            vals[redo] = build_choice_vector(model.tau[lo:hi].astype(np.float64),
                                             model.eta_pow[lo:hi], mask[redo],
                                             alpha=params.alpha, beta=1.0)
            empty = ~vals.any(axis=1)
        exploit = draws[:, k, 0] <= params.q0
        j = np.where(exploit, reduce_max_index(vals), scan_roulette(vals, draws[:, k, 1]))
        dead |= empty
        j = np.where(empty, 0, j)
        choices[:, k] = j
        counts[rows, whs[j]] += 1
        line_w[rows, lns[j]] += w
    return choices, dead


def construct_lockstep(model: PheromoneModel, instance: ProblemInstance,
                       streams: Sequence[AntStream], equivalence: bool = True) -> list[AntSolution]:
    """Vectorized counterpart of calling ``construct_solution`` once per stream.

    In equivalence mode the returned solutions are identical to the scalar
    path, costs included. Ants never revisit an order, so the ACS local update
    on an ant's private pheromone copy cannot influence its own choices and is
    not materialised here.
    """
    n_orders = instance.n_orders
    results: list[AntSolution | None] = [None] * len(streams)
    pending = list(range(len(streams)))
    for attempt in range(model.params.max_dead_ends):
        if not pending:
            break
        draws = np.stack([streams[i].draws(n_orders, attempt) for i in pending]) if n_orders \
            else np.zeros((len(pending), 0, 2))
        choices, dead = _construct_lockstep(model, instance, draws, equivalence)
        ok = [p for p, d in enumerate(dead) if not d]
        if equivalence:
            costs = [solution_cost(instance, choices[p], model.precision) for p in ok]
        else:
            costs = batch_solution_cost(instance, choices[ok], model.precision) if ok else []
        for p, cost in zip(ok, costs):
            i = pending[p]
            results[i] = AntSolution(Assignment.from_array(choices[p]), cost,
                                     (*streams[i].trace, attempt))
        pending = [pending[p] for p, d in enumerate(dead) if d]
    if pending:
        raise ConstructionStuck(
            f"{model.params.max_dead_ends} consecutive dead ends for stream {streams[pending[0]]}")
    return results  # type: ignore[return-value]


# --------------------------------------------------------------------------
# per-iteration work units
# --------------------------------------------------------------------------

def _instance_candidates_scalar(model: PheromoneModel, instance: ProblemInstance,
                                config: RunConfig, iteration: int,
                                instances: Sequence[int]) -> list[list[AntSolution]]:
    out = []
    for m in instances:
        ants = [construct_solution(model, instance,
                                   AntStream(config.master_seed, m, iteration, a))[0]
                for a in range(config.ants_per_instance)]
        out.append(ants)
    return out


def _instance_candidates_vector(model: PheromoneModel, instance: ProblemInstance,
                                config: RunConfig, iteration: int,
                                instances: Sequence[int]) -> list[list[AntSolution]]:
    streams = [AntStream(config.master_seed, m, iteration, a)
               for m in instances for a in range(config.ants_per_instance)]
    sols = construct_lockstep(model, instance, streams, config.equivalence)
    n = config.ants_per_instance
    return [sols[i * n:(i + 1) * n] for i in range(len(instances))]


def _chunks(items: Sequence[int], parts: int) -> list[list[int]]:
    parts = max(1, min(parts, len(items)))
    size = math.ceil(len(items) / parts)
    return [list(items[i:i + size]) for i in range(0, len(items), size)]


def _record(convergence: list, it: int, stride: int, best: AntSolution) -> None:
    if it % stride == 0:
        convergence.append((it, best.cost.total))


# --------------------------------------------------------------------------
# architectures
# --------------------------------------------------------------------------

def _run_shared(config: RunConfig, instance: ProblemInstance, vectorized: bool,
                hook: SolutionHook | None) -> RunResult:
    start = time.perf_counter()
    model = init_model(instance, config.params, config.precision)
    work = _instance_candidates_vector if vectorized else _instance_candidates_scalar
    chunks = _chunks(range(config.parallel_instances), config.workers)
    pool = ThreadPoolExecutor(config.workers) if config.workers > 1 and len(chunks) > 1 else None
    best: AntSolution | None = None
    instance_bests = [math.inf] * config.parallel_instances
    convergence: list[tuple[int, float]] = []
    executed = constructed = 0
    try:
        for it in range(config.iteration_cap):
            if config.time_limit_s is not None and time.perf_counter() - start >= config.time_limit_s:
                break
            if pool is None:
                groups = [g for chunk in chunks for g in work(model, instance, config, it, chunk)]
            else:
                futures = [pool.submit(work, model, instance, config, it, chunk) for chunk in chunks]
                groups = [g for f in futures for g in f.result()]
            candidates = []
            for m, ants in enumerate(groups):
                if hook is not None:
                    for sol in ants:
                        hook(sol)
                constructed += len(ants)
                cand = reduce_best(ants)
                instance_bests[m] = min(instance_bests[m], cand.cost.total)
                candidates.append(cand)
            it_best = reduce_best(candidates)  # barrier: all instances done
            if best is None or it_best.cost.total < best.cost.total:
                best = it_best
            global_pheromone_update(model, it_best if config.update_from == "iteration" else best,
                                    instance)
            executed = it + 1
            _record(convergence, executed, config.checkpoint_stride, best)
    finally:
        if pool is not None:
            pool.shutdown()
    elapsed = time.perf_counter() - start
    if best is None:
        raise ConfigError("time limit expired before the first iteration")
    return RunResult(best, convergence, executed, elapsed / max(executed, 1),
                     instance_bests, constructed)


@dataclass
class _ColonyOutcome:
    best: AntSolution
    trace: list[float]  # best-so-far cost after each iteration
    constructed: int


def run_colony(config: RunConfig, instance: ProblemInstance, colony: int,
               greedy: AntSolution | None = None, hook: SolutionHook | None = None,
               deadline: float | None = None) -> _ColonyOutcome:
    """One sequential ACS colony using substreams of instance index ``colony``."""
    model = init_model(instance, config.params, config.precision, greedy=greedy)
    best: AntSolution | None = None
    trace: list[float] = []
    constructed = 0
    for it in range(config.iteration_cap):
        if deadline is not None and time.perf_counter() >= deadline:
            break
        ants = [construct_solution(model, instance,
                                   AntStream(config.master_seed, colony, it, a))[0]
                for a in range(config.ants_per_instance)]
        if hook is not None:
            for sol in ants:
                hook(sol)
        constructed += len(ants)
        it_best = reduce_best(ants)
        if best is None or it_best.cost.total < best.cost.total:
            best = it_best
        global_pheromone_update(model, it_best if config.update_from == "iteration" else best,
                                instance)
        trace.append(best.cost.total)
    if best is None:
        raise ConfigError("time limit expired before the first iteration")
    return _ColonyOutcome(best, trace, constructed)


def _colony_task(args) -> _ColonyOutcome:
    config, instance, colony, greedy, deadline = args
    return run_colony(config, instance, colony, greedy, None, deadline)


def run_iac(config: RunConfig, instance: ProblemInstance,
            hook: SolutionHook | None = None) -> RunResult:
    """Independent colonies; the only communication is the final best reduction."""
    if config.architecture != "IAC":
        raise ConfigError(f"run_iac called with architecture {config.architecture}")
    start = time.perf_counter()
    deadline = start + config.time_limit_s if config.time_limit_s is not None else None
    greedy = greedy_solution(instance, config.params, config.precision)
    colonies = range(config.parallel_instances)
    if config.workers > 1 and hook is None and config.parallel_instances > 1:
        with ProcessPoolExecutor(min(config.workers, config.parallel_instances)) as pool:
            outcomes = list(pool.map(_colony_task,
                                     [(config, instance, c, greedy, deadline) for c in colonies]))
    else:
        outcomes = [run_colony(config, instance, c, greedy, hook, deadline) for c in colonies]
    executed = min(len(o.trace) for o in outcomes)
    convergence = []
    for it in range(1, executed + 1):
        if it % config.checkpoint_stride == 0:
            convergence.append((it, min(o.trace[it - 1] for o in outcomes)))
    best = reduce_best(o.best for o in outcomes)
    elapsed = time.perf_counter() - start
    return RunResult(best, convergence, executed, elapsed / max(executed, 1),
                     [o.best.cost.total for o in outcomes], sum(o.constructed for o in outcomes))


def run_pa(config: RunConfig, instance: ProblemInstance,
           hook: SolutionHook | None = None) -> RunResult:
    """Shared pheromone; barrier, best reduction and one global update per iteration."""
    if config.architecture != "PA":
        raise ConfigError(f"run_pa called with architecture {config.architecture}")
    return _run_shared(config, instance, vectorized=False, hook=hook)


def run_pawv(config: RunConfig, instance: ProblemInstance,
             hook: SolutionHook | None = None) -> RunResult:
    """PA with lockstep, array-kernel route selection."""
    if config.architecture != "PAwV":
        raise ConfigError(f"run_pawv called with architecture {config.architecture}")
    return _run_shared(config, instance, vectorized=True, hook=hook)


def run(config: RunConfig, instance: ProblemInstance,
        hook: SolutionHook | None = None) -> RunResult:
    runner = {"IAC": run_iac, "PA": run_pa, "PAwV": run_pawv}[config.architecture]
    return runner(config, instance, hook)


__all__ = [
    "ARCHITECTURES", "RunConfig", "RunResult", "build_choice_vector", "reduce_max_index",
    "scan_roulette", "reduce_best", "construct_lockstep", "run_colony", "run_iac", "run_pa",
    "run_pawv", "run", "max_workers", "normalize_architecture",
]

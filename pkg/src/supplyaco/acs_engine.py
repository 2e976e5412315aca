"""Sequential Ant Colony System core.

Pheromone ``tau`` and heuristic ``eta`` are stored flat, one entry per route
option (see :class:`~supplyaco.instance_model.InstanceArrays`). Ants visit
orders in dataset order; an option is masked while choosing it would break a
warehouse's daily order limit or push a lane past its top weight band.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from itertools import accumulate
from typing import Sequence

import numpy as np

from .cost_engine import Assignment, CostBreakdown, precision_dtype, solution_cost
from .errors import AllMasked, ConstructionStuck, DeadEnd
from .instance_model import Order, ProblemInstance, RouteOption
from .rng import AntStream

EPSILON_KG = 1e-6
HEURISTICS = ("weight_over_gap", "gap_over_weight")


@dataclass(frozen=True)
class AcsParams:
    evaporation_rho: float = 0.1
    alpha: float = 1.0
    beta: float = 8.0
    q0: float = 0.9
    tau0: float | None = None  # None: 1 / n_orders
    deposit_scale: float = 1.0
    heuristic: str = "weight_over_gap"
    epsilon_kg: float = EPSILON_KG
    max_dead_ends: int = 10

    def __post_init__(self) -> None:
        if not 0.0 < self.evaporation_rho < 1.0:
            raise ValueError("evaporation_rho must lie in (0, 1)")
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be nonnegative")
        if not 0.0 <= self.q0 <= 1.0:
            raise ValueError("q0 must lie in [0, 1]")
        if self.tau0 is not None and self.tau0 <= 0:
            raise ValueError("tau0 must be positive")
        if self.deposit_scale <= 0:
            raise ValueError("deposit_scale must be positive")
        if self.heuristic not in HEURISTICS:
            raise ValueError(f"heuristic must be one of {HEURISTICS}")


@dataclass
class PheromoneModel:
    tau: np.ndarray
    eta: np.ndarray
    eta_pow: np.ndarray  # (eta / row max) ** beta, float64
    params: AcsParams
    greedy_cost: float
    tau0: float
    precision: str = "double"
    version: int = 0
    _snapshot: list | None = field(default=None, repr=False)
    _eta_list: list | None = field(default=None, repr=False)

    def snapshot(self) -> list[float]:
        """Read-only list view of ``tau`` for scalar construction loops."""
        if self._snapshot is None:
            self._snapshot = self.tau.tolist()
        return self._snapshot

    def eta_pow_list(self) -> list[float]:
        if self._eta_list is None:
            self._eta_list = self.eta_pow.tolist()
        return self._eta_list

    def touch(self) -> None:
        self.version += 1
        self._snapshot = None

    def copy(self) -> PheromoneModel:
        return replace(self, tau=self.tau.copy(), _snapshot=None)


@dataclass(frozen=True)
class AntSolution:
    assignment: Assignment
    cost: CostBreakdown
    seed_trace: tuple[int, ...] = ()

    @property
    def instance_index(self) -> int:
        return self.seed_trace[1] if len(self.seed_trace) > 1 else 0

    @property
    def ant_index(self) -> int:
        return self.seed_trace[3] if len(self.seed_trace) > 3 else 0


@dataclass
class ConstructionState:
    warehouse_counts: list[int]
    line_weights: list[float]
    order_cursor: int = 0

    @classmethod
    def empty(cls, instance: ProblemInstance) -> ConstructionState:
        return cls([0] * len(instance.warehouses), [0.0] * len(instance.lanes))

    def allows(self, instance: ProblemInstance, flat_option: int) -> bool:
        lists = instance.arrays.lists
        wh = lists["opt_wh"][flat_option]
        if self.warehouse_counts[wh] >= lists["wh_capacity"][wh]:
            return False
        lane = lists["opt_lane"][flat_option]
        weight = lists["order_weight"][self.order_cursor]
        return lane < 0 or self.line_weights[lane] + weight <= lists["lane_max"][lane]

    def place(self, instance: ProblemInstance, flat_option: int) -> None:
        lists = instance.arrays.lists
        self.warehouse_counts[lists["opt_wh"][flat_option]] += 1
        lane = lists["opt_lane"][flat_option]
        if lane >= 0:
            self.line_weights[lane] += lists["order_weight"][self.order_cursor]
        self.order_cursor += 1


# --------------------------------------------------------------------------
# heuristic and model initialisation
# --------------------------------------------------------------------------

def heuristic_value(order: Order, option: RouteOption, params: AcsParams | None = None) -> float:
    """Weight share of the lane's top weight band; 1.0 for lane-less CRF options."""
    params = params or AcsParams()
    if option.lane is None:
        return 1.0
    weight = order.weight_kg + params.epsilon_kg
    if params.heuristic == "gap_over_weight":
        return option.lane.max_upper_kg / weight
    return weight / option.lane.max_upper_kg


def heuristic_array(instance: ProblemInstance, params: AcsParams) -> np.ndarray:
    a = instance.arrays
    eta = np.ones(a.n_options)
    real = a.opt_lane >= 0
    weight = a.order_weight[a.opt_order[real]] + params.epsilon_kg
    gap = a.lane_max[a.opt_lane[real]]
    eta[real] = gap / weight if params.heuristic == "gap_over_weight" else weight / gap
    return eta


def _row_normalized_power(instance: ProblemInstance, eta: np.ndarray, beta: float) -> np.ndarray:
    # per-order rescaling leaves argmax and roulette odds unchanged and keeps
    # eta ** beta away from underflow
    offsets = instance.arrays.offsets
    if len(eta) == 0:
        return eta.copy()
    nonempty = np.nonzero(np.diff(offsets) > 0)[0]
    row_max = np.maximum.reduceat(eta, offsets[nonempty])
    scale = np.repeat(row_max, np.diff(offsets)[nonempty])
    ratio = eta / scale
    return ratio if beta == 1.0 else ratio ** beta


def greedy_solution(instance: ProblemInstance, params: AcsParams | None = None,
                    precision: str = "double") -> AntSolution:
    """Per order, the feasible option with the largest heuristic value."""
    params = params or AcsParams()
    eta = heuristic_array(instance, params).tolist()
    offsets = instance.arrays.offsets.tolist()
    state = ConstructionState.empty(instance)
    choices = []
    for k in range(instance.n_orders):
        best, best_eta = -1, -math.inf
        for r in range(offsets[k], offsets[k + 1]):
            if eta[r] > best_eta and state.allows(instance, r):
                best, best_eta = r, eta[r]
        if best < 0:
            raise DeadEnd(instance.orders[k].order_id, k)
        choices.append(best - offsets[k])
        state.place(instance, best)
    assignment = Assignment(tuple(choices))
    return AntSolution(assignment, solution_cost(instance, assignment, precision), ("greedy",))


def init_model(instance: ProblemInstance, params: AcsParams | None = None,
               precision: str = "double", greedy: AntSolution | None = None) -> PheromoneModel:
    params = params or AcsParams()
    if greedy is None:
        greedy = greedy_solution(instance, params, precision)
    tau0 = params.tau0 if params.tau0 is not None else 1.0 / max(instance.n_orders, 1)
    eta = heuristic_array(instance, params)
    dtype = precision_dtype(precision)
    return PheromoneModel(
        tau=np.full(instance.arrays.n_options, tau0, dtype=dtype),
        eta=eta,
        eta_pow=_row_normalized_power(instance, eta, params.beta),
        params=params,
        greedy_cost=greedy.cost.total,
        tau0=tau0,
        precision=precision,
    )


# --------------------------------------------------------------------------
# selection and pheromone updates
# --------------------------------------------------------------------------

def choose(values: Sequence[float], q0: float, coin: float, spin: float) -> int:
    """Pseudo-random-proportional choice; -1 when every value is zero.

    ``coin <= q0`` exploits (first index of the maximum); otherwise a
    sequential roulette wheel spun at ``spin`` picks the first index whose
    running sum exceeds ``spin * total``.
    """
    if coin <= q0:
        best, best_value = -1, 0.0
        for i, v in enumerate(values):
            if v > best_value:
                best, best_value = i, v
        return best
    cumulative = list(accumulate(values))
    if not cumulative or cumulative[-1] <= 0.0:
        return -1
    target = spin * cumulative[-1]
    for i, c in enumerate(cumulative):
        if c > target:
            return i
    return max(i for i, v in enumerate(values) if v > 0)


def select_route(choice_values: Sequence[float], q0: float, rng: np.random.Generator) -> int:
    coin, spin = rng.random(2)
    j = choose(choice_values, q0, float(coin), float(spin))
    if j < 0:
        raise AllMasked("every choice value is zero")
    return j


def local_pheromone_update(tau_old: float, params: AcsParams, tau0: float) -> float:
    rho = params.evaporation_rho
    return (1.0 - rho) * tau_old + rho * tau0


def deposit(model: PheromoneModel, best: AntSolution) -> float:
    if best.cost.total <= 0 or model.greedy_cost <= 0:
        return model.params.deposit_scale
    return model.params.deposit_scale * model.greedy_cost / best.cost.total


def global_pheromone_update(model: PheromoneModel, best: AntSolution,
                            instance: ProblemInstance) -> PheromoneModel:
    """Reinforce only the options used by ``best``; everything else is untouched."""
    if instance.n_orders:
        rho = model.params.evaporation_rho
        flat = instance.arrays.offsets[:-1] + np.asarray(best.assignment.choices, dtype=np.int64)
        delta = deposit(model, best)
        model.tau[flat] = (1.0 - rho) * model.tau[flat] + rho * delta
    model.touch()
    return model


# --------------------------------------------------------------------------
# construction
# --------------------------------------------------------------------------

@dataclass
class LocalTrace:
    """Private working-pheromone entries an ant touched: flat index -> value."""

    updates: dict[int, float] = field(default_factory=dict)


def scalar_choice_value(tau: float, eta_pow: float, allowed: bool, alpha: float) -> float:
    if not allowed:
        return 0.0
    return (tau if alpha == 1.0 else tau ** alpha) * eta_pow


def _construct_once(model: PheromoneModel, instance: ProblemInstance,
                    draws: np.ndarray) -> tuple[list[int], LocalTrace] | int:
    lists = instance.arrays.lists
    offsets, opt_wh, opt_lane = lists["offsets"], lists["opt_wh"], lists["opt_lane"]
    weights, capacity, lane_max = lists["order_weight"], lists["wh_capacity"], lists["lane_max"]
    tau = model.snapshot()
    eta_pow = model.eta_pow_list()
    params = model.params
    alpha, q0, tau0 = params.alpha, params.q0, model.tau0
    counts = [0] * len(capacity)
    line_w = [0.0] * len(lane_max)
    trace = LocalTrace()
    working = trace.updates
    coins = draws.tolist()
    choices = []
    for k in range(len(weights)):
        lo, hi = offsets[k], offsets[k + 1]
        w = weights[k]
        values = []
        for r in range(lo, hi):
            wh, ln = opt_wh[r], opt_lane[r]
            allowed = counts[wh] < capacity[wh] and (ln < 0 or line_w[ln] + w <= lane_max[ln])
            t = working.get(r, tau[r])
            values.append(scalar_choice_value(t, eta_pow[r], allowed, alpha))
        coin, spin = coins[k]
        j = choose(values, q0, coin, spin)
        if j < 0:
            return k
        r = lo + j
        choices.append(j)
        counts[opt_wh[r]] += 1
        if opt_lane[r] >= 0:
            line_w[opt_lane[r]] += w
        working[r] = local_pheromone_update(working.get(r, tau[r]), params, tau0)
    return choices, trace


def construct_solution(model: PheromoneModel, instance: ProblemInstance,
                       stream: AntStream) -> tuple[AntSolution, LocalTrace]:
    """Build one complete feasible solution from the shared pheromone snapshot.

    A dead end restarts the ant on the next substream of ``stream``; after
    ``max_dead_ends`` consecutive failures :class:`ConstructionStuck` is raised.
    """
    last: DeadEnd | None = None
    for attempt in range(model.params.max_dead_ends):
        result = _construct_once(model, instance, stream.draws(instance.n_orders, attempt))
        if isinstance(result, int):
            last = DeadEnd(instance.orders[result].order_id, result)
            continue
        choices, trace = result
        assignment = Assignment(tuple(choices))
        cost = solution_cost(instance, assignment, model.precision)
        return AntSolution(assignment, cost, (*stream.trace, attempt)), trace
    raise ConstructionStuck(f"{model.params.max_dead_ends} consecutive dead ends; last: {last}")

"""Synthetic instances and independent oracles.

The brute-force oracle deliberately shares no cost or constraint code with
:mod:`supplyaco.cost_engine` or :mod:`supplyaco.acs_engine`: it re-derives
line totals, band lookup, freight pricing and feasibility on its own, so the
two code paths check each other.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from .acs_engine import greedy_solution
from .cost_engine import Assignment
from .errors import DeadEnd, GenRetryExhausted, SearchSpaceTooLarge
from .instance_model import (
    Order, ProblemInstance, RateBand, Warehouse, build_instance, validate_instance,
)

MAX_SEARCH_SPACE = 10**7
DEST_PORT = "PORT09"


@dataclass(frozen=True)
class GenSpec:
    n_orders: int = 3
    n_warehouses: int = 2
    n_ports: int = 2
    n_couriers: int = 2
    n_bands_per_lane: int = 2
    n_products: int = 2
    n_customers: int = 3
    weight_range_kg: tuple[float, float] = (1.0, 50.0)
    capacity_range: tuple[int, int] = (1, 4)
    rate_range: tuple[float, float] = (0.5, 5.0)
    ground_fraction: float = 0.2
    crf_fraction: float = 0.1
    vmi_fraction: float = 0.2
    product_support: float = 0.7
    gap_spread: float = 0.1
    seed: int = 0

    def __post_init__(self) -> None:
        counts = (self.n_orders, self.n_warehouses, self.n_ports, self.n_couriers,
                  self.n_bands_per_lane, self.n_products, self.n_customers)
        if min(counts) < 1:
            raise ValueError("all counts must be >= 1")
        for p in (self.ground_fraction, self.crf_fraction, self.vmi_fraction,
                  self.product_support, self.gap_spread):
            if not 0.0 <= p <= 1.0:
                raise ValueError("probabilities must lie in [0, 1]")
        if not 0 < self.weight_range_kg[0] <= self.weight_range_kg[1]:
            raise ValueError("weight_range_kg must be a positive interval")
        if not 1 <= self.capacity_range[0] <= self.capacity_range[1]:
            raise ValueError("capacity_range must be an interval of positive integers")


def _draw_instance(spec: GenSpec, rng: np.random.Generator) -> ProblemInstance:
    ports = [f"PORT{i + 1:02d}" for i in range(spec.n_ports)]
    products = [f"PR{i + 1:03d}" for i in range(spec.n_products)]
    customers = [f"C{i + 1:02d}" for i in range(spec.n_customers)]
    lo_w, hi_w = spec.weight_range_kg

    orders = []
    for k in range(spec.n_orders):
        service = "CRF" if rng.random() < spec.crf_fraction else str(rng.choice(["DTD", "DTP"]))
        orders.append(Order(
            f"O{k + 1:04d}", str(rng.choice(products)), str(rng.choice(customers)), DEST_PORT,
            service, round(float(rng.uniform(lo_w, hi_w)), 1), float(rng.integers(1, 21))))

    warehouses = []
    for i in range(spec.n_warehouses):
        n_allowed = int(rng.integers(1, spec.n_ports + 1))
        allowed = frozenset(rng.choice(ports, size=n_allowed, replace=False).tolist())
        supported = frozenset(p for p in products if rng.random() < spec.product_support)
        vmi = frozenset([str(rng.choice(customers))]) if rng.random() < spec.vmi_fraction else frozenset()
        warehouses.append(Warehouse(
            f"PLANT{i + 1:02d}",
            int(rng.integers(spec.capacity_range[0], spec.capacity_range[1] + 1)),
            round(float(rng.uniform(0.1, 2.0)), 2), supported, allowed, vmi))

    # carriers publish a shared grid of weight breaks; each lane's top break
    # sits near the instance-wide one
    total_w = sum(o.weight_kg for o in orders)
    grid_top = float(rng.uniform(1.5 * hi_w, max(1.6 * hi_w, 0.8 * total_w)))
    bands = []
    lo_r, hi_r = spec.rate_range
    for port in ports:
        for c in range(spec.n_couriers):
            courier = f"V{c + 1:02d}"
            for service in ("DTD", "DTP"):
                ground = rng.random() < spec.ground_fraction
                top = grid_top * float(rng.uniform(1.0 - spec.gap_spread, 1.0 + spec.gap_spread))
                if ground:
                    top = max(top, 2.0 * hi_w)
                top = round(top, 1)
                cuts = np.sort(rng.uniform(0.0, top, size=spec.n_bands_per_lane - 1))
                edges = [0.0, *[round(float(x), 1) for x in cuts], top]
                rates = np.sort(rng.uniform(lo_r, hi_r, size=spec.n_bands_per_lane))[::-1]
                for b in range(spec.n_bands_per_lane):
                    if edges[b + 1] <= edges[b]:
                        continue
                    if ground:
                        rate = round(float(rates[b]) * top * 0.3, 2)
                        minimum = 0.0
                    else:
                        rate = round(float(rates[b]), 3)
                        minimum = round(float(rng.uniform(0.0, hi_r * lo_w * 3)), 2)
                    bands.append(RateBand(port, DEST_PORT, courier, service, "1",
                                          "GROUND" if ground else "AIR",
                                          edges[b], edges[b + 1], rate, minimum))
    return build_instance(orders, warehouses, bands, strict=False)


def generate_instance(spec: GenSpec, max_attempts: int = 100) -> ProblemInstance:
    """Deterministic random instance that is clean and greedily solvable."""
    rng = np.random.default_rng(np.random.SeedSequence(spec.seed))
    for _ in range(max_attempts):
        instance = _draw_instance(spec, rng)
        if validate_instance(instance):
            continue
        try:
            greedy_solution(instance)
        except DeadEnd:
            continue
        return instance
    raise GenRetryExhausted(f"no feasible instance for {spec} after {max_attempts} attempts")


def search_space_size(instance: ProblemInstance) -> int:
    return math.prod(len(opts) for opts in instance.route_options)


# --------------------------------------------------------------------------
# brute force
# --------------------------------------------------------------------------

def _oracle_rate(bands, total: float):
    # bands scanned from the top: the highest lower bound not above the total
    for band in sorted(bands, key=lambda b: b.weight_lower_kg, reverse=True):
        if band.weight_lower_kg <= total:
            return band
    return min(bands, key=lambda b: b.weight_lower_kg)


def _oracle_feasible(instance: ProblemInstance, picks) -> bool:
    per_wh: dict[int, int] = {}
    per_line: dict[tuple, float] = {}
    top: dict[tuple, float] = {}
    for order, opt in zip(instance.orders, picks):
        wh = instance.warehouses[opt.warehouse_index]
        if order.product_id not in wh.supported_products:
            return False
        if wh.vmi_customers and order.customer_id not in wh.vmi_customers:
            return False
        per_wh[opt.warehouse_index] = per_wh.get(opt.warehouse_index, 0) + 1
        if per_wh[opt.warehouse_index] > wh.daily_capacity_orders:
            return False
        if opt.lane is not None:
            if opt.lane.key[0] not in wh.allowed_ports:
                return False
            key = opt.lane.key
            per_line[key] = per_line.get(key, 0.0) + order.weight_kg
            top[key] = max(b.weight_upper_kg for b in opt.lane.bands)
    return all(per_line[key] <= top[key] for key in per_line)


def _oracle_cost(instance: ProblemInstance, picks) -> float:
    line_weight: dict[tuple, float] = {}
    line_count: dict[tuple, int] = {}
    for order, opt in zip(instance.orders, picks):
        if opt.lane is not None and order.service_level != "CRF":
            line_weight[opt.lane.key] = line_weight.get(opt.lane.key, 0.0) + order.weight_kg
            line_count[opt.lane.key] = line_count.get(opt.lane.key, 0) + 1
    cost = 0.0
    for order, opt in zip(instance.orders, picks):
        cost += order.unit_quantity * instance.warehouses[opt.warehouse_index].storage_rate_per_unit
        if order.service_level == "CRF" or opt.lane is None:
            continue
        total = line_weight[opt.lane.key]
        band = _oracle_rate(opt.lane.bands, total)
        if opt.lane.key[5] == "GROUND":
            cost += band.rate_per_kg * order.weight_kg / total if total > 0 else \
                band.rate_per_kg / line_count[opt.lane.key]
        else:
            cost += max(band.rate_per_kg * order.weight_kg, band.minimum_charge)
    return cost


def oracle_cost(instance: ProblemInstance, assignment: Assignment | Sequence[int]) -> float:
    """Independent re-evaluation of one assignment's total cost."""
    choices = assignment.choices if isinstance(assignment, Assignment) else tuple(assignment)
    return _oracle_cost(instance, [instance.route_options[k][c] for k, c in enumerate(choices)])


def oracle_feasible(instance: ProblemInstance, assignment: Assignment | Sequence[int]) -> bool:
    choices = assignment.choices if isinstance(assignment, Assignment) else tuple(assignment)
    return _oracle_feasible(instance, [instance.route_options[k][c] for k, c in enumerate(choices)])


def brute_force_optimum(instance: ProblemInstance) -> tuple[Assignment, float]:
    """Cheapest feasible assignment by exhaustive enumeration.

    Ties resolve to the lexicographically smallest assignment. Raises
    :class:`SearchSpaceTooLarge` above ten million assignments, and
    ``ValueError`` when nothing is feasible.
    """
    size = search_space_size(instance)
    if size > MAX_SEARCH_SPACE:
        raise SearchSpaceTooLarge(f"{size} assignments exceed {MAX_SEARCH_SPACE}")
    best: tuple[int, ...] | None = None
    best_cost = math.inf
    for choice in itertools.product(*(range(len(opts)) for opts in instance.route_options)):
        picks = [instance.route_options[k][c] for k, c in enumerate(choice)]
        if not _oracle_feasible(instance, picks):
            continue
        cost = _oracle_cost(instance, picks)
        if cost < best_cost:
            best, best_cost = choice, cost
    if best is None:
        raise ValueError("instance has no feasible assignment")
    return Assignment(best), best_cost


# --------------------------------------------------------------------------
# selection goodness of fit
# --------------------------------------------------------------------------

Selector = Callable[[np.ndarray, np.ndarray], np.ndarray]


def roulette_gof_test(selector: Selector, weights: Sequence[float], n_draws: int,
                      rng: np.random.Generator | int | None = None) -> float:
    """Chi-square p-value of ``selector``'s picks against ``weights / sum``.

    ``selector(weights, u)`` maps an array of uniforms ``u`` to chosen indices.
    Any pick of a zero-weight category gives p = 0.
    """
    weights = np.asarray(weights, dtype=np.float64)
    if not weights.sum() > 0:
        raise ValueError("weights must have a positive sum")
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    picks = np.asarray(selector(weights, rng.random(n_draws)), dtype=np.int64)
    counts = np.bincount(picks, minlength=len(weights))
    support = weights > 0
    if counts[~support].any():
        return 0.0
    if support.sum() == 1:
        return 1.0
    expected = weights[support] / weights.sum() * n_draws
    return float(stats.chisquare(counts[support], expected).pvalue)

"""Solution cost (warehouse storage plus freight) and constraint checking.

Freight cost of an order depends on the total weight its lane carries in the
*whole* solution, so :func:`solution_cost` is two-pass: line totals first,
per-order costs second.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import IncompleteAssignment, NonPositiveCost, WeightAboveLaneMax
from .instance_model import (
    Lane, LaneKey, Order, ProblemInstance, RateBand, RouteOption, Warehouse, band_position,
)

PRECISIONS = {"double": np.float64, "single": np.float32, "f64": np.float64, "f32": np.float32}


def precision_dtype(precision: str) -> type:
    try:
        return PRECISIONS[precision]
    except KeyError:
        raise ValueError(f"unknown precision {precision!r}") from None


@dataclass(frozen=True)
class Assignment:
    """Chosen route-option index per order; -1 marks an unassigned order."""

    choices: tuple[int, ...]

    @classmethod
    def from_array(cls, choices) -> Assignment:
        return cls(tuple(int(c) for c in np.asarray(choices).tolist()))

    @property
    def complete(self) -> bool:
        return all(c >= 0 for c in self.choices)

    def __len__(self) -> int:
        return len(self.choices)


@dataclass
class LineTotals:
    line_weight: dict[LaneKey, float] = field(default_factory=dict)
    line_orders: dict[LaneKey, int] = field(default_factory=dict)
    warehouse_orders: dict[int, int] = field(default_factory=dict)


@dataclass(frozen=True)
class CostBreakdown:
    total: float
    warehouse_total: float
    transport_total: float
    per_order: tuple[tuple[float, float], ...] | None = None


@dataclass(frozen=True)
class Violation:
    kind: str  # CapacityExceeded | WeightGapExceeded | ProductUnsupported | VmiViolated | PortUnlinked
    subject: str
    magnitude: float


def warehouse_cost(order: Order, warehouse: Warehouse) -> float:
    return order.unit_quantity * warehouse.storage_rate_per_unit


def resolve_band(lane: Lane, total_weight_kg: float) -> RateBand:
    """Band of ``lane`` that prices a line carrying ``total_weight_kg``."""
    if total_weight_kg > lane.max_upper_kg:
        raise WeightAboveLaneMax(
            f"line {'/'.join(lane.key)} carries {total_weight_kg} kg > {lane.max_upper_kg} kg")
    return lane.bands[band_position(lane, total_weight_kg)]


def line_totals(instance: ProblemInstance, assignment: Assignment) -> LineTotals:
    totals = LineTotals()
    for k, choice in enumerate(assignment.choices):
        if choice < 0:
            continue
        opt = instance.route_options[k][choice]
        totals.warehouse_orders[opt.warehouse_index] = (
            totals.warehouse_orders.get(opt.warehouse_index, 0) + 1)
        if opt.lane is not None:
            key = opt.lane.key
            totals.line_weight[key] = totals.line_weight.get(key, 0.0) + instance.orders[k].weight_kg
            totals.line_orders[key] = totals.line_orders.get(key, 0) + 1
    return totals


def transport_cost(order: Order, option: RouteOption, totals: LineTotals) -> float:
    """Freight cost of one order given the final per-line totals."""
    if order.is_crf or option.lane is None:
        return 0.0
    lane = option.lane
    line_weight = totals.line_weight.get(lane.key, 0.0)
    band = resolve_band(lane, line_weight)
    rate = band.rate_per_kg
    if lane.mode == "GROUND":
        # full-truck rate shared pro rata by weight; weightless lines split evenly
        if line_weight > 0:
            return order.weight_kg / line_weight * rate
        return rate / max(totals.line_orders.get(lane.key, 1), 1)
    charge = rate * order.weight_kg
    if charge < band.minimum_charge:
        return band.minimum_charge
    return charge


def _check_assignment(instance: ProblemInstance, choices: np.ndarray) -> None:
    if len(choices) != instance.n_orders:
        raise IncompleteAssignment(
            f"assignment covers {len(choices)} of {instance.n_orders} orders")
    if len(choices) and choices.min() < 0:
        raise IncompleteAssignment(f"order index {int(np.argmin(choices))} is unassigned")
    counts = np.diff(instance.arrays.offsets)
    bad = np.nonzero(choices >= counts)[0]
    if len(bad):
        raise IndexError(f"route index {int(choices[bad[0]])} out of range for order {int(bad[0])}")


def solution_cost(instance: ProblemInstance, assignment: Assignment | Sequence[int] | np.ndarray,
                  precision: str = "double", per_order: bool = False) -> CostBreakdown:
    """Total warehouse plus transport cost of a complete, feasible assignment."""
    choices = np.asarray(assignment.choices if isinstance(assignment, Assignment) else assignment,
                         dtype=np.int64)
    _check_assignment(instance, choices)
    dtype = precision_dtype(precision)
    if instance.n_orders == 0:
        return CostBreakdown(0.0, 0.0, 0.0, () if per_order else None)
    a = instance.arrays
    flat = a.offsets[:-1] + choices
    lanes = a.opt_lane[flat]
    real = (lanes >= 0) & ~a.order_crf
    weight = a.order_weight

    # pass 1: line totals, accumulated in order sequence like the constructor
    n_lanes = len(a.lane_max)
    totals = np.zeros(n_lanes)
    np.add.at(totals, lanes[real], weight[real])
    counts = np.bincount(lanes[real], minlength=n_lanes)
    used = np.nonzero(counts)[0]
    over = used[totals[used] > a.lane_max[used]]
    if len(over):
        key = instance.lane_keys[int(over[0])]
        raise WeightAboveLaneMax(
            f"line {'/'.join(key)} carries {totals[over[0]]} kg > {a.lane_max[over[0]]} kg")
    rate = np.zeros(n_lanes)
    minimum = np.zeros(n_lanes)
    for li in used:
        lo, hi = a.band_offsets[li], a.band_offsets[li + 1]
        pos = max(int(np.searchsorted(a.band_lower[lo:hi], totals[li], side="right")) - 1, 0)
        rate[li] = a.band_rate[lo + pos]
        minimum[li] = a.band_min[lo + pos]

    # pass 2: per-order costs in the requested precision
    idx = lanes[real]
    w = weight[real].astype(dtype)
    r = rate[idx].astype(dtype)
    m = minimum[idx].astype(dtype)
    line_w = totals[idx].astype(dtype)
    ground = a.lane_ground[idx]
    tc_real = np.empty(len(idx), dtype=dtype)
    with np.errstate(divide="ignore", invalid="ignore"):
        shared = np.where(line_w > 0, w / line_w * r, r / counts[idx].astype(dtype))
    charge = r * w
    tc_real[:] = np.where(ground, shared, np.where(charge < m, m, charge))
    tc = np.zeros(instance.n_orders, dtype=dtype)
    tc[real] = tc_real
    wc = a.opt_wcost[flat].astype(dtype)

    if dtype is np.float64:
        wh_total = math.fsum(wc.tolist())
        tr_total = math.fsum(tc.tolist())
        total = wh_total + tr_total
    else:
        wh_total = dtype(np.sum(wc, dtype=dtype))
        tr_total = dtype(np.sum(tc, dtype=dtype))
        total = float(dtype(wh_total + tr_total))
        wh_total, tr_total = float(wh_total), float(tr_total)
    pairs = tuple(zip(wc.tolist(), tc.tolist())) if per_order else None
    return CostBreakdown(total, wh_total, tr_total, pairs)


def check_constraints(instance: ProblemInstance,
                      assignment: Assignment | Sequence[int]) -> list[Violation]:
    """All capacity, weight-gap, product, VMI and port-link violations."""
    choices = assignment.choices if isinstance(assignment, Assignment) else tuple(assignment)
    violations: list[Violation] = []
    wh_counts: dict[int, int] = {}
    line_weight: dict[LaneKey, float] = {}
    lanes: dict[LaneKey, Lane] = {}
    for k, choice in enumerate(choices):
        if choice < 0:
            continue
        order = instance.orders[k]
        opt = instance.route_options[k][choice]
        wh = instance.warehouses[opt.warehouse_index]
        wh_counts[opt.warehouse_index] = wh_counts.get(opt.warehouse_index, 0) + 1
        if order.product_id not in wh.supported_products:
            violations.append(Violation("ProductUnsupported", order.order_id, 1.0))
        if not wh.serves_customer(order.customer_id):
            violations.append(Violation("VmiViolated", order.order_id, 1.0))
        if opt.lane is not None:
            if opt.lane.origin_port not in wh.allowed_ports:
                violations.append(Violation("PortUnlinked", order.order_id, 1.0))
            key = opt.lane.key
            lanes[key] = opt.lane
            line_weight[key] = line_weight.get(key, 0.0) + order.weight_kg
        elif not wh.allowed_ports:
            violations.append(Violation("PortUnlinked", order.order_id, 1.0))
    for wi in sorted(wh_counts):
        excess = wh_counts[wi] - instance.warehouses[wi].daily_capacity_orders
        if excess > 0:
            violations.append(Violation("CapacityExceeded",
                                        instance.warehouses[wi].warehouse_id, float(excess)))
    for key in sorted(line_weight):
        excess = line_weight[key] - lanes[key].max_upper_kg
        if excess > 0:
            violations.append(Violation("WeightGapExceeded", "/".join(key), excess))
    return violations


def proximity(best_known: float, achieved: float) -> float:
    """Percentage closeness of ``achieved`` to ``best_known`` (minimization)."""
    if best_known <= 0 or achieved <= 0:
        raise NonPositiveCost(f"costs must be positive (best={best_known}, achieved={achieved})")
    return 100.0 * (best_known / achieved)


def batch_solution_cost(instance: ProblemInstance, choices: np.ndarray,
                        precision: str = "double") -> list[CostBreakdown]:
    """Costs of many complete assignments at once, one per row of ``choices``.

    Same cost model as :func:`solution_cost` but with reordered summation, so
    results may differ from it in the last bits.
    """
    choices = np.atleast_2d(np.asarray(choices, dtype=np.int64))
    n_sol, n_orders = choices.shape
    dtype = precision_dtype(precision)
    if n_orders == 0:
        return [CostBreakdown(0.0, 0.0, 0.0) for _ in range(n_sol)]
    for row in choices:
        _check_assignment(instance, row)
    a = instance.arrays
    n_lanes = len(a.lane_max)
    flat = a.offsets[:-1][None, :] + choices
    lanes = a.opt_lane[flat]
    real = (lanes >= 0) & ~a.order_crf[None, :]
    sink = np.where(real, lanes, n_lanes)
    keyed = (np.arange(n_sol)[:, None] * (n_lanes + 1) + sink).ravel()
    weight = np.broadcast_to(a.order_weight, choices.shape).ravel()
    totals = np.bincount(keyed, weights=weight, minlength=n_sol * (n_lanes + 1))
    counts = np.bincount(keyed, minlength=n_sol * (n_lanes + 1))
    totals = totals.reshape(n_sol, n_lanes + 1)[:, :n_lanes]
    counts = counts.reshape(n_sol, n_lanes + 1)[:, :n_lanes]
    if np.any((counts > 0) & (totals > a.lane_max[None, :])):
        raise WeightAboveLaneMax("a line exceeds its top weight band")

    # band position = (number of band lower bounds <= total) - 1, clamped at 0
    n_bands = np.diff(a.band_offsets)
    pos = np.zeros((n_sol, n_lanes), dtype=np.int64)
    for p in range(1, int(n_bands.max(initial=1))):
        has = n_bands > p
        lower = np.where(has, a.band_lower[np.minimum(a.band_offsets[:-1] + p,
                                                      len(a.band_lower) - 1)], np.inf)
        pos += totals >= lower[None, :]
    band = a.band_offsets[:-1][None, :] + pos
    rate_l = a.band_rate[np.minimum(band, len(a.band_rate) - 1)] if len(a.band_rate) else band * 0.0
    min_l = a.band_min[np.minimum(band, len(a.band_min) - 1)] if len(a.band_min) else band * 0.0

    safe = np.where(real, lanes, 0)
    rows = np.arange(n_sol)[:, None]
    w = np.broadcast_to(a.order_weight, choices.shape).astype(dtype)
    r = rate_l[rows, safe].astype(dtype)
    m = min_l[rows, safe].astype(dtype)
    line_w = totals[rows, safe].astype(dtype)
    line_n = np.maximum(counts[rows, safe], 1).astype(dtype)
    ground = a.lane_ground[safe]
    with np.errstate(divide="ignore", invalid="ignore"):
        shared = np.where(line_w > 0, w / line_w * r, r / line_n)
    charge = r * w
    tc = np.where(real, np.where(ground, shared, np.where(charge < m, m, charge)), 0)
    wc = a.opt_wcost[flat].astype(dtype)
    wh_total = wc.sum(axis=1, dtype=dtype)
    tr_total = tc.astype(dtype).sum(axis=1, dtype=dtype)
    total = wh_total + tr_total
    return [CostBreakdown(float(t), float(wt), float(tt))
            for t, wt, tt in zip(total.tolist(), wh_total.tolist(), tr_total.tolist())]

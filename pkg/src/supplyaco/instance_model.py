"""Seven-table logistics dataset: domain types, CSV ingestion and route enumeration.

A loaded :class:`ProblemInstance` is immutable. Each order's feasible route
options are enumerated once at load time; the solver only ever chooses an
index into ``route_options[k]``.

Canonical CSV headers (one file per table, ``<Table>.csv``)::

    OrderList        order_id, product_id, customer_id, destination_port,
                     service_level, weight_kg, unit_quantity
    FreightRates     origin_port, dest_port, courier, service_level,
                     transport_day, mode, min_weight_kg, max_weight_kg,
                     rate_per_kg, minimum_charge
    PlantPorts       warehouse_id, port_id
    ProductsPerPlant warehouse_id, product_id
    VmiCustomers     warehouse_id, customer_id
    WhCapacities     warehouse_id, daily_capacity
    WhCosts          warehouse_id, cost_per_unit

Headers of the published dataset (``Plant Code``, ``orig_port_cd``, ...) are
recognised through built-in aliases; anything else can be adapted with a
mapping file of ``Table.column = Header`` lines (see
:func:`read_column_mapping`).
"""

from __future__ import annotations

import bisect
import csv
import re
from dataclasses import dataclass, replace
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .errors import DanglingReference, InfeasibleOrder, MissingTable, SchemaError

SERVICE_LEVELS = ("DTD", "DTP", "CRF")
MODES = ("AIR", "GROUND")

TABLES: dict[str, tuple[str, ...]] = {
    "OrderList": ("order_id", "product_id", "customer_id", "destination_port",
                  "service_level", "weight_kg", "unit_quantity"),
    "FreightRates": ("origin_port", "dest_port", "courier", "service_level",
                     "transport_day", "mode", "min_weight_kg", "max_weight_kg",
                     "rate_per_kg", "minimum_charge"),
    "PlantPorts": ("warehouse_id", "port_id"),
    "ProductsPerPlant": ("warehouse_id", "product_id"),
    "VmiCustomers": ("warehouse_id", "customer_id"),
    "WhCapacities": ("warehouse_id", "daily_capacity"),
    "WhCosts": ("warehouse_id", "cost_per_unit"),
}

# normalized header -> canonical column, per table (published dataset layout)
_ALIASES: dict[str, dict[str, str]] = {
    "OrderList": {"customer": "customer_id", "weight": "weight_kg",
                  "unit_quantity": "unit_quantity", "product_id": "product_id"},
    "FreightRates": {"orig_port_cd": "origin_port", "dest_port_cd": "dest_port",
                     "carrier": "courier", "svc_cd": "service_level",
                     "tpt_day_cnt": "transport_day", "mode_dsc": "mode",
                     "minm_wgh_qty": "min_weight_kg", "max_wgh_qty": "max_weight_kg",
                     "rate": "rate_per_kg", "minimum_cost": "minimum_charge"},
    "PlantPorts": {"plant_code": "warehouse_id", "port": "port_id"},
    "ProductsPerPlant": {"plant_code": "warehouse_id"},
    "VmiCustomers": {"plant_code": "warehouse_id", "customers": "customer_id",
                     "customer": "customer_id"},
    "WhCapacities": {"plant_id": "warehouse_id", "plant_code": "warehouse_id"},
    "WhCosts": {"wh": "warehouse_id", "plant_code": "warehouse_id",
                "cost_unit": "cost_per_unit"},
}

LaneKey = tuple[str, str, str, str, str, str]


@dataclass(frozen=True)
class Order:
    order_id: str
    product_id: str
    customer_id: str
    destination_port: str
    service_level: str
    weight_kg: float
    unit_quantity: float

    @property
    def is_crf(self) -> bool:
        return self.service_level == "CRF"


@dataclass(frozen=True)
class Warehouse:
    warehouse_id: str
    daily_capacity_orders: int
    storage_rate_per_unit: float
    supported_products: frozenset[str] = frozenset()
    allowed_ports: frozenset[str] = frozenset()
    vmi_customers: frozenset[str] = frozenset()

    def serves_customer(self, customer_id: str) -> bool:
        return not self.vmi_customers or customer_id in self.vmi_customers


@dataclass(frozen=True)
class RateBand:
    origin_port: str
    dest_port: str
    courier: str
    service_level: str
    transport_day: str
    mode: str
    weight_lower_kg: float
    weight_upper_kg: float
    rate_per_kg: float
    minimum_charge: float

    @property
    def lane_key(self) -> LaneKey:
        return (self.origin_port, self.dest_port, self.courier,
                self.service_level, self.transport_day, self.mode)


@dataclass(frozen=True)
class Lane:
    """All rate bands of one (origin, dest, courier, service, day, mode) line."""

    key: LaneKey
    bands: tuple[RateBand, ...]

    @property
    def origin_port(self) -> str:
        return self.key[0]

    @property
    def dest_port(self) -> str:
        return self.key[1]

    @property
    def service_level(self) -> str:
        return self.key[3]

    @property
    def mode(self) -> str:
        return self.key[5]

    @cached_property
    def max_upper_kg(self) -> float:
        return max(b.weight_upper_kg for b in self.bands)

    @cached_property
    def lowers(self) -> tuple[float, ...]:
        return tuple(b.weight_lower_kg for b in self.bands)


@dataclass(frozen=True)
class RouteOption:
    """One way to ship one order; ``lane`` is ``None`` for CRF orders."""

    order_index: int
    warehouse_index: int
    lane: Lane | None
    route_index: int

    @property
    def lane_key(self) -> LaneKey | None:
        return None if self.lane is None else self.lane.key


@dataclass(frozen=True)
class InstanceIssue:
    kind: str
    subject: str
    detail: str = ""


@dataclass(frozen=True)
class InstanceArrays:
    """Flat numeric view of an instance used by the solver hot loops.

    Route options are flattened: order ``k`` owns the slice
    ``offsets[k]:offsets[k + 1]``.
    """

    offsets: np.ndarray
    opt_order: np.ndarray
    opt_wh: np.ndarray
    opt_lane: np.ndarray  # -1 for CRF options
    opt_wcost: np.ndarray
    order_weight: np.ndarray
    order_qty: np.ndarray
    order_crf: np.ndarray
    wh_capacity: np.ndarray
    wh_rate: np.ndarray
    lane_max: np.ndarray
    lane_ground: np.ndarray
    band_offsets: np.ndarray
    band_lower: np.ndarray
    band_rate: np.ndarray
    band_min: np.ndarray

    @property
    def n_options(self) -> int:
        return int(self.offsets[-1])

    @cached_property
    def lists(self) -> dict[str, list]:
        """Plain-list copies for scalar Python loops (indexing lists beats ndarrays)."""
        names = ("offsets", "opt_wh", "opt_lane", "order_weight", "wh_capacity", "lane_max")
        return {name: getattr(self, name).tolist() for name in names}


@dataclass(frozen=True, eq=True)
class ProblemInstance:
    orders: tuple[Order, ...]
    warehouses: tuple[Warehouse, ...]
    lanes: Mapping[LaneKey, Lane]
    route_options: tuple[tuple[RouteOption, ...], ...] = ()
    best_known_cost: float | None = None

    @property
    def n_orders(self) -> int:
        return len(self.orders)

    @cached_property
    def lane_keys(self) -> tuple[LaneKey, ...]:
        return tuple(self.lanes)

    @cached_property
    def lane_index(self) -> dict[LaneKey, int]:
        return {key: i for i, key in enumerate(self.lanes)}

    @cached_property
    def warehouse_index(self) -> dict[str, int]:
        return {w.warehouse_id: i for i, w in enumerate(self.warehouses)}

    def option_counts(self) -> list[int]:
        return [len(opts) for opts in self.route_options]

    @cached_property
    def arrays(self) -> InstanceArrays:
        lane_index = self.lane_index
        counts = self.option_counts()
        offsets = np.zeros(len(counts) + 1, dtype=np.int64)
        np.cumsum(counts, out=offsets[1:])
        flat = [opt for opts in self.route_options for opt in opts]
        opt_order = np.array([o.order_index for o in flat], dtype=np.int64)
        opt_wh = np.array([o.warehouse_index for o in flat], dtype=np.int64)
        opt_lane = np.array([-1 if o.lane is None else lane_index[o.lane.key] for o in flat],
                            dtype=np.int64)
        order_weight = np.array([o.weight_kg for o in self.orders], dtype=np.float64)
        order_qty = np.array([o.unit_quantity for o in self.orders], dtype=np.float64)
        wh_rate = np.array([w.storage_rate_per_unit for w in self.warehouses], dtype=np.float64)
        lanes = list(self.lanes.values())
        band_counts = [len(lane.bands) for lane in lanes]
        band_offsets = np.zeros(len(lanes) + 1, dtype=np.int64)
        np.cumsum(band_counts, out=band_offsets[1:])
        bands = [b for lane in lanes for b in lane.bands]
        return InstanceArrays(
            offsets=offsets,
            opt_order=opt_order,
            opt_wh=opt_wh,
            opt_lane=opt_lane,
            opt_wcost=order_qty[opt_order] * wh_rate[opt_wh] if flat else np.zeros(0),
            order_weight=order_weight,
            order_qty=order_qty,
            order_crf=np.array([o.is_crf for o in self.orders], dtype=bool),
            wh_capacity=np.array([w.daily_capacity_orders for w in self.warehouses],
                                 dtype=np.int64),
            wh_rate=wh_rate,
            lane_max=np.array([lane.max_upper_kg for lane in lanes], dtype=np.float64),
            lane_ground=np.array([lane.mode == "GROUND" for lane in lanes], dtype=bool),
            band_offsets=band_offsets,
            band_lower=np.array([b.weight_lower_kg for b in bands], dtype=np.float64),
            band_rate=np.array([b.rate_per_kg for b in bands], dtype=np.float64),
            band_min=np.array([b.minimum_charge for b in bands], dtype=np.float64),
        )


# --------------------------------------------------------------------------
# construction
# --------------------------------------------------------------------------

def group_lanes(bands: Iterable[RateBand]) -> dict[LaneKey, Lane]:
    """Group rate rows into lanes, sorted by key; bands sorted by lower bound."""
    grouped: dict[LaneKey, list[RateBand]] = {}
    for band in bands:
        grouped.setdefault(band.lane_key, []).append(band)
    return {
        key: Lane(key, tuple(sorted(grouped[key],
                                    key=lambda b: (b.weight_lower_kg, b.weight_upper_kg))))
        for key in sorted(grouped)
    }


def enumerate_route_options(instance: ProblemInstance, order: Order,
                            order_index: int | None = None) -> list[RouteOption]:
    """Every statically feasible (warehouse, lane) pair for ``order``.

    Ordered by warehouse index, then lane key. CRF orders get one lane-less
    option per feasible warehouse because their transport cost is always zero.
    """
    if order_index is None:
        order_index = instance.orders.index(order)
    options: list[RouteOption] = []
    for wi, wh in enumerate(instance.warehouses):
        if order.product_id not in wh.supported_products:
            continue
        if not wh.serves_customer(order.customer_id):
            continue
        if order.is_crf:
            if wh.allowed_ports:
                options.append(RouteOption(order_index, wi, None, len(options)))
            continue
        for key, lane in instance.lanes.items():
            if (key[0] in wh.allowed_ports and key[1] == order.destination_port
                    and key[3] == order.service_level):
                options.append(RouteOption(order_index, wi, lane, len(options)))
    return options


def build_instance(orders: Iterable[Order], warehouses: Iterable[Warehouse],
                   bands: Iterable[RateBand], best_known_cost: float | None = None,
                   strict: bool = True) -> ProblemInstance:
    """Assemble an instance and enumerate route options for every order.

    With ``strict`` an order without options raises :class:`InfeasibleOrder`.
    """
    bare = ProblemInstance(tuple(orders), tuple(warehouses), group_lanes(bands),
                           best_known_cost=best_known_cost)
    route_options = []
    for k, order in enumerate(bare.orders):
        opts = enumerate_route_options(bare, order, k)
        if strict and not opts:
            raise InfeasibleOrder(order.order_id)
        route_options.append(tuple(opts))
    return replace(bare, route_options=tuple(route_options))


# --------------------------------------------------------------------------
# CSV ingestion
# --------------------------------------------------------------------------

def _norm_header(name: str) -> str:
    return re.sub(r"[^0-9a-z]+", "_", name.strip().lower()).strip("_")


def read_column_mapping(path: str | Path) -> dict[str, dict[str, str]]:
    """Parse a header mapping file.

    One ``Table.canonical_column = Actual Header`` per line; ``#`` starts a
    comment. Returns ``{table: {normalized actual header: canonical}}``.
    """
    mapping: dict[str, dict[str, str]] = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line or "." not in line.split("=", 1)[0]:
            raise SchemaError(f"{path}:{lineno}: expected 'Table.column = Header'")
        lhs, rhs = (s.strip() for s in line.split("=", 1))
        table, column = (s.strip() for s in lhs.split(".", 1))
        if table not in TABLES or column not in TABLES[table]:
            raise SchemaError(f"{path}:{lineno}: unknown column {lhs!r}")
        mapping.setdefault(table, {})[_norm_header(rhs)] = column
    return mapping


def _find_table(data_dir: Path, table: str) -> Path:
    wanted = table.lower() + ".csv"
    if not data_dir.is_dir():
        raise MissingTable(f"data directory {data_dir} does not exist")
    for path in sorted(data_dir.iterdir()):
        if path.is_file() and path.name.lower() == wanted:
            return path
    raise MissingTable(f"{table}.csv not found in {data_dir}")


def _read_table(data_dir: Path, table: str,
                mapping: Mapping[str, Mapping[str, str]]) -> list[dict[str, str]]:
    path = _find_table(data_dir, table)
    required = TABLES[table]
    aliases = dict(_ALIASES.get(table, {}))
    aliases.update(mapping.get(table, {}))
    with path.open(newline="", encoding="utf-8-sig") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path.name}: missing header row") from None
        columns: dict[str, int] = {}
        for pos, name in enumerate(header):
            norm = _norm_header(name)
            canonical = aliases.get(norm, norm)
            if canonical in required and canonical not in columns:
                columns[canonical] = pos
        missing = [c for c in required if c not in columns]
        if missing:
            raise SchemaError(f"{path.name}: required column(s) absent: {', '.join(missing)}")
        rows = []
        for row in reader:
            if not any(cell.strip() for cell in row):
                continue
            rows.append({c: (row[p].strip() if p < len(row) else "") for c, p in columns.items()})
    return rows


def _number(text: str, where: str) -> float:
    cleaned = text.replace("$", "").replace(",", "").strip()
    try:
        return float(cleaned)
    except ValueError:
        raise SchemaError(f"{where}: not a number: {text!r}") from None


def _ident(text: str) -> str:
    # published data stores some numeric ids as floats ("1.0")
    text = text.strip()
    if re.fullmatch(r"-?\d+\.0+", text):
        return text.split(".", 1)[0]
    return text


def load_instance(data_dir: str | Path, mapping: str | Path | Mapping | None = None,
                  best_known_cost: float | None = None, strict: bool = True) -> ProblemInstance:
    """Load the seven CSV tables in ``data_dir`` into a :class:`ProblemInstance`.

    ``mapping`` is either a mapping-file path or an already parsed mapping.
    Raises MissingTable, SchemaError, DanglingReference, and (when
    ``strict``) InfeasibleOrder.
    """
    data_dir = Path(data_dir)
    if mapping is None:
        mapping = {}
    elif isinstance(mapping, (str, Path)):
        mapping = read_column_mapping(mapping)
    tables = {name: _read_table(data_dir, name, mapping) for name in TABLES}

    capacities: dict[str, int] = {}
    for row in tables["WhCapacities"]:
        value = _number(row["daily_capacity"], "WhCapacities.daily_capacity")
        capacities[_ident(row["warehouse_id"])] = int(round(value))
    costs: dict[str, float] = {}
    for row in tables["WhCosts"]:
        costs[_ident(row["warehouse_id"])] = _number(row["cost_per_unit"], "WhCosts.cost_per_unit")
    for wid in costs:
        if wid not in capacities:
            raise DanglingReference(f"WhCosts names unknown warehouse {wid!r}")
    for wid in capacities:
        if wid not in costs:
            raise DanglingReference(f"warehouse {wid!r} has no WhCosts row")

    def collect(table: str, column: str) -> dict[str, set[str]]:
        out: dict[str, set[str]] = {w: set() for w in capacities}
        for row in tables[table]:
            wid = _ident(row["warehouse_id"])
            if wid not in out:
                raise DanglingReference(f"{table} names unknown warehouse {wid!r}")
            out[wid].add(_ident(row[column]))
        return out

    ports = collect("PlantPorts", "port_id")
    products = collect("ProductsPerPlant", "product_id")
    vmi = collect("VmiCustomers", "customer_id")
    warehouses = [
        Warehouse(wid, capacities[wid], costs[wid], frozenset(products[wid]),
                  frozenset(ports[wid]), frozenset(vmi[wid]))
        for wid in sorted(capacities)
    ]

    bands = []
    for i, row in enumerate(tables["FreightRates"]):
        where = f"FreightRates row {i + 2}"
        service = row["service_level"].upper()
        mode = row["mode"].upper()
        if service not in SERVICE_LEVELS:
            raise SchemaError(f"{where}: unknown service level {row['service_level']!r}")
        if mode not in MODES:
            raise SchemaError(f"{where}: unknown mode {row['mode']!r}")
        bands.append(RateBand(
            _ident(row["origin_port"]), _ident(row["dest_port"]), _ident(row["courier"]),
            service, _ident(row["transport_day"]), mode,
            _number(row["min_weight_kg"], where), _number(row["max_weight_kg"], where),
            _number(row["rate_per_kg"], where), _number(row["minimum_charge"], where),
        ))

    orders = []
    for i, row in enumerate(tables["OrderList"]):
        where = f"OrderList row {i + 2}"
        service = row["service_level"].upper()
        if service not in SERVICE_LEVELS:
            raise SchemaError(f"{where}: unknown service level {row['service_level']!r}")
        orders.append(Order(
            _ident(row["order_id"]), _ident(row["product_id"]), _ident(row["customer_id"]),
            _ident(row["destination_port"]), service,
            _number(row["weight_kg"], where), _number(row["unit_quantity"], where),
        ))
    return build_instance(orders, warehouses, bands, best_known_cost, strict=strict)


def _fmt(value: float) -> str:
    return repr(float(value))


def write_instance(instance: ProblemInstance, data_dir: str | Path) -> Path:
    """Serialize ``instance`` to the seven canonical CSV tables."""
    data_dir = Path(data_dir)
    data_dir.mkdir(parents=True, exist_ok=True)
    rows: dict[str, list[tuple]] = {name: [] for name in TABLES}
    for o in instance.orders:
        rows["OrderList"].append((o.order_id, o.product_id, o.customer_id, o.destination_port,
                                  o.service_level, _fmt(o.weight_kg), _fmt(o.unit_quantity)))
    for lane in instance.lanes.values():
        for b in lane.bands:
            rows["FreightRates"].append((*b.lane_key, _fmt(b.weight_lower_kg),
                                         _fmt(b.weight_upper_kg), _fmt(b.rate_per_kg),
                                         _fmt(b.minimum_charge)))
    for w in instance.warehouses:
        rows["WhCapacities"].append((w.warehouse_id, w.daily_capacity_orders))
        rows["WhCosts"].append((w.warehouse_id, _fmt(w.storage_rate_per_unit)))
        rows["PlantPorts"].extend((w.warehouse_id, p) for p in sorted(w.allowed_ports))
        rows["ProductsPerPlant"].extend((w.warehouse_id, p) for p in sorted(w.supported_products))
        rows["VmiCustomers"].extend((w.warehouse_id, c) for c in sorted(w.vmi_customers))
    for name, header in TABLES.items():
        with (data_dir / f"{name}.csv").open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            writer.writerows(rows[name])
    return data_dir


# --------------------------------------------------------------------------
# validation
# --------------------------------------------------------------------------

def validate_instance(instance: ProblemInstance) -> list[InstanceIssue]:
    """Structural lint; returns issues instead of raising."""
    issues: list[InstanceIssue] = []
    for o in instance.orders:
        if not o.weight_kg >= 0:
            issues.append(InstanceIssue("NegativeWeight", o.order_id, f"weight_kg={o.weight_kg}"))
        if not o.unit_quantity >= 0:
            issues.append(InstanceIssue("NegativeQuantity", o.order_id,
                                        f"unit_quantity={o.unit_quantity}"))
        if o.service_level not in SERVICE_LEVELS:
            issues.append(InstanceIssue("UnknownServiceLevel", o.order_id, o.service_level))
    for w in instance.warehouses:
        if w.daily_capacity_orders <= 0:
            issues.append(InstanceIssue("NonPositiveCapacity", w.warehouse_id,
                                        f"daily_capacity={w.daily_capacity_orders}"))
        if w.storage_rate_per_unit < 0:
            issues.append(InstanceIssue("NegativeStorageRate", w.warehouse_id))
        if not w.allowed_ports:
            issues.append(InstanceIssue("NoAllowedPorts", w.warehouse_id))
    for key, lane in instance.lanes.items():
        subject = "/".join(key)
        for b in lane.bands:
            if not b.weight_lower_kg < b.weight_upper_kg or b.weight_lower_kg < 0:
                issues.append(InstanceIssue("InvalidBand", subject,
                                            f"[{b.weight_lower_kg}, {b.weight_upper_kg})"))
            if b.rate_per_kg < 0 or b.minimum_charge < 0:
                issues.append(InstanceIssue("NegativeRate", subject))
        for prev, cur in zip(lane.bands, lane.bands[1:]):
            if cur.weight_lower_kg < prev.weight_upper_kg:
                issues.append(InstanceIssue(
                    "OverlappingBands", subject,
                    f"[{prev.weight_lower_kg}, {prev.weight_upper_kg}) overlaps "
                    f"[{cur.weight_lower_kg}, {cur.weight_upper_kg})"))
    if len(instance.route_options) != len(instance.orders):
        issues.append(InstanceIssue("RouteOptionsMissing", "instance",
                                    "route options not enumerated"))
    else:
        for o, opts in zip(instance.orders, instance.route_options):
            if not opts:
                issues.append(InstanceIssue("OrderWithoutOptions", o.order_id))
    return issues


def band_position(lane: Lane, total_weight_kg: float) -> int:
    """Index of the band covering ``total_weight_kg``.

    Bands behave as contiguous half-open intervals ``[lower_i, lower_{i+1})``;
    a weight on a boundary belongs to the higher band, and the lane maximum
    itself belongs to the last band.
    """
    return max(bisect.bisect_right(lane.lowers, total_weight_kg) - 1, 0)


__all__ = [
    "SERVICE_LEVELS", "MODES", "TABLES", "Order", "Warehouse", "RateBand", "Lane",
    "RouteOption", "ProblemInstance", "InstanceIssue", "InstanceArrays", "group_lanes",
    "enumerate_route_options", "build_instance", "read_column_mapping", "load_instance",
    "write_instance", "validate_instance", "band_position",
]

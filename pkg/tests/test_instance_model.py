from __future__ import annotations

import csv
from dataclasses import replace

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import DEST, band, tiny_instance
from supplyaco.errors import DanglingReference, InfeasibleOrder, MissingTable, SchemaError
from supplyaco.instance_model import (
    TABLES, Order, Warehouse, band_position, build_instance, enumerate_route_options,
    group_lanes, load_instance, read_column_mapping, validate_instance, write_instance,
)
from supplyaco.oracle_and_gen import GenSpec, generate_instance


def _write(path, name, header, rows):
    with (path / f"{name}.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _dataset(tmp_path, **override):
    tables = {
        "OrderList": [("O1", "P1", "C1", DEST, "DTD", "10", "5")],
        "FreightRates": [("PORT01", DEST, "V1", "DTD", "1", "AIR", "0", "100", "2", "5")],
        "PlantPorts": [("W1", "PORT01")],
        "ProductsPerPlant": [("W1", "P1")],
        "VmiCustomers": [],
        "WhCapacities": [("W1", "4")],
        "WhCosts": [("W1", "1.5")],
    }
    tables.update(override)
    for name, rows in tables.items():
        _write(tmp_path, name, TABLES[name], rows)
    return tmp_path


# -- loading ---------------------------------------------------------------

def test_load_minimal_dataset(tmp_path):
    inst = load_instance(_dataset(tmp_path))
    assert inst.n_orders == 1
    assert [w.warehouse_id for w in inst.warehouses] == ["W1"]
    assert inst.warehouses[0].storage_rate_per_unit == 1.5
    assert inst.option_counts() == [1]


def test_empty_order_list_gives_empty_instance(tmp_path):
    inst = load_instance(_dataset(tmp_path, OrderList=[]))
    assert inst.n_orders == 0
    assert inst.route_options == ()


def test_missing_table(tmp_path):
    _dataset(tmp_path)
    (tmp_path / "WhCosts.csv").unlink()
    with pytest.raises(MissingTable):
        load_instance(tmp_path)


def test_missing_directory(tmp_path):
    with pytest.raises(MissingTable):
        load_instance(tmp_path / "absent")


def test_table_names_match_case_insensitively(tmp_path):
    _dataset(tmp_path)
    (tmp_path / "OrderList.csv").rename(tmp_path / "orderlist.CSV")
    assert load_instance(tmp_path).n_orders == 1


def test_missing_column_is_schema_error(tmp_path):
    _dataset(tmp_path)
    _write(tmp_path, "WhCosts", ("warehouse_id",), [("W1",)])
    with pytest.raises(SchemaError, match="cost_per_unit"):
        load_instance(tmp_path)


def test_dangling_warehouse_reference(tmp_path):
    with pytest.raises(DanglingReference):
        load_instance(_dataset(tmp_path, PlantPorts=[("W1", "PORT01"), ("W9", "PORT02")]))


def test_infeasible_order_reports_id(tmp_path):
    rows = [("O1", "P1", "C1", DEST, "DTD", "10", "5"), ("O2", "P7", "C1", DEST, "DTD", "1", "1")]
    with pytest.raises(InfeasibleOrder) as err:
        load_instance(_dataset(tmp_path, OrderList=rows))
    assert err.value.order_id == "O2"
    lenient = load_instance(tmp_path, strict=False)
    assert lenient.option_counts() == [1, 0]
    assert [i.kind for i in validate_instance(lenient)] == ["OrderWithoutOptions"]


def test_published_header_aliases(tmp_path):
    _dataset(tmp_path)
    _write(tmp_path, "FreightRates",
           ("Carrier", "orig_port_cd", "dest_port_cd", "minm_wgh_qty", "max_wgh_qty", "svc_cd",
            "minimum cost", "rate", "mode_dsc", "tpt_day_cnt"),
           [("V1", "PORT01", DEST, "0", "100", "DTD", "$5.00", "2", "AIR    ", "1")])
    _write(tmp_path, "WhCosts", ("WH", "Cost/unit"), [("W1", "1.5")])
    _write(tmp_path, "PlantPorts", ("Plant Code", "Port"), [("W1", "PORT01")])
    inst = load_instance(tmp_path)
    (lane,) = inst.lanes.values()
    assert lane.bands[0].minimum_charge == 5.0
    assert lane.mode == "AIR"


def test_mapping_file(tmp_path):
    _dataset(tmp_path)
    _write(tmp_path, "WhCapacities", ("Plant", "Orders Per Day"), [("W1", "4")])
    mapping = tmp_path / "columns.map"
    mapping.write_text("# renamed headers\nWhCapacities.warehouse_id = Plant\n"
                       "WhCapacities.daily_capacity = Orders Per Day\n")
    assert read_column_mapping(mapping)["WhCapacities"] == {
        "plant": "warehouse_id", "orders_per_day": "daily_capacity"}
    assert load_instance(tmp_path, mapping).warehouses[0].daily_capacity_orders == 4


def test_bad_mapping_line(tmp_path):
    mapping = tmp_path / "bad.map"
    mapping.write_text("Nonsense.column = x\n")
    with pytest.raises(SchemaError):
        read_column_mapping(mapping)


@pytest.mark.parametrize("seed", range(5))
def test_csv_round_trip(tmp_path, seed):
    inst = generate_instance(GenSpec(n_orders=5, seed=seed))
    again = load_instance(write_instance(inst, tmp_path / "d"))
    assert again == inst
    assert [[(o.warehouse_index, o.lane_key) for o in opts] for opts in again.route_options] == \
        [[(o.warehouse_index, o.lane_key) for o in opts] for opts in inst.route_options]


# -- enumeration ---------------------------------------------------------------

def test_tiny_enumeration(tiny):
    air = ("PORT01", DEST, "V1", "DTD", "1", "AIR")
    ground = ("PORT02", DEST, "V1", "DTD", "1", "GROUND")
    expected = [(0, air), (1, air), (1, ground)]
    assert [(o.warehouse_index, o.lane_key) for o in tiny.route_options[0]] == expected
    assert [(o.warehouse_index, o.lane_key) for o in tiny.route_options[2]] == [(0, None), (1, None)]
    assert [o.route_index for o in tiny.route_options[1]] == [0, 1, 2]


def test_product_stocked_nowhere(tiny):
    assert enumerate_route_options(tiny, Order("X", "P9", "C1", DEST, "DTD", 1.0, 1.0), 0) == []


def test_vmi_customer_restricts_warehouses():
    whs = [Warehouse("A", 5, 1.0, frozenset({"P"}), frozenset({"PORT01"}), frozenset({"C1"})),
           Warehouse("B", 5, 1.0, frozenset({"P"}), frozenset({"PORT01"}), frozenset({"C2"})),
           Warehouse("C", 5, 1.0, frozenset({"P"}), frozenset({"PORT01"}))]
    bands = [band("PORT01", "V1", "DTD", "AIR", 0, 100, 1.0)]
    orders = [Order("O1", "P", "C1", DEST, "DTD", 1.0, 1.0), Order("O2", "P", "C3", DEST, "DTD", 1.0, 1.0)]
    inst = build_instance(orders, whs, bands)
    assert [o.warehouse_index for o in inst.route_options[0]] == [0, 2]
    assert [o.warehouse_index for o in inst.route_options[1]] == [2]


def test_two_warehouses_three_lanes_one_lacking_product():
    whs = [Warehouse("A", 5, 1.0, frozenset({"P"}), frozenset({"PORT01", "PORT02"})),
           Warehouse("B", 5, 1.0, frozenset({"Q"}), frozenset({"PORT01", "PORT02"}))]
    bands = [band("PORT01", "V1", "DTD", "AIR", 0, 100, 1.0),
             band("PORT01", "V2", "DTD", "AIR", 0, 100, 1.0),
             band("PORT02", "V1", "DTD", "GROUND", 0, 100, 1.0)]
    inst = build_instance([Order("O1", "P", "C1", DEST, "DTD", 1.0, 1.0)], whs, bands)
    assert len(inst.route_options[0]) == 3


def test_enumeration_is_deterministic(synthetic):
    for inst in synthetic:
        for k, order in enumerate(inst.orders):
            assert enumerate_route_options(inst, order, k) == enumerate_route_options(inst, order, k)


def _naive_options(orders, warehouses, bands):
    lanes = sorted({b.lane_key for b in bands})
    out = []
    for o in orders:
        opts = []
        for wi, w in enumerate(warehouses):
            ok = o.product_id in w.supported_products and (
                not w.vmi_customers or o.customer_id in w.vmi_customers)
            if not ok:
                continue
            if o.service_level == "CRF":
                if w.allowed_ports:
                    opts.append((wi, None))
                continue
            opts.extend((wi, key) for key in lanes
                        if key[0] in w.allowed_ports and key[1] == o.destination_port
                        and key[3] == o.service_level)
        out.append(opts)
    return out


_ids = st.sampled_from
_order = st.builds(Order, st.just("O"), _ids(["P1", "P2", "P3"]), _ids(["C1", "C2"]),
                   _ids([DEST, "PORT08"]), _ids(["DTD", "DTP", "CRF"]),
                   st.floats(0, 50), st.floats(0, 10))
_warehouse = st.builds(Warehouse, st.just("W"), st.integers(1, 5), st.floats(0, 3),
                       st.frozensets(_ids(["P1", "P2", "P3"])),
                       st.frozensets(_ids(["PORT01", "PORT02", "PORT03"]), min_size=1),
                       st.frozensets(_ids(["C1", "C2"])))
_band = st.builds(band, _ids(["PORT01", "PORT02", "PORT03"]), _ids(["V1", "V2"]),
                  _ids(["DTD", "DTP"]), _ids(["AIR", "GROUND"]), st.just(0.0),
                  st.just(100.0), st.just(1.0), dest=_ids([DEST, "PORT08"]))


@settings(max_examples=200, deadline=None)
@given(st.lists(_order, max_size=6), st.lists(_warehouse, min_size=1, max_size=4),
       st.lists(_band, max_size=8))
def test_enumeration_matches_naive_filter(orders, warehouses, bands):
    orders = [replace(o, order_id=f"O{k}") for k, o in enumerate(orders)]
    warehouses = [replace(w, warehouse_id=f"W{i}") for i, w in enumerate(warehouses)]
    inst = build_instance(orders, warehouses, bands, strict=False)
    got = [[(o.warehouse_index, o.lane_key) for o in opts] for opts in inst.route_options]
    assert got == _naive_options(orders, warehouses, bands)
    for opts in inst.route_options:
        for opt in opts:
            order, wh = inst.orders[opt.order_index], inst.warehouses[opt.warehouse_index]
            assert order.product_id in wh.supported_products
            assert wh.serves_customer(order.customer_id)
            if opt.lane is not None:
                assert opt.lane.origin_port in wh.allowed_ports
                assert opt.lane.dest_port == order.destination_port
                assert opt.lane.service_level == order.service_level


# -- validation and bands --------------------------------------------------------

def test_clean_instances_validate(synthetic):
    assert all(validate_instance(inst) == [] for inst in synthetic)
    assert validate_instance(tiny_instance()) == []


def test_overlapping_bands_reported_once():
    bands = [band("PORT01", "V1", "DTD", "AIR", 0, 100, 1.0),
             band("PORT01", "V1", "DTD", "AIR", 50, 200, 1.0)]
    whs = [Warehouse("W", 1, 1.0, frozenset({"P"}), frozenset({"PORT01"}))]
    inst = build_instance([Order("O", "P", "C", DEST, "DTD", 1.0, 1.0)], whs, bands)
    assert [i.kind for i in validate_instance(inst)] == ["OverlappingBands"]


def test_validate_flags_bad_values():
    whs = [Warehouse("W", 0, -1.0, frozenset({"P"}), frozenset({"PORT01"}))]
    bands = [band("PORT01", "V1", "DTD", "AIR", 10, 5, -1.0)]
    inst = build_instance([Order("O", "P", "C", DEST, "DTD", -1.0, 1.0)], whs, bands)
    kinds = {i.kind for i in validate_instance(inst)}
    assert {"NegativeWeight", "NonPositiveCapacity", "NegativeStorageRate", "InvalidBand",
            "NegativeRate"} <= kinds


def test_band_position_boundaries():
    lane = group_lanes([band("A", "V", "DTD", "AIR", 0, 100, 2.0),
                        band("A", "V", "DTD", "AIR", 100, 500, 1.2)])[("A", DEST, "V", "DTD", "1", "AIR")]
    assert lane.max_upper_kg == 500
    assert band_position(lane, 0) == 0
    assert band_position(lane, 99.999) == 0
    assert band_position(lane, 100) == 1
    assert band_position(lane, 500) == 1


def test_lanes_sorted_by_key_and_bands_by_lower():
    lanes = group_lanes([band("B", "V", "DTD", "AIR", 50, 60, 1.0),
                         band("A", "V", "DTD", "AIR", 0, 10, 1.0),
                         band("B", "V", "DTD", "AIR", 0, 50, 1.0)])
    assert [k[0] for k in lanes] == ["A", "B"]
    assert [b.weight_lower_kg for b in lanes[("B", DEST, "V", "DTD", "1", "AIR")].bands] == [0, 50]

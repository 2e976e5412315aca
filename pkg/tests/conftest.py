from __future__ import annotations

import pytest

from supplyaco.instance_model import Order, RateBand, Warehouse, build_instance
from supplyaco.oracle_and_gen import GenSpec, generate_instance

DEST = "PORT09"


def band(origin, courier, service, mode, lo, hi, rate, minimum=0.0, dest=DEST, day="1"):
    return RateBand(origin, dest, courier, service, day, mode, lo, hi, rate, minimum)


def tiny_instance():
    """Three orders, two warehouses, one AIR and one GROUND lane.

    Route options per order (warehouse then lane key):
      O1, O2 (DTD): [W1/AIR, W2/AIR, W2/GROUND]
      O3 (CRF): [W1, W2]
    """
    orders = [
        Order("O1", "P1", "C1", DEST, "DTD", 10.0, 5.0),
        Order("O2", "P1", "C2", DEST, "DTD", 20.0, 3.0),
        Order("O3", "P2", "C1", DEST, "CRF", 5.0, 2.0),
    ]
    warehouses = [
        Warehouse("W1", 2, 1.0, frozenset({"P1", "P2"}), frozenset({"PORT01"})),
        Warehouse("W2", 3, 2.0, frozenset({"P1", "P2"}), frozenset({"PORT01", "PORT02"})),
    ]
    bands = [
        band("PORT01", "V1", "DTD", "AIR", 0.0, 15.0, 2.0, 5.0),
        band("PORT01", "V1", "DTD", "AIR", 15.0, 100.0, 1.0, 5.0),
        band("PORT02", "V1", "DTD", "GROUND", 0.0, 50.0, 100.0),
        band("PORT02", "V1", "DTD", "GROUND", 50.0, 200.0, 150.0),
        band("PORT01", "V2", "DTP", "AIR", 0.0, 100.0, 3.0, 1.0),
    ]
    return build_instance(orders, warehouses, bands)


@pytest.fixture
def tiny():
    return tiny_instance()


@pytest.fixture(scope="session")
def synthetic():
    """A handful of small generated instances shared across tests."""
    return [generate_instance(GenSpec(n_orders=n, seed=s)) for n in (3, 4) for s in range(4)]


# -- acceptance reporting ------------------------------------------------------------

ACCEPTANCE: dict[int, tuple[str, str]] = {}


@pytest.fixture
def record():
    """Store one pass/fail/skip line per acceptance criterion."""
    def _record(number: int, status: str, detail: str) -> None:
        ACCEPTANCE[number] = (status, detail)
    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for number in sorted(ACCEPTANCE):
        status, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number}: {status} - {detail}")

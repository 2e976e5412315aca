"""Exception hierarchy shared by every supplyaco module."""

from __future__ import annotations


class SupplyAcoError(Exception):
    """Base class for all package errors."""


class DataError(SupplyAcoError):
    """Problem with the input dataset (CLI exit code 3)."""


class MissingTable(DataError):
    pass


class SchemaError(DataError):
    pass


class DanglingReference(DataError):
    pass


class InfeasibleOrder(DataError):
    def __init__(self, order_id: str, message: str | None = None) -> None:
        self.order_id = order_id
        super().__init__(message or f"order {order_id!r} has no feasible route option")


class ConfigError(SupplyAcoError):
    """Invalid run or experiment configuration (CLI exit code 2)."""


class RunError(SupplyAcoError):
    """Failure while solving (CLI exit code 4)."""


class WeightAboveLaneMax(RunError):
    pass


class IncompleteAssignment(RunError):
    pass


class NonPositiveCost(SupplyAcoError, ValueError):
    pass


class AllMasked(RunError):
    pass


class DeadEnd(RunError):
    def __init__(self, order_id: str, order_index: int) -> None:
        self.order_id = order_id
        self.order_index = order_index
        super().__init__(f"all route options masked for order {order_id!r} (index {order_index})")


class ConstructionStuck(RunError):
    pass


class GenRetryExhausted(SupplyAcoError):
    pass


class SearchSpaceTooLarge(SupplyAcoError):
    pass

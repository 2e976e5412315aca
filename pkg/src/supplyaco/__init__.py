"""Parallel Ant Colony System solver for outbound supply-chain routing."""

from .acs_engine import AcsParams, AntSolution, PheromoneModel, construct_solution, init_model
from .cost_engine import Assignment, CostBreakdown, check_constraints, proximity, solution_cost
from .instance_model import ProblemInstance, load_instance, validate_instance, write_instance
from .parallel_runtime import RunConfig, RunResult, run, run_iac, run_pa, run_pawv

__version__ = "0.1.0"

__all__ = [
    "AcsParams", "AntSolution", "PheromoneModel", "construct_solution", "init_model",
    "Assignment", "CostBreakdown", "check_constraints", "proximity", "solution_cost",
    "ProblemInstance", "load_instance", "validate_instance", "write_instance",
    "RunConfig", "RunResult", "run", "run_iac", "run_pa", "run_pawv",
]

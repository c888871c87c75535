"""Parallel-in-time preconditioned primal-dual solver for variational mean field games."""

__version__ = "0.1.0"

from .cp import CpOptions, CpResult, SolveStats, run_cp
from .grid import BC, Grid, PrimalState
from .precond import PinTPreconditioner, PrecondSpec, StepSolver
from .problems import Problem, load_config, problem1, problem2, trivial_problem

__all__ = [
    "BC",
    "Grid",
    "PrimalState",
    "PrecondSpec",
    "PinTPreconditioner",
    "StepSolver",
    "CpOptions",
    "CpResult",
    "SolveStats",
    "run_cp",
    "Problem",
    "problem1",
    "problem2",
    "trivial_problem",
    "load_config",
]

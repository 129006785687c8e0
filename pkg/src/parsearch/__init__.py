"""Grid solvers and verification tools for costly parallel search."""

from .analytic import Cost
from .grid import GridSpec, build_obstacle, default_grid, truncation_boundary_values
from .solver import SolverConfig, solve, solve_hybrid, solve_parallel, solve_sequential

__all__ = [
    "Cost",
    "GridSpec",
    "SolverConfig",
    "build_obstacle",
    "default_grid",
    "solve",
    "solve_hybrid",
    "solve_parallel",
    "solve_sequential",
    "truncation_boundary_values",
]

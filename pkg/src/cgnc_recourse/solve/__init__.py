"""Solving backends: in-repo branch-and-bound, multi-start local search, grid oracle."""
from .bnb import solve_milp
from .grid import solve_grid_oracle
from .local import solve_local
from .result import SolveResult, SolveStats, SolverError

__all__ = ["SolveResult", "SolveStats", "SolverError", "solve_grid_oracle", "solve_local", "solve_milp"]

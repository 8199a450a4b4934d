"""MILP IR, LP-file export, and the piecewise McCormick builders (in ``milp.relax``)."""
from .lp_format import dumps_lp, write_lp
from .model import BINARY, CONTINUOUS, LinearConstraint, MilpBuilder, MilpError, MilpModel, Objective, Variable

__all__ = [
    "BINARY",
    "CONTINUOUS",
    "LinearConstraint",
    "MilpBuilder",
    "MilpError",
    "MilpModel",
    "Objective",
    "Variable",
    "dumps_lp",
    "write_lp",
]

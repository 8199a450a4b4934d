"""Common result type for every solving backend."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional

OPTIMAL = "optimal"
FEASIBLE = "feasible"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
ITERATION_LIMIT = "iteration-limit"
STATUSES = (OPTIMAL, FEASIBLE, INFEASIBLE, UNBOUNDED, ITERATION_LIMIT)


class SolverError(RuntimeError):
    pass


@dataclass
class SolveStats:
    nodes: int = 0
    simplex_iterations: int = 0
    wall_time: float = 0.0


@dataclass
class SolveResult:
    status: str
    objective: float
    assignment: dict
    gap: float = 0.0
    bound: Optional[float] = None
    stats: SolveStats = field(default_factory=SolveStats)
    info: dict = field(default_factory=dict)

    @property
    def has_solution(self) -> bool:
        return bool(self.assignment)

    def stats_dict(self) -> dict:
        return asdict(self.stats)


def relative_gap(incumbent: float, bound: float) -> float:
    return abs(incumbent - bound) / max(1e-9, abs(incumbent))

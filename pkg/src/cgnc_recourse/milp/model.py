"""Solver-agnostic MILP intermediate representation."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

CONTINUOUS = "continuous"
BINARY = "binary"
SENSES = ("<=", "=", ">=")


class MilpError(ValueError):
    pass


@dataclass(frozen=True)
class Variable:
    name: str
    kind: str = CONTINUOUS
    lower: float = 0.0
    upper: float = 1.0


@dataclass(frozen=True)
class LinearConstraint:
    coeffs: Mapping[str, float]
    sense: str
    rhs: float
    name: str = ""

    def activity(self, values: Mapping[str, float]) -> float:
        return sum(a * values[v] for v, a in self.coeffs.items())

    def violation(self, values: Mapping[str, float]) -> float:
        lhs = self.activity(values)
        if self.sense == "<=":
            return max(0.0, lhs - self.rhs)
        if self.sense == ">=":
            return max(0.0, self.rhs - lhs)
        return abs(lhs - self.rhs)


@dataclass(frozen=True)
class Objective:
    sense: str = "min"
    coeffs: Mapping[str, float] = field(default_factory=dict)
    constant: float = 0.0

    def value(self, values: Mapping[str, float]) -> float:
        return self.constant + sum(a * values[v] for v, a in self.coeffs.items())


@dataclass(frozen=True)
class SegmentGroup:
    """Indicators ``lam[r]`` (exactly one is 1) placing ``var`` in ``[breaks[r], breaks[r+1]]``.

    Pure metadata: the rows enforcing it live in the model. Solvers may use
    it to branch on whole ranges of segments instead of single binaries.
    """

    var: str
    indicators: tuple[str, ...]
    breakpoints: tuple[float, ...]


@dataclass(frozen=True)
class DenseForm:
    """Arrays over the variable order of the model: min/max c x + c0 with row blocks."""

    c: np.ndarray
    constant: float
    maximize: bool
    A_ub: np.ndarray
    b_ub: np.ndarray
    A_eq: np.ndarray
    b_eq: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    integer: np.ndarray


class MilpModel:
    def __init__(self, variables, constraints, objective: Objective, groups=()):
        self.variables: tuple[Variable, ...] = tuple(variables)
        self.constraints: tuple[LinearConstraint, ...] = tuple(constraints)
        self.objective = objective
        self.groups: tuple[SegmentGroup, ...] = tuple(groups)
        self.index = {v.name: k for k, v in enumerate(self.variables)}
        self._validate()

    def _validate(self):
        if len(self.index) != len(self.variables):
            raise MilpError("duplicate variable names")
        for v in self.variables:
            if v.kind == BINARY and (v.lower, v.upper) != (0.0, 1.0):
                if not (0.0 <= v.lower <= v.upper <= 1.0):
                    raise MilpError(f"binary {v.name} must have bounds within [0, 1]")
            elif v.kind not in (BINARY, CONTINUOUS):
                raise MilpError(f"unknown kind {v.kind!r}")
            if not (math.isfinite(v.lower) and math.isfinite(v.upper)):
                raise MilpError(f"variable {v.name} needs finite bounds")
            if v.lower > v.upper:
                raise MilpError(f"variable {v.name} has empty bounds [{v.lower}, {v.upper}]")
        for con in self.constraints:
            if con.sense not in SENSES:
                raise MilpError(f"bad sense {con.sense!r}")
            for name in con.coeffs:
                if name not in self.index:
                    raise MilpError(f"constraint {con.name!r} references unknown variable {name!r}")
        if self.objective.sense not in ("min", "max"):
            raise MilpError("objective sense must be 'min' or 'max'")
        for name in self.objective.coeffs:
            if name not in self.index:
                raise MilpError(f"objective references unknown variable {name!r}")
        for g in self.groups:
            if len(g.breakpoints) != len(g.indicators) + 1:
                raise MilpError(f"segment group on {g.var!r} has mismatched breakpoints")
            for name in (g.var, *g.indicators):
                if name not in self.index:
                    raise MilpError(f"segment group references unknown variable {name!r}")

    @property
    def n_vars(self) -> int:
        return len(self.variables)

    @property
    def n_binaries(self) -> int:
        return sum(v.kind == BINARY for v in self.variables)

    def with_bounds(self, overrides: Mapping[str, tuple[float, float]]) -> "MilpModel":
        vs = [
            Variable(v.name, v.kind, *overrides[v.name]) if v.name in overrides else v
            for v in self.variables
        ]
        return MilpModel(vs, self.constraints, self.objective, self.groups)

    def to_dense(self) -> DenseForm:
        N = self.n_vars
        ub_rows, ub_rhs, eq_rows, eq_rhs = [], [], [], []
        for con in self.constraints:
            row = np.zeros(N)
            for name, a in con.coeffs.items():
                row[self.index[name]] += a
            if con.sense == "<=":
                ub_rows.append(row)
                ub_rhs.append(con.rhs)
            elif con.sense == ">=":
                ub_rows.append(-row)
                ub_rhs.append(-con.rhs)
            else:
                eq_rows.append(row)
                eq_rhs.append(con.rhs)
        c = np.zeros(N)
        for name, a in self.objective.coeffs.items():
            c[self.index[name]] += a
        return DenseForm(
            c=c,
            constant=float(self.objective.constant),
            maximize=self.objective.sense == "max",
            A_ub=np.array(ub_rows).reshape(-1, N),
            b_ub=np.array(ub_rhs, dtype=float),
            A_eq=np.array(eq_rows).reshape(-1, N),
            b_eq=np.array(eq_rhs, dtype=float),
            lower=np.array([v.lower for v in self.variables]),
            upper=np.array([v.upper for v in self.variables]),
            integer=np.array([v.kind == BINARY for v in self.variables]),
        )

    def evaluate(self, values: Mapping[str, float]) -> float:
        return self.objective.value(values)

    def max_violation(self, values: Mapping[str, float]) -> float:
        """Largest violation over rows, bounds and integrality."""
        worst = 0.0
        for v in self.variables:
            x = values[v.name]
            worst = max(worst, v.lower - x, x - v.upper)
            if v.kind == BINARY:
                worst = max(worst, abs(x - round(x)))
        for con in self.constraints:
            worst = max(worst, con.violation(values))
        return worst


class MilpBuilder:
    def __init__(self):
        self._vars: dict[str, Variable] = {}
        self._cons: list[LinearConstraint] = []
        self._obj = Objective()
        self._groups: list[SegmentGroup] = []

    def add_var(self, name: str, lower: float, upper: float, kind: str = CONTINUOUS) -> str:
        if name in self._vars:
            raise MilpError(f"variable {name!r} declared twice")
        if kind == BINARY:
            lower, upper = 0.0, 1.0
        self._vars[name] = Variable(name, kind, float(lower), float(upper))
        return name

    def has_var(self, name: str) -> bool:
        return name in self._vars

    def bounds(self, name: str) -> tuple[float, float]:
        v = self._vars[name]
        return v.lower, v.upper

    def add_constraint(self, coeffs: Mapping[str, float], sense: str, rhs: float, name: str = "") -> None:
        merged: dict[str, float] = {}
        for k, a in coeffs.items():
            merged[k] = merged.get(k, 0.0) + float(a)
        merged = {k: a for k, a in merged.items() if a != 0.0}
        self._cons.append(LinearConstraint(merged, sense, float(rhs), name))

    def set_objective(self, sense: str, coeffs: Mapping[str, float], constant: float = 0.0) -> None:
        self._obj = Objective(sense, dict(coeffs), float(constant))

    def add_group(self, var: str, indicators, breakpoints) -> None:
        self._groups.append(SegmentGroup(var, tuple(indicators), tuple(float(v) for v in breakpoints)))

    def build(self) -> MilpModel:
        return MilpModel(self._vars.values(), self._cons, self._obj, self._groups)

"""Best-first branch-and-bound over the dense bounded simplex."""
from __future__ import annotations

import heapq
import itertools
import math
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..milp.model import MilpModel
from .result import (
    INFEASIBLE,
    ITERATION_LIMIT,
    OPTIMAL,
    UNBOUNDED,
    SolveResult,
    SolveStats,
    SolverError,
    relative_gap,
)
from .simplex import OPTIMAL as LP_OPTIMAL
from .simplex import UNBOUNDED as LP_UNBOUNDED
from .simplex import Basis, BoundedSimplex, LpResult

INT_TOL = 1e-6


@dataclass
class _Node:
    bound: float
    lo: np.ndarray
    hi: np.ndarray
    x: np.ndarray
    basis: Optional[Basis]


class _LpCore:
    """LP relaxation of a dense MILP in minimisation form."""

    def __init__(self, model: MilpModel):
        d = model.to_dense()
        self.sign = -1.0 if d.maximize else 1.0
        self.constant = d.constant
        self.integer = np.flatnonzero(d.integer)
        self.lower, self.upper = d.lower, d.upper
        A = np.vstack([d.A_ub, d.A_eq])
        row_lo = np.concatenate([np.full(d.b_ub.size, -np.inf), d.b_eq])
        row_hi = np.concatenate([d.b_ub, d.b_eq])
        self.simplex = BoundedSimplex(self.sign * d.c, A, row_lo, row_hi)
        self.iterations = 0
        idx = model.index
        self.groups = [
            (idx[g.var], np.array([idx[v] for v in g.indicators]), np.asarray(g.breakpoints))
            for g in model.groups
        ]
        self.group_of = {int(k): gi for gi, (_, ind, _) in enumerate(self.groups) for k in ind}

    def solve(self, lo, hi, basis=None) -> LpResult:
        res = self.simplex.solve(lo, hi, basis)
        self.iterations += res.iterations
        return res

    def reported(self, value: float) -> float:
        """Objective in the model's own sense, constant included."""
        return self.sign * value + self.constant


def _most_fractional(x: np.ndarray, integer: np.ndarray) -> int:
    if integer.size == 0:
        return -1
    f = x[integer] - np.floor(x[integer])
    score = np.minimum(f, 1.0 - f)
    k = int(np.argmax(score))
    return int(integer[k]) if score[k] > INT_TOL else -1


def _branches(core: _LpCore, node: _Node, j: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Child bound pairs for branching on binary ``j``.

    A binary inside a segment group splits the group's still-open segments
    into a lower and an upper run, fixing the other run's indicators to 0
    and cutting the partitioned variable's range at the shared breakpoint.
    Any other binary is fixed to 0 and to 1.
    """
    gi = core.group_of.get(j)
    if gi is not None:
        var, ind, breaks = core.groups[gi]
        open_ = np.flatnonzero(node.hi[ind] > 0.5)
        if open_.size >= 2:
            mass = np.cumsum(np.clip(node.x[ind[open_]], 0.0, 1.0))
            split = int(np.clip(np.searchsorted(mass, 0.5 * mass[-1]) + 1, 1, open_.size - 1))
            left, right = open_[:split], open_[split:]
            lo_a, hi_a = node.lo.copy(), node.hi.copy()
            hi_a[ind[right]] = 0.0
            hi_a[var] = min(hi_a[var], breaks[left[-1] + 1])
            lo_b, hi_b = node.lo.copy(), node.hi.copy()
            hi_b[ind[left]] = 0.0
            lo_b[var] = max(lo_b[var], breaks[right[0]])
            return [(lo_a, hi_a), (lo_b, hi_b)]
    out = []
    for side in (0.0, 1.0):
        lo, hi = node.lo.copy(), node.hi.copy()
        lo[j] = hi[j] = side
        out.append((lo, hi))
    return out


def solve_milp(
    m: MilpModel,
    gap_tol: float = 0.01,
    node_limit: int = 200_000,
    time_limit: float = 3600.0,
    abs_gap: float = 1e-7,
) -> SolveResult:
    """Solve ``m`` to a relative gap of ``gap_tol`` (or an absolute gap of ``abs_gap``).

    Nodes are explored best-bound first with ties broken by creation order,
    so the search is deterministic. Children re-use their parent's basis.
    """
    start = time.perf_counter()
    core = _LpCore(m)
    names = [v.name for v in m.variables]
    stats = SolveStats()

    def finish(status, inc_x, inc_val, bound):
        stats.simplex_iterations = core.iterations
        stats.wall_time = time.perf_counter() - start
        if inc_x is None:
            return SolveResult(status, math.nan, {}, math.inf, None if bound is None else core.reported(bound), stats)
        obj = core.reported(inc_val)
        bnd = obj if bound is None else core.reported(bound)
        return SolveResult(status, obj, dict(zip(names, inc_x.tolist())), relative_gap(obj, bnd), bnd, stats)

    root = core.solve(core.lower, core.upper)
    stats.nodes = 1
    if root.status == LP_UNBOUNDED:
        return finish(UNBOUNDED, None, math.inf, None)
    if root.status != LP_OPTIMAL:
        if root.status == INFEASIBLE:
            return finish(INFEASIBLE, None, math.inf, None)
        raise SolverError(f"root LP failed: {root.status}")

    counter = itertools.count()
    heap: list = []
    inc_x: Optional[np.ndarray] = None
    inc_val = math.inf

    def converged(lb: float) -> bool:
        if inc_x is None:
            return False
        obj, bnd = core.reported(inc_val), core.reported(lb)
        return abs(obj - bnd) <= abs_gap or relative_gap(obj, bnd) <= gap_tol

    dive: Optional[_Node] = _Node(root.objective, core.lower.copy(), core.upper.copy(), root.x, root.basis)
    while heap or dive is not None:
        lb = min(heap[0][0] if heap else math.inf, dive.bound if dive is not None else math.inf)
        if converged(lb):
            return finish(OPTIMAL, inc_x, inc_val, min(lb, inc_val))
        if stats.nodes >= node_limit or time.perf_counter() - start > time_limit:
            return finish(ITERATION_LIMIT, inc_x, inc_val, lb)
        if dive is not None:
            node, dive = dive, None
        elif inc_x is None:
            # still no incumbent: resume depth-first from the newest open node
            k = max(range(len(heap)), key=lambda i: heap[i][1])
            node = heap[k][2]
            heap[k] = heap[-1]
            heap.pop()
            heapq.heapify(heap)
        else:
            _, _, node = heapq.heappop(heap)
        if node.bound >= inc_val:
            continue
        j = _most_fractional(node.x, core.integer)
        if j < 0:
            # integral: re-solve with binaries pinned so the reported point is exact
            lo, hi = node.lo.copy(), node.hi.copy()
            fixed = np.round(node.x[core.integer])
            lo[core.integer] = hi[core.integer] = fixed
            res = core.solve(lo, hi, node.basis)
            if res.status == LP_OPTIMAL and res.objective < inc_val:
                x = res.x.copy()
                x[core.integer] = fixed
                inc_x, inc_val = x, res.objective
            continue
        children = []
        for lo, hi in _branches(core, node, j):
            if np.any(lo > hi):
                continue
            res = core.solve(lo, hi, node.basis)
            stats.nodes += 1
            if res.status == LP_OPTIMAL and res.objective < inc_val:
                children.append(_Node(res.objective, lo, hi, res.x, res.basis))
        if inc_x is None and children:
            # no incumbent yet: keep diving into the better child
            children.sort(key=lambda c: c.bound)
            dive = children.pop(0)
        for child in children:
            heapq.heappush(heap, (child.bound, next(counter), child))
    if inc_x is None:
        return finish(INFEASIBLE, None, math.inf, None)
    return finish(OPTIMAL, inc_x, inc_val, inc_val)

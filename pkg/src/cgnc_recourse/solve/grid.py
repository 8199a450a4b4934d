"""Exhaustive grid search, used only to cross-check the other backends on tiny instances.

A resolution of ``r`` places ``r`` equally spaced points on each axis,
end points included. Going from ``r`` to ``2r - 1`` halves every spacing
and keeps all old points, so such refinements never report a worse optimum.
"""
from __future__ import annotations

import math
import time
from typing import Sequence

import numpy as np

from ..cgnc import CgncModel, decision_h
from ..data import FeatureBounds
from ..metric import UncertaintySet, WhitenedMetric, coordinate_extent
from ..milp.relax import xname
from .result import FEASIBLE, INFEASIBLE, SolveResult, SolveStats

MAX_DIM = 4
CHUNK = 250_000


class GridError(ValueError):
    pass


def _axes(box: FeatureBounds, resolution: int) -> list[np.ndarray]:
    if resolution < 2:
        raise GridError("resolution must be >= 2")
    return [np.linspace(lo, hi, resolution) for lo, hi in zip(box.lower, box.upper)]


def _chunks(axes: list[np.ndarray]):
    n = len(axes)
    sizes = [a.size for a in axes]
    total = math.prod(sizes)
    for start in range(0, total, CHUNK):
        flat = np.arange(start, min(total, start + CHUNK))
        idx = np.unravel_index(flat, sizes)
        yield np.column_stack([axes[j][idx[j]] for j in range(n)])


def grid_points(box: FeatureBounds, resolution: int) -> np.ndarray:
    return np.vstack(list(_chunks(_axes(box, resolution))))


def _result(best, value, prefix, count, t0, found=True) -> SolveResult:
    stats = SolveStats(nodes=count, wall_time=time.perf_counter() - t0)
    if not found:
        return SolveResult(INFEASIBLE, math.nan, {}, math.nan, None, stats)
    assignment = {xname(j, prefix): float(v) for j, v in enumerate(best)}
    return SolveResult(FEASIBLE, float(value), assignment, math.nan, None, stats)


def grid_mp(
    model: CgncModel,
    metric: WhitenedMetric,
    factual,
    scenarios: Sequence,
    tau_prime: float,
    box: FeatureBounds,
    resolution: int,
) -> SolveResult:
    """Closest grid point of ``box`` satisfying ``H(x + delta) >= tau'`` for every scenario."""
    if box.lower.size > MAX_DIM:
        raise GridError(f"grid oracle limited to {MAX_DIM} dimensions")
    t0 = time.perf_counter()
    factual = np.asarray(factual, dtype=float)
    D = np.atleast_2d(np.asarray(scenarios, dtype=float))
    best, best_d, count = None, math.inf, 0
    for X in _chunks(_axes(box, resolution)):
        count += X.shape[0]
        ok = np.ones(X.shape[0], dtype=bool)
        for delta in D:
            ok &= np.atleast_1d(decision_h(model, X + delta)) >= tau_prime
        if not ok.any():
            continue
        d = metric.norm(X[ok] - factual)
        k = int(np.argmin(d))
        if d[k] < best_d:
            best, best_d = X[ok][k], float(d[k])
    return _result(best, best_d, "x", count, t0, best is not None)


def grid_ap(model: CgncModel, uset: UncertaintySet, x_hat, tau_prime: float, resolution: int) -> SolveResult:
    """Largest ``tau' - H(x_hat + delta)`` over grid points of the set's bounding box lying in the set."""
    box = coordinate_extent(uset)
    if box.lower.size > MAX_DIM:
        raise GridError(f"grid oracle limited to {MAX_DIM} dimensions")
    t0 = time.perf_counter()
    x_hat = np.asarray(x_hat, dtype=float)
    best, best_v, count = None, -math.inf, 0
    for X in _chunks(_axes(box, resolution)):
        count += X.shape[0]
        X = X[uset.contains(X, tol=1e-12)]
        if not X.shape[0]:
            continue
        v = tau_prime - np.atleast_1d(decision_h(model, x_hat + X))
        k = int(np.argmax(v))
        if v[k] > best_v:
            best, best_v = X[k], float(v[k])
    return _result(best, best_v, "delta", count, t0, best is not None)


def solve_grid_oracle(problem: str, model: CgncModel, *args, **kwargs) -> SolveResult:
    """Dispatch to :func:`grid_mp` (``"mp"``) or :func:`grid_ap` (``"ap"``)."""
    if problem == "mp":
        return grid_mp(model, *args, **kwargs)
    if problem == "ap":
        return grid_ap(model, *args, **kwargs)
    raise ValueError(f"unknown problem {problem!r}")

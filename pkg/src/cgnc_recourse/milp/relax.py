"""Piecewise McCormick MILP relaxations of the master and adversarial problems."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

from ..cgnc import CgncModel
from ..data import FeatureBounds
from ..expansion import ExpandedForm, decision_polynomial
from ..metric import UncertaintySet, WhitenedMetric, coordinate_extent, norm_ball_constraints, norm_rows, parse_p
from .model import BINARY, MilpBuilder, MilpError, MilpModel


GLOBAL_ENVELOPE = True


def xname(j: int, prefix: str = "x") -> str:
    return f"{prefix}[{j}]"


def pname(j: int, k: int, prefix: str = "z") -> str:
    return f"{prefix}[{j},{k}]"


def lname(j: int, r: int, prefix: str = "lam") -> str:
    return f"{prefix}[{j},{r}]"


@dataclass(frozen=True)
class PartitionScheme:
    breakpoints: tuple[np.ndarray, ...]
    m: int

    @classmethod
    def uniform(cls, bounds: FeatureBounds, m: int) -> "PartitionScheme":
        if m < 1:
            raise MilpError("partition count must be >= 1")
        pts = []
        for lo, hi in zip(bounds.lower, bounds.upper):
            br = lo + np.arange(m + 1) / m * (hi - lo)
            br[0], br[-1] = lo, hi
            pts.append(br)
        return cls(tuple(pts), m)


def _ceil_exact(nu: float, power: int, m_init: int) -> int:
    return max(1, math.ceil(Fraction(repr(nu)) ** power * m_init))


@dataclass(frozen=True)
class TighteningState:
    t: int
    nu: float
    initial_bounds: FeatureBounds
    current_bounds: FeatureBounds
    m_init: int
    m_t: int

    @classmethod
    def initial(cls, bounds: FeatureBounds, m_init: int = 20, nu: float = 0.5) -> "TighteningState":
        if not 0.0 < nu < 1.0:
            raise MilpError(f"contraction factor must lie in (0, 1), got {nu}")
        if m_init < 1:
            raise MilpError("m_init must be >= 1")
        return cls(1, nu, bounds, bounds, m_init, m_init)


def tighten(state: TighteningState, x_prev) -> TighteningState:
    """Contract the box toward the previous iterate and shrink the partition count.

    Bounds for iteration t+1 are ``nu^t * init + (1 - nu^t) * x_prev``
    coordinatewise; ``m = ceil(nu^t * m_init)``.
    """
    x_prev = np.asarray(x_prev, dtype=float)
    t = state.t
    frac = state.nu**t
    lo0, hi0 = state.initial_bounds.lower, state.initial_bounds.upper
    lower = frac * lo0 + (1.0 - frac) * x_prev
    upper = frac * hi0 + (1.0 - frac) * x_prev
    # x_prev always stays inside; guard only against rounding collapsing the box
    lower = np.minimum(lower, x_prev)
    upper = np.maximum(upper, x_prev)
    flat = upper <= lower
    if np.any(flat):
        upper[flat] = np.nextafter(lower[flat], np.inf)
    return replace(
        state,
        t=t + 1,
        current_bounds=FeatureBounds(lower, upper),
        m_t=_ceil_exact(state.nu, t, state.m_init),
    )


def product_range(lo_j: float, hi_j: float, lo_k: float, hi_k: float, same: bool) -> tuple[float, float]:
    if same:
        sq = (lo_j * lo_j, hi_j * hi_j)
        lo = 0.0 if lo_j <= 0.0 <= hi_j else min(sq)
        return lo, max(sq)
    corners = (lo_j * lo_k, lo_j * hi_k, hi_j * lo_k, hi_j * hi_k)
    return min(corners), max(corners)


def _row_max(b: MilpBuilder, coeffs: Mapping[str, float]) -> float:
    total = 0.0
    for name, a in coeffs.items():
        lo, hi = b.bounds(name)
        total += max(a * lo, a * hi)
    return total


def _merge(*terms: tuple[str, float]) -> dict[str, float]:
    out: dict[str, float] = {}
    for name, a in terms:
        out[name] = out.get(name, 0.0) + a
    return {k: a for k, a in out.items() if a != 0.0}


def _guarded(b: MilpBuilder, coeffs: dict[str, float], rhs: float, lam, name: str) -> None:
    """Add ``coeffs . v <= rhs``, switched off by ``lam = 0`` through the tightest big-M."""
    if lam is None:
        b.add_constraint(coeffs, "<=", rhs, name)
        return
    M = max(0.0, _row_max(b, coeffs) - rhs)
    if M == 0.0:
        b.add_constraint(coeffs, "<=", rhs, name)
        return
    b.add_constraint({**coeffs, lam: M}, "<=", rhs + M, name)


def add_segment_indicators(b: MilpBuilder, j: int, m: int, var: str, breaks: np.ndarray, prefix: str) -> list:
    """Binary per segment, exactly one active, plus guarded segment membership rows."""
    if m == 1:
        return [None]
    lams = [b.add_var(lname(j, r, prefix), 0.0, 1.0, BINARY) for r in range(m)]
    b.add_constraint({lam: 1.0 for lam in lams}, "=", 1.0, f"{prefix}_one[{j}]")
    b.add_group(var, lams, breaks)
    lo, hi = b.bounds(var)
    for r, lam in enumerate(lams):
        if breaks[r] > lo:
            _guarded(b, {var: -1.0}, -breaks[r], lam, f"seg_lo[{j},{r}]")
        if breaks[r + 1] < hi:
            _guarded(b, {var: 1.0}, breaks[r + 1], lam, f"seg_hi[{j},{r}]")
    return lams


def mccormick_block(
    b: MilpBuilder,
    var_j: str,
    var_k: str,
    z: str,
    breaks_j: Sequence[float],
    bounds_k: tuple[float, float],
    lambdas_j: Sequence,
    tag: str = "",
) -> None:
    """Segmentwise McCormick envelope of ``z = var_j * var_k``, partitioned on ``var_j``.

    ``var_k`` keeps its global range ``bounds_k``; each segment's four
    planes are switched on by its indicator (``None`` means always on).
    """
    lk0, lk1 = bounds_k
    if not all(math.isfinite(v) for v in (*breaks_j, lk0, lk1)):
        raise MilpError("McCormick envelopes need finite bounds")
    for r, lam in enumerate(lambdas_j):
        a, c = breaks_j[r], breaks_j[r + 1]
        # z >= xj*lk0 + a*xk - a*lk0
        _guarded(b, _merge((var_j, lk0), (var_k, a), (z, -1.0)), a * lk0, lam, f"mc_lo1{tag}[{r}]")
        # z >= xj*lk1 + c*xk - c*lk1
        _guarded(b, _merge((var_j, lk1), (var_k, c), (z, -1.0)), c * lk1, lam, f"mc_lo2{tag}[{r}]")
        # z <= xj*lk1 + a*xk - a*lk1
        _guarded(b, _merge((z, 1.0), (var_j, -lk1), (var_k, -a)), -a * lk1, lam, f"mc_up1{tag}[{r}]")
        # z <= xj*lk0 + c*xk - c*lk0
        _guarded(b, _merge((z, 1.0), (var_j, -lk0), (var_k, -c)), -c * lk0, lam, f"mc_up2{tag}[{r}]")


def _relaxation_skeleton(
    b: MilpBuilder,
    form: ExpandedForm,
    bounds: FeatureBounds,
    m: int,
    var_prefix: str,
    pair_prefix: str,
    lam_prefix: str,
    double_partition: bool,
) -> None:
    n = form.n
    for j in range(n):
        b.add_var(xname(j, var_prefix), bounds.lower[j], bounds.upper[j])
    for j, k in form.pairs:
        lo, hi = product_range(bounds.lower[j], bounds.upper[j], bounds.lower[k], bounds.upper[k], j == k)
        b.add_var(pname(j, k, pair_prefix), lo, hi)
    scheme = PartitionScheme.uniform(bounds, m)
    lams = [
        add_segment_indicators(b, j, m, xname(j, var_prefix), scheme.breakpoints[j], lam_prefix)
        for j in range(n)
    ]
    for j, k in form.pairs:
        z = pname(j, k, pair_prefix)
        if m > 1 and GLOBAL_ENVELOPE:
            mccormick_block(
                b, xname(j, var_prefix), xname(k, var_prefix), z,
                (bounds.lower[j], bounds.upper[j]), (bounds.lower[k], bounds.upper[k]), [None],
                tag=f"[{j},{k}]g",
            )
        mccormick_block(
            b, xname(j, var_prefix), xname(k, var_prefix), z, scheme.breakpoints[j],
            (bounds.lower[k], bounds.upper[k]), lams[j], tag=f"[{j},{k}]",
        )
        if double_partition and j != k:
            mccormick_block(
                b, xname(k, var_prefix), xname(j, var_prefix), z, scheme.breakpoints[k],
                (bounds.lower[j], bounds.upper[j]), lams[k], tag=f"[{k},{j}]",
            )


def _poly_row(poly, var_prefix: str, pair_prefix: str) -> dict[str, float]:
    coeffs = {xname(j, var_prefix): float(a) for j, a in enumerate(poly.lin) if a != 0.0}
    for (j, k), q in poly.quad.items():
        if q != 0.0:
            coeffs[pname(j, k, pair_prefix)] = float(q)
    return coeffs


def _abs_row_range(W: np.ndarray, bounds: FeatureBounds, center: np.ndarray) -> np.ndarray:
    lo = W * (bounds.lower - center)
    hi = W * (bounds.upper - center)
    top = np.maximum(lo, hi).sum(axis=1)
    bot = np.minimum(lo, hi).sum(axis=1)
    return np.maximum(np.abs(top), np.abs(bot))


def build_mp(
    model: CgncModel,
    form: ExpandedForm,
    metric: WhitenedMetric,
    factual,
    scenarios: Sequence,
    tightening,
    tau_prime: float,
    double_partition: bool = False,
) -> MilpModel:
    """Relaxed master problem: min distance s.t. one linearised H-row per scenario."""
    if not len(scenarios):
        raise MilpError("scenario set must not be empty")
    p = parse_p(metric.p)
    if p == 2.0:
        raise MilpError("quadratic set unsupported in MILP path")
    factual = np.asarray(factual, dtype=float)
    bounds = tightening.current_bounds
    b = MilpBuilder()
    _relaxation_skeleton(b, form, bounds, tightening.m_t, "x", "z", "lam", double_partition)

    W = metric.whitener
    spread = _abs_row_range(W, bounds, factual)
    xs = [xname(j) for j in range(model.n)]
    if math.isinf(p):
        b.add_var("t", 0.0, float(spread.max()))
        _, rows = norm_rows(W, p, xs, factual, "t", "dist")
        objective = {"t": 1.0}
    else:
        aux, rows = norm_rows(W, p, xs, factual, math.inf, "s", aux_upper=spread)
        for v in aux:
            b.add_var(v.name, v.lower, v.upper)
        rows = [r for r in rows if not r.name.endswith("_sum")]
        objective = {v.name: 1.0 for v in aux}
    for r in rows:
        b.add_constraint(r.coeffs, r.sense, r.rhs, r.name)

    for s, delta in enumerate(scenarios):
        poly = decision_polynomial(model, form, delta)
        b.add_constraint(_poly_row(poly, "x", "z"), ">=", tau_prime - poly.const, f"robust[{s}]")
    b.set_objective("min", objective)
    return b.build()


def build_ap(
    model: CgncModel,
    form: ExpandedForm,
    uset: UncertaintySet,
    x_hat,
    m_fixed: int,
    tau_prime: float,
    double_partition: bool = False,
) -> MilpModel:
    """Relaxed adversarial problem: max ``tau' - H(x_hat + delta)`` over the uncertainty set."""
    if parse_p(uset.metric.p) == 2.0:
        raise MilpError("quadratic set unsupported in MILP path")
    b = MilpBuilder()
    box = coordinate_extent(uset)
    _relaxation_skeleton(b, form, box, m_fixed, "delta", "eta", "lam", double_partition)
    aux, rows = norm_ball_constraints(uset, [xname(j, "delta") for j in range(model.n)], "u")
    for v in aux:
        b.add_var(v.name, v.lower, v.upper)
    for r in rows:
        b.add_constraint(r.coeffs, r.sense, r.rhs, r.name)
    poly = decision_polynomial(model, form, x_hat)
    obj = {k: -a for k, a in _poly_row(poly, "delta", "eta").items()}
    b.set_objective("max", obj, tau_prime - poly.const)
    return b.build()


def extract_vector(values: Mapping[str, float], n: int, prefix: str) -> np.ndarray:
    return np.array([values[xname(j, prefix)] for j in range(n)])

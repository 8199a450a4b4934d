"""Mahalanobis-lp geometry from the class-0 covariance: whitening, distances, uncertainty sets."""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence, Union

import numpy as np
from scipy.linalg import solve_triangular

from .data import FeatureBounds
from .milp.model import LinearConstraint, Variable

SUPPORTED_P = (1.0, 2.0, math.inf)


class MetricError(ValueError):
    pass


def parse_p(p) -> float:
    if isinstance(p, str):
        p = p.strip().lower()
        p = math.inf if p in ("inf", "infinity", "oo") else float(p)
    p = float(p)
    if p not in SUPPORTED_P:
        raise MetricError(f"norm order must be one of 1, 2, inf; got {p}")
    return p


def dual_order(p: float) -> float:
    return {1.0: math.inf, 2.0: 2.0, math.inf: 1.0}[parse_p(p)]


def p_label(p: float) -> str:
    return "inf" if math.isinf(p) else str(int(p))


@dataclass(frozen=True, eq=False)
class WhitenedMetric:
    whitener: np.ndarray
    p: float

    def __post_init__(self):
        W = np.array(self.whitener, dtype=float)
        if W.ndim != 2 or W.shape[0] != W.shape[1]:
            raise MetricError("whitener must be square")
        if np.any(np.triu(W, 1) != 0.0) or np.any(np.diag(W) <= 0):
            raise MetricError("whitener must be lower triangular with positive diagonal")
        W.setflags(write=False)
        object.__setattr__(self, "whitener", W)
        object.__setattr__(self, "p", parse_p(self.p))

    @property
    def n(self) -> int:
        return self.whitener.shape[0]

    @cached_property
    def inverse(self) -> np.ndarray:
        Winv = solve_triangular(self.whitener, np.eye(self.n), lower=True)
        Winv.setflags(write=False)
        return Winv

    def whiten(self, v) -> np.ndarray:
        return np.asarray(v, dtype=float) @ self.whitener.T

    def unwhiten(self, u) -> np.ndarray:
        return np.asarray(u, dtype=float) @ self.inverse.T

    def norm(self, v) -> np.ndarray:
        return np.linalg.norm(self.whiten(v), ord=self.p, axis=-1)


def build_metric(sigma0, p: Union[float, str] = math.inf) -> WhitenedMetric:
    """Lower-triangular ``W`` with ``W^T W = inv(sigma0)``.

    ``W`` is the transpose of the upper factor of ``inv(sigma0) = U U^T``,
    obtained from an ordinary Cholesky factorization after reversing the
    variable order.
    """
    S = np.asarray(sigma0, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise MetricError("covariance must be a square matrix")
    if not np.allclose(S, S.T, rtol=1e-10, atol=1e-12):
        raise MetricError("covariance must be symmetric")
    try:
        Lc = np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        raise MetricError(
            f"covariance is not positive definite (smallest eigenvalue {np.linalg.eigvalsh(S).min():.3e})"
        ) from None
    n = S.shape[0]
    Linv = solve_triangular(Lc, np.eye(n), lower=True)
    prec = Linv.T @ Linv
    prec = 0.5 * (prec + prec.T)
    rev = prec[::-1, ::-1]
    R = np.linalg.cholesky(rev)
    W = R[::-1, ::-1].T
    W = np.tril(W)
    return WhitenedMetric(W, p)


def distance(metric: WhitenedMetric, x, x_ref) -> float:
    x = np.asarray(x, dtype=float)
    x_ref = np.asarray(x_ref, dtype=float)
    if x.shape != x_ref.shape:
        raise MetricError("points must have equal length")
    return float(metric.norm(x - x_ref))


@dataclass(frozen=True)
class UncertaintySet:
    metric: WhitenedMetric
    gamma: float

    def __post_init__(self):
        if not self.gamma > 0:
            raise MetricError(f"budget gamma must be positive, got {self.gamma}")

    def contains(self, delta, tol: float = 0.0):
        return self.metric.norm(delta) <= self.gamma + tol


def coordinate_extent(uset: UncertaintySet) -> FeatureBounds:
    """Projection of the uncertainty set onto each coordinate (symmetric about 0)."""
    Winv = uset.metric.inverse
    q = dual_order(uset.metric.p)
    half = uset.gamma * np.linalg.norm(Winv, ord=q, axis=1)
    return FeatureBounds(-half, half)


def extent_maximizer(uset: UncertaintySet, j: int) -> np.ndarray:
    """A member of the set attaining the largest value of coordinate ``j``."""
    row = uset.metric.inverse[j]
    p, g = uset.metric.p, uset.gamma
    if math.isinf(p):
        u = g * np.sign(row)
    elif p == 2.0:
        u = g * row / np.linalg.norm(row)
    else:
        u = np.zeros_like(row)
        k = int(np.argmax(np.abs(row)))
        u[k] = g * np.sign(row[k])
    return uset.metric.unwhiten(u)


def norm_rows(
    whitener: np.ndarray,
    p: float,
    var_names: Sequence[str],
    center,
    bound: Union[float, str],
    aux_prefix: str,
    aux_upper=None,
) -> tuple[list[Variable], list[LinearConstraint]]:
    """Linear rows for ``||W (v - center)||_p <= bound``, p in {1, inf}.

    ``bound`` is a constant or the name of an epigraph variable. For p=1
    one auxiliary ``aux_prefix[i] >= |(W (v - center))_i|`` per row is
    returned, bounded above by ``aux_upper[i]``.
    """
    p = parse_p(p)
    if p == 2.0:
        raise MetricError("quadratic set unsupported in MILP path")
    W = np.asarray(whitener, dtype=float)
    center = np.asarray(center, dtype=float)
    shift = W @ center
    n = W.shape[0]
    aux, rows = [], []
    bound_is_var = isinstance(bound, str)
    if math.isinf(p):
        for i in range(n):
            expr = {var_names[k]: W[i, k] for k in range(n) if W[i, k] != 0.0}
            for sgn in (1.0, -1.0):
                coeffs = {k: sgn * a for k, a in expr.items()}
                if bound_is_var:
                    coeffs[bound] = coeffs.get(bound, 0.0) - 1.0
                    rows.append(LinearConstraint(coeffs, "<=", sgn * shift[i], f"{aux_prefix}_inf[{i}]{'+-'[sgn < 0]}"))
                else:
                    rows.append(LinearConstraint(coeffs, "<=", float(bound) + sgn * shift[i], f"{aux_prefix}_inf[{i}]{'+-'[sgn < 0]}"))
        return aux, rows
    names = [f"{aux_prefix}[{i}]" for i in range(n)]
    for i in range(n):
        hi = math.inf if aux_upper is None else float(aux_upper[i])
        aux.append(Variable(names[i], lower=0.0, upper=hi))
        expr = {var_names[k]: W[i, k] for k in range(n) if W[i, k] != 0.0}
        for sgn in (1.0, -1.0):
            coeffs = {k: sgn * a for k, a in expr.items()}
            coeffs[names[i]] = -1.0
            rows.append(LinearConstraint(coeffs, "<=", sgn * shift[i], f"{aux_prefix}_abs[{i}]{'+-'[sgn < 0]}"))
    total = {nm: 1.0 for nm in names}
    if bound_is_var:
        total[bound] = -1.0
        rows.append(LinearConstraint(total, "<=", 0.0, f"{aux_prefix}_sum"))
    else:
        rows.append(LinearConstraint(total, "<=", float(bound), f"{aux_prefix}_sum"))
    return aux, rows


def norm_ball_constraints(
    uset: UncertaintySet, var_names: Sequence[str] | None = None, aux_prefix: str = "s"
) -> tuple[list[Variable], list[LinearConstraint]]:
    """Rows describing ``||W delta||_p <= gamma`` over variables ``delta[i]``.

    p=inf gives 2n rows. p=1 adds n auxiliaries ``s[i] >= |(W delta)_i|``
    and one budget row. p=2 is rejected.
    """
    n = uset.metric.n
    names = list(var_names) if var_names is not None else [f"delta[{i}]" for i in range(n)]
    return norm_rows(
        uset.metric.whitener, uset.metric.p, names, np.zeros(n), uset.gamma, aux_prefix,
        aux_upper=np.full(n, uset.gamma),
    )


def sample_ball(metric: WhitenedMetric, gamma: float, size: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform samples of the uncertainty set, drawn in whitened coordinates then mapped back."""
    n, p = metric.n, metric.p
    if math.isinf(p):
        u = rng.uniform(-gamma, gamma, size=(size, n))
    elif p == 2.0:
        g = rng.standard_normal((size, n))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        u = gamma * g * rng.random((size, 1)) ** (1.0 / n)
    else:
        e = rng.exponential(size=(size, n + 1))
        u = gamma * e[:, :n] / e.sum(axis=1, keepdims=True)
        u *= rng.choice((-1.0, 1.0), size=(size, n))
    return metric.unwhiten(u)

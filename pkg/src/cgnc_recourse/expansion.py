"""Quadratic structure of the decision function under additive perturbations.

Everything here works from the per-node affine deviation
``a_i^c . v - b_i^c``: index sets ``P_i+``, the bilinear pair set used by
the MILP relaxations, the expanded polynomial of ``H(v + fixed)``, the
gradient/Hessian of ``H`` and the Lipschitz bound behind finite
termination of the cutting-set loop.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .cgnc import CgncModel
from .data import FeatureBounds
from .metric import WhitenedMetric, dual_order, parse_p


@dataclass(frozen=True, eq=False)
class ExpandedForm:
    p_plus: tuple[tuple[int, ...], ...]
    pairs: tuple[tuple[int, int], ...]
    coeffs: np.ndarray  # (2, n, n): coeffs[c, i, j] = a_ij^c

    @property
    def n(self) -> int:
        return len(self.p_plus)


@dataclass(frozen=True)
class QuadraticPoly:
    """``const + lin . v + sum_{(j,k) in pairs} quad[(j,k)] v_j v_k``."""

    const: float
    lin: np.ndarray
    quad: dict

    def __call__(self, v) -> float:
        v = np.asarray(v, dtype=float)
        return float(
            self.const + self.lin @ v + sum(q * v[j] * v[k] for (j, k), q in self.quad.items())
        )


def build_expansion(model: CgncModel) -> ExpandedForm:
    p_plus = tuple(tuple(sorted({i, *ps})) for i, ps in enumerate(model.structure.parents))
    pairs = sorted({(j, k) for pp in p_plus for j in pp for k in pp if j <= k})
    return ExpandedForm(p_plus, tuple(pairs), np.array(model.A))


def xi(model: CgncModel, c: int, i: int, v) -> float:
    return float(model.A[c, i] @ np.asarray(v, dtype=float) - model.b[c, i])


@dataclass(frozen=True)
class DeviationTerm:
    """Expanded ``D_i^c(primal; fixed)`` restricted to ``P_i+``."""

    quad: dict  # (j, k) with j <= k -> coefficient of primal_j * primal_k
    lin: dict  # j -> coefficient of primal_j
    const: float

    def evaluate(self, primal) -> float:
        v = np.asarray(primal, dtype=float)
        return (
            self.const
            + sum(a * v[j] for j, a in self.lin.items())
            + sum(q * v[j] * v[k] for (j, k), q in self.quad.items())
        )


def deviation_expansion(model: CgncModel, form: ExpandedForm, c: int, i: int, fixed) -> DeviationTerm:
    a = form.coeffs[c, i]
    pp = form.p_plus[i]
    xi_f = xi(model, c, i, fixed)
    quad = {}
    for j in pp:
        for k in pp:
            key = (min(j, k), max(j, k))
            quad[key] = quad.get(key, 0.0) + a[j] * a[k]
    lin = {j: 2.0 * xi_f * a[j] for j in pp}
    return DeviationTerm(quad, lin, xi_f * xi_f)


def deviation_term(model: CgncModel, c: int, i: int, primal, fixed) -> float:
    v = np.asarray(primal, dtype=float) + np.asarray(fixed, dtype=float)
    d = model.A[c, i] @ v - model.b[c, i]
    return float(d * d)


def decision_polynomial(model: CgncModel, form: ExpandedForm, fixed) -> QuadraticPoly:
    """Coefficients of ``H(v + fixed)`` as a polynomial in ``v``.

    Assembled node by node from the class-signed bracket
    ``(2c-1)[log rho_c - sum_i (log sigma_i|c + D_i^c / 2 sigma^2_i|c)]``,
    which is what the MP rows and the AP objective are built from.
    """
    n = model.n
    const = 0.0
    lin = np.zeros(n)
    quad: dict = {pair: 0.0 for pair in form.pairs}
    for c in (0, 1):
        sgn = 2 * c - 1
        const += sgn * model.log_priors[c]
        for i in range(n):
            var = model.variances[c, i]
            const -= sgn * 0.5 * math.log(var)
            term = deviation_expansion(model, form, c, i, fixed)
            scale = -sgn / (2.0 * var)
            const += scale * term.const
            for j, a in term.lin.items():
                lin[j] += scale * a
            for key, q in term.quad.items():
                quad[key] += scale * q
    return QuadraticPoly(float(const), lin, quad)


def expanded_violation(model: CgncModel, tau_prime: float, x, delta) -> float:
    """``tau' - H(x + delta)`` evaluated through the per-node D terms."""
    total = 0.0
    for c in (0, 1):
        inner = model.log_priors[c]
        for i in range(model.n):
            var = model.variances[c, i]
            inner -= 0.5 * math.log(var) + deviation_term(model, c, i, x, delta) / (2.0 * var)
        total += (2 * c - 1) * inner
    return tau_prime - total


def grad_h(model: CgncModel, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    g = np.zeros(model.n)
    for c, sgn in ((1, -1.0), (0, 1.0)):
        dev = (model.A[c] @ x - model.b[c]) / model.variances[c]
        g += sgn * (model.A[c].T @ dev)
    return g


def grad_h_batch(model: CgncModel, X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    G = np.zeros_like(X)
    for c, sgn in ((1, -1.0), (0, 1.0)):
        dev = (X @ model.A[c].T - model.b[c]) / model.variances[c]
        G += sgn * dev @ model.A[c]
    return G


def dc_split(model: CgncModel) -> tuple[np.ndarray, np.ndarray]:
    """``(Q0, Q1)`` with ``Q_c = sum_i a_i a_i^T / sigma^2``; the Hessian of H is ``Q0 - Q1``."""
    out = []
    for c in (0, 1):
        A = model.A[c]
        Q = (A.T / model.variances[c]) @ A
        Q = 0.5 * (Q + Q.T)
        if np.linalg.eigvalsh(Q).min() < -1e-10 * max(1.0, np.abs(Q).max()):
            raise ArithmeticError(f"class {c} curvature matrix is not PSD")
        out.append(Q)
    return out[0], out[1]


def hessian_h(model: CgncModel) -> np.ndarray:
    Q0, Q1 = dc_split(model)
    return Q0 - Q1


def lipschitz_constant(
    model: CgncModel, R: float, p=math.inf, whitener: Optional[np.ndarray] = None
) -> float:
    """Upper bound ``G`` on the dual norm of the gradient of ``H`` over ``||x|| <= R``.

    With a whitener ``W`` the primal norm is ``||W x||_p`` and every
    ``a_i^c`` is measured as ``||W^-T a_i^c||_q`` (q dual to p).
    """
    if not R > 0:
        raise ValueError(f"radius must be positive, got {R}")
    q = dual_order(parse_p(p))
    G = 0.0
    for c in (0, 1):
        A = model.A[c]
        if whitener is not None:
            # rows of A W^-1 are (W^-T a_i)^T
            A = np.linalg.solve(np.asarray(whitener).T, A.T).T
        norms = np.linalg.norm(A, ord=q, axis=1)
        G += float(np.sum((norms * R + np.abs(model.b[c])) / model.variances[c] * norms))
    return G


def domain_radius(box: FeatureBounds, metric: Optional[WhitenedMetric] = None, p=math.inf) -> float:
    """Radius ``R`` of the smallest norm ball about the origin containing ``box``.

    The norm is convex, so the maximum sits at a box vertex; vertices are
    enumerated up to 16 dimensions, beyond that a coordinatewise bound is used.
    """
    W = np.eye(box.lower.size) if metric is None else metric.whitener
    p = parse_p(p if metric is None else metric.p)
    n = box.lower.size
    if n <= 16:
        verts = np.array(list(itertools.product(*zip(box.lower, box.upper))))
        return float(np.max(np.linalg.norm(verts @ W.T, ord=p, axis=1)))
    mag = np.maximum(np.abs(box.lower), np.abs(box.upper))
    return float(np.linalg.norm(np.abs(W) @ mag, ord=p))


def iteration_bound(R: float, G: float, eps: float, n: int) -> tuple[float, float]:
    """``(RG/eps)^n`` and its natural log; the value saturates to ``inf`` on overflow."""
    if min(R, G, eps) <= 0 or n < 1:
        raise ValueError("R, G and eps must be positive and n >= 1")
    log_t = n * math.log(R * G / eps)
    value = math.exp(log_t) if log_t < 709.0 else math.inf
    if n <= 64:
        try:
            value = (R * G / eps) ** n
        except OverflowError:
            value = math.inf
    return value, log_t

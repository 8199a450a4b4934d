"""Multi-start local search on the original (unrelaxed) master and adversarial problems.

Nothing here claims global optimality: every result carries status
``feasible`` (or ``infeasible`` when no start satisfies the constraints).
"""
from __future__ import annotations

import math
import time
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import minimize

from ..cgnc import CgncModel, decision_h
from ..data import FeatureBounds
from ..expansion import grad_h_batch, hessian_h
from ..metric import UncertaintySet, WhitenedMetric, parse_p, sample_ball
from ..milp.relax import xname
from .result import FEASIBLE, INFEASIBLE, SolveResult, SolveStats

RHO_SCHEDULE = (1e1, 1e2, 1e3, 1e4, 1e5, 1e6)
FEAS_TOL = 1e-9


def project_l1(u: np.ndarray, radius: float) -> np.ndarray:
    """Euclidean projection onto the l1 ball by sorted thresholding."""
    a = np.abs(u)
    if a.sum() <= radius:
        return u.copy()
    s = np.sort(a)[::-1]
    cs = np.cumsum(s)
    k = np.arange(1, s.size + 1)
    rho = np.nonzero(s * k > cs - radius)[0][-1]
    theta = (cs[rho] - radius) / (rho + 1.0)
    return np.sign(u) * np.maximum(a - theta, 0.0)


def project_ball(u, radius: float, p: float) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if math.isinf(p):
        return np.clip(u, -radius, radius)
    if p == 2.0:
        nrm = np.linalg.norm(u)
        return u if nrm <= radius else u * (radius / nrm)
    return project_l1(u, radius)


def _steepest_vertex(g: np.ndarray, radius: float, p: float) -> np.ndarray:
    """Maximiser of ``g . u`` over the ``radius`` ball."""
    if not np.any(g):
        return np.zeros_like(g)
    if math.isinf(p):
        return radius * np.sign(g)
    if p == 2.0:
        return radius * g / np.linalg.norm(g)
    u = np.zeros_like(g)
    k = int(np.argmax(np.abs(g)))
    u[k] = radius * np.sign(g[k])
    return u


def _assignment(v: np.ndarray, prefix: str) -> dict:
    return {xname(j, prefix): float(a) for j, a in enumerate(v)}


# ---------------------------------------------------------------- adversarial


def solve_local_ap(
    model: CgncModel,
    uset: UncertaintySet,
    x_hat,
    tau_prime: float,
    starts: int = 16,
    seed: int = 0,
    max_iter: int = 1000,
) -> SolveResult:
    """Projected gradient ascent of ``tau' - H(x_hat + delta)`` over the uncertainty set.

    Iterates live in whitened coordinates ``u = W delta`` where the set is
    a plain lp ball and the projection is exact.
    """
    t0 = time.perf_counter()
    metric, gamma, p = uset.metric, uset.gamma, uset.metric.p
    x_hat = np.asarray(x_hat, dtype=float)
    Winv = metric.inverse
    Hu = Winv.T @ hessian_h(model) @ Winv
    L = float(np.linalg.norm(Hu, 2))

    def value(u):
        return tau_prime - float(decision_h(model, x_hat + Winv @ u))

    def grad(u):
        return -(Winv.T @ grad_h_batch(model, x_hat + Winv @ u)[0])

    rng = np.random.default_rng(seed)
    g0 = grad(np.zeros(metric.n))
    inits = [np.zeros(metric.n), _steepest_vertex(g0, gamma, p)]
    if starts > 2:
        inits.extend(metric.whiten(sample_ball(metric, gamma, starts - 2, rng)))
    best_u, best_v, iters = None, -math.inf, 0
    for u in inits[: max(starts, 1)]:
        u = project_ball(u, gamma, p)
        for _ in range(max_iter):
            g = grad(u)
            step = 1.0 / L if L > 1e-12 else 10.0 * gamma / max(np.linalg.norm(g), 1e-300)
            u_new = project_ball(u + step * g, gamma, p)
            iters += 1
            if np.max(np.abs(u_new - u)) <= 1e-13 * max(1.0, gamma):
                u = u_new
                break
            u = u_new
        v = value(u)
        if v > best_v:
            best_u, best_v = u, v
    delta = Winv @ best_u
    stats = SolveStats(nodes=len(inits[: max(starts, 1)]), simplex_iterations=iters, wall_time=time.perf_counter() - t0)
    return SolveResult(FEASIBLE, best_v, _assignment(delta, "delta"), math.nan, None, stats)


# --------------------------------------------------------------------- master


class _MasterProblem:
    def __init__(self, model, metric, factual, scenarios, tau_prime, bounds):
        self.model = model
        self.W = metric.whitener
        self.p = metric.p
        self.xf = np.asarray(factual, dtype=float)
        self.D = np.atleast_2d(np.asarray(scenarios, dtype=float))
        self.tau = tau_prime
        self.lo, self.hi = bounds.lower, bounds.upper

    def dist(self, x) -> float:
        return float(np.linalg.norm(self.W @ (x - self.xf), ord=self.p))

    def dist_grad(self, x) -> np.ndarray:
        r = self.W @ (x - self.xf)
        if math.isinf(self.p):
            i = int(np.argmax(np.abs(r)))
            return np.sign(r[i]) * self.W[i]
        if self.p == 1.0:
            return np.sign(r) @ self.W
        nrm = np.linalg.norm(r)
        return (r @ self.W) / nrm if nrm > 0 else np.zeros_like(x)

    def slack(self, x) -> np.ndarray:
        """``H(x + delta_s) - tau'`` per scenario."""
        return np.atleast_1d(decision_h(self.model, x + self.D)) - self.tau

    def slack_jac(self, x) -> np.ndarray:
        return grad_h_batch(self.model, x + self.D)

    def penalty(self, x, rho) -> tuple[float, np.ndarray]:
        v = np.maximum(0.0, -self.slack(x))
        f = self.dist(x) + rho * float(v @ v)
        g = self.dist_grad(x) - 2.0 * rho * (v @ self.slack_jac(x))
        return f, g

    def clip(self, x):
        return np.clip(x, self.lo, self.hi)


def _penalty_descent(mp: _MasterProblem, x, iters_per_rho: int = 40) -> tuple[np.ndarray, int]:
    count = 0
    for rho in RHO_SCHEDULE:
        step = 1.0
        for _ in range(iters_per_rho):
            f, g = mp.penalty(x, rho)
            count += 1
            gn = float(g @ g)
            if gn == 0.0:
                break
            # backtracking on the projected step
            while step > 1e-14:
                x_new = mp.clip(x - step * g)
                if mp.penalty(x_new, rho)[0] <= f - 1e-4 * float(g @ (x - x_new)):
                    break
                step *= 0.5
            else:
                break
            if np.max(np.abs(x_new - x)) <= 1e-12:
                x = x_new
                break
            x, step = x_new, min(1.0, step * 2.0)
    return x, count


def _slsqp_polish(mp: _MasterProblem, x0, margin: float = 1e-9) -> np.ndarray:
    n = x0.size
    W, xf, p = mp.W, mp.xf, mp.p
    if p == 2.0:
        def obj(y):
            r = W @ (y - xf)
            return 0.5 * float(r @ r)

        def obj_grad(y):
            return (W @ (y - xf)) @ W

        cons = [
            {"type": "ineq", "fun": lambda y: mp.slack(y) - margin, "jac": lambda y: mp.slack_jac(y)},
        ]
        bnds = list(zip(mp.lo, mp.hi))
        y0 = x0
    else:
        k = 1 if math.isinf(p) else n
        r0 = np.abs(W @ (x0 - xf))
        aux0 = np.array([r0.max()]) if k == 1 else r0

        def obj(y):
            return float(np.sum(y[n:]))

        def obj_grad(y):
            g = np.zeros(n + k)
            g[n:] = 1.0
            return g

        E = np.ones((n, 1)) if k == 1 else np.eye(n)

        def norm_fun(y):
            r = W @ (y[:n] - xf)
            a = E @ y[n:]
            return np.concatenate([a - r, a + r])

        norm_jac = np.block([[-W, E], [W, E]])

        def h_fun(y):
            return mp.slack(y[:n]) - margin

        def h_jac(y):
            J = mp.slack_jac(y[:n])
            return np.hstack([J, np.zeros((J.shape[0], k))])

        cons = [
            {"type": "ineq", "fun": norm_fun, "jac": lambda y: norm_jac},
            {"type": "ineq", "fun": h_fun, "jac": h_jac},
        ]
        bnds = list(zip(mp.lo, mp.hi)) + [(0.0, None)] * k
        y0 = np.concatenate([x0, aux0])
    res = minimize(obj, y0, jac=obj_grad, bounds=bnds, constraints=cons, method="SLSQP",
                   options={"maxiter": 300, "ftol": 1e-13})
    return mp.clip(np.asarray(res.x[:n], dtype=float))


def solve_local_mp(
    model: CgncModel,
    metric: WhitenedMetric,
    factual,
    scenarios: Sequence,
    tau_prime: float,
    bounds: FeatureBounds,
    starts: int = 16,
    seed: int = 0,
    anchors: Sequence = (),
) -> SolveResult:
    """Minimise the distance to ``factual`` subject to every scenario row, over ``bounds``.

    Each start runs an increasing exact-penalty schedule with projected
    gradient steps and is then polished by SLSQP on the epigraph form.
    Starts are the anchors, the factual (clipped to the box) and seeded
    perturbations of it.
    """
    t0 = time.perf_counter()
    mp = _MasterProblem(model, metric, factual, scenarios, tau_prime, bounds)
    rng = np.random.default_rng(seed)
    inits = [mp.clip(np.asarray(a, dtype=float)) for a in anchors]
    inits.append(mp.clip(mp.xf))
    width = bounds.upper - bounds.lower
    while len(inits) < max(starts, len(anchors) + 1):
        inits.append(mp.clip(mp.xf + (rng.random(mp.xf.size) - 0.5) * width))
    best_x, best_d, best_viol = None, math.inf, math.inf
    fallback_x = None
    evals = 0
    for x0 in inits:
        x, c = _penalty_descent(mp, x0)
        evals += c
        x = _slsqp_polish(mp, x)
        viol = max(0.0, -float(mp.slack(x).min()))
        d = mp.dist(x)
        if viol <= FEAS_TOL:
            if d < best_d - 1e-12:
                best_x, best_d = x, d
        elif viol < best_viol:
            fallback_x, best_viol = x, viol
    stats = SolveStats(nodes=len(inits), simplex_iterations=evals, wall_time=time.perf_counter() - t0)
    if best_x is None:
        res = SolveResult(INFEASIBLE, math.nan, _assignment(fallback_x, "x"), math.nan, None, stats)
        res.info["best_violation"] = best_viol
        return res
    return SolveResult(FEASIBLE, best_d, _assignment(best_x, "x"), math.nan, None, stats)


def solve_local(problem: str, model: CgncModel, *args, **kwargs) -> SolveResult:
    """Dispatch to :func:`solve_local_mp` (``"mp"``) or :func:`solve_local_ap` (``"ap"``)."""
    if problem == "mp":
        return solve_local_mp(model, *args, **kwargs)
    if problem == "ap":
        return solve_local_ap(model, *args, **kwargs)
    raise ValueError(f"unknown problem {problem!r}")

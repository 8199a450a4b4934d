"""Dense bounded-variable primal simplex.

The LP ``min c.x  s.t.  row_lo <= A x <= row_hi,  lo <= x <= hi`` is
written as the homogeneous system ``A x - r = 0`` over structural
variables ``x`` and row activities ``r``. The compact tableau holds every
basic variable as a linear combination of the nonbasic ones, so it is
``m x n`` regardless of how many rows are slack. Phase one minimises the
sum of bound infeasibilities of the basic variables; phase two the true
objective. Pricing is Dantzig's rule, falling back to Bland's rule after
a run of degenerate pivots.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg.blas import dger

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
ITERATION_LIMIT = "iteration-limit"


@dataclass
class Basis:
    basic: np.ndarray  # variable ids, length m
    at_upper: np.ndarray  # bool per variable (meaningful for nonbasic ones)


@dataclass
class LpResult:
    status: str
    x: Optional[np.ndarray]
    objective: float
    iterations: int
    basis: Optional[Basis] = None
    max_violation: float = 0.0


class BoundedSimplex:
    def __init__(
        self,
        c,
        A,
        row_lo,
        row_hi,
        feas_tol: float = 1e-9,
        opt_tol: float = 1e-9,
        pivot_tol: float = 1e-9,
        max_iter: int = 50_000,
        bland_after: int = 30,
        refactor_every: int = 200,
    ):
        self.A = np.asarray(A, dtype=float)
        self.m, self.n = self.A.shape
        self.c = np.concatenate([np.asarray(c, dtype=float), np.zeros(self.m)])
        self.row_lo = np.asarray(row_lo, dtype=float)
        self.row_hi = np.asarray(row_hi, dtype=float)
        self.feas_tol = feas_tol
        self.opt_tol = opt_tol
        self.pivot_tol = pivot_tol
        self.max_iter = max_iter
        self.bland_after = bland_after
        self.refactor_every = refactor_every
        self.cache_size = 4
        self._cache: list = []

    # ------------------------------------------------------------------ setup
    def _tableau(self, basic: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Tableau for a given basis; returns (T, nonbasic ids)."""
        m, n = self.m, self.n
        is_basic = np.zeros(n + m, dtype=bool)
        is_basic[basic] = True
        nonbasic = np.flatnonzero(~is_basic)
        S = basic[basic < n]  # basic structurals
        R = nonbasic[nonbasic >= n] - n  # rows whose activity is nonbasic
        if S.size != R.size:
            raise ValueError("inconsistent basis")
        col = np.empty(n + m, dtype=int)
        col[nonbasic] = np.arange(nonbasic.size)
        # every structural as a combination of the nonbasic variables
        X = np.zeros((n, nonbasic.size))
        Nx = nonbasic[nonbasic < n]
        X[Nx, col[Nx]] = 1.0
        if S.size:
            # x_S = A_RS^-1 (r_R - A_R,Nx x_Nx)
            rhs = -(self.A[R] @ X)
            rhs[np.arange(R.size), col[n + R]] += 1.0
            X[S] = np.linalg.solve(self.A[np.ix_(R, S)], rhs)
        T = np.empty((m, nonbasic.size), order="F")
        sb = basic < n
        T[sb] = X[basic[sb]]
        if not sb.all():
            T[~sb] = self.A[basic[~sb] - n] @ X
        return T, nonbasic

    # ------------------------------------------------------------------ solve
    def solve(self, lo, hi, basis: Optional[Basis] = None) -> LpResult:
        n, m = self.n, self.m
        lo_all = np.concatenate([np.asarray(lo, dtype=float), self.row_lo])
        hi_all = np.concatenate([np.asarray(hi, dtype=float), self.row_hi])
        if np.any(lo_all > hi_all + self.feas_tol):
            return LpResult(INFEASIBLE, None, np.inf, 0)
        if basis is None:
            basic = np.arange(n, n + m)
            at_upper = np.zeros(n + m, dtype=bool)
        else:
            basic = basis.basic.copy()
            at_upper = basis.at_upper.copy()
        try:
            T, nonbasic = self._cached_tableau(basic)
        except (np.linalg.LinAlgError, ValueError):
            basic = np.arange(n, n + m)
            at_upper = np.zeros(n + m, dtype=bool)
            T, nonbasic = self._tableau(basic)

        val = np.zeros(n + m)
        self._place_nonbasic(val, nonbasic, at_upper, lo_all, hi_all)
        finite_mag = np.maximum(
            np.where(np.isfinite(lo_all), np.abs(lo_all), 0.0), np.where(np.isfinite(hi_all), np.abs(hi_all), 0.0)
        )
        tol_all = self.feas_tol * np.maximum(1.0, finite_mag)
        iters = 0
        since_refactor = 0
        degenerate_run = 0
        phase = 1
        last_obj = np.inf
        while True:
            vb = T @ val[nonbasic]
            val[basic] = vb
            lo_b, hi_b, tol_b = lo_all[basic], hi_all[basic], tol_all[basic]
            below = vb < lo_b - tol_b
            above = vb > hi_b + tol_b
            if phase == 1 and not (below.any() or above.any()):
                phase = 2
                last_obj = np.inf
                degenerate_run = 0
            if phase == 1:
                cb = above.astype(float) - below
                obj = float(np.sum((lo_b - vb)[below]) + np.sum((vb - hi_b)[above]))
                d = cb @ T
            else:
                obj = float(self.c @ val)
                d = self.c[nonbasic] + self.c[basic] @ T
            if iters >= self.max_iter:
                return LpResult(ITERATION_LIMIT, None, np.inf, iters)

            if obj < last_obj - 1e-12 * max(1.0, abs(obj)):
                degenerate_run = 0
            else:
                degenerate_run += 1
            last_obj = min(last_obj, obj)
            bland = degenerate_run >= self.bland_after

            lo_n, hi_n = lo_all[nonbasic], hi_all[nonbasic]
            up_nb = at_upper[nonbasic]
            movable = hi_n > lo_n
            up_ok = movable & ~up_nb & (d < -self.opt_tol)
            dn_ok = movable & up_nb & (d > self.opt_tol)
            cand = np.flatnonzero(up_ok | dn_ok)
            if cand.size == 0:
                if phase == 1:
                    return LpResult(INFEASIBLE, None, np.inf, iters)
                break
            if bland:
                k = cand[np.argmin(nonbasic[cand])]
            else:
                k = cand[np.argmax(np.abs(d[cand]))]
            rate = T[:, k] if up_ok[k] else -T[:, k]  # d(basic)/d(theta)

            theta = hi_n[k] - lo_n[k]
            leave = -1
            leave_to_upper = False
            nz = np.flatnonzero(np.abs(rate) > self.pivot_tol)
            if nz.size:
                rz, vz = rate[nz], vb[nz]
                inc = rz > 0
                bz, az = below[nz], above[nz]
                if phase == 1:
                    # infeasible entries block where they reach their violated bound
                    target = np.where(inc, np.where(bz, lo_b[nz], hi_b[nz]), np.where(az, hi_b[nz], lo_b[nz]))
                    to_upper = np.where(inc, ~bz, az)
                    free = (inc & az) | (~inc & bz)
                else:
                    target = np.where(inc, hi_b[nz], lo_b[nz])
                    to_upper = inc
                    free = None
                with np.errstate(invalid="ignore"):
                    lim = (target - vz) / rz
                lim = np.where(np.isnan(lim), np.inf, np.maximum(lim, 0.0))
                if free is not None:
                    lim[free] = np.inf
                best = lim.min()
                if best < theta:
                    ties = np.flatnonzero(lim <= best + 1e-12 * max(1.0, best))
                    if bland:
                        t = ties[np.argmin(basic[nz[ties]])]
                    else:
                        t = ties[np.argmax(np.abs(rz[ties]))]
                    theta = lim[t]
                    leave = int(nz[t])
                    leave_to_upper = bool(to_upper[t])
            if not np.isfinite(theta):
                if phase == 2:
                    return LpResult(UNBOUNDED, None, -np.inf, iters)
                return LpResult(INFEASIBLE, None, np.inf, iters)
            iters += 1
            ent = nonbasic[k]
            if leave < 0:
                at_upper[ent] = not at_upper[ent]
                val[ent] = hi_all[ent] if at_upper[ent] else lo_all[ent]
                continue
            lv = basic[leave]
            self._pivot(T, leave, k)
            basic[leave], nonbasic[k] = ent, lv
            at_upper[lv] = leave_to_upper
            val[lv] = hi_all[lv] if leave_to_upper else lo_all[lv]
            at_upper[ent] = False
            since_refactor += 1
            if since_refactor >= self.refactor_every:
                try:
                    T, nonbasic = self._tableau(basic)
                    since_refactor = 0
                except np.linalg.LinAlgError:
                    pass
                self._place_nonbasic(val, nonbasic, at_upper, lo_all, hi_all)

        # final polish: refactor for an accurate solution after long pivot runs
        if since_refactor > 50:
            try:
                T, nonbasic = self._tableau(basic)
                self._place_nonbasic(val, nonbasic, at_upper, lo_all, hi_all)
            except np.linalg.LinAlgError:
                pass
        val[basic] = T @ val[nonbasic]
        x = val[:n].copy()
        act = self.A @ x
        viol = max(
            0.0,
            float(np.max(np.maximum(self.row_lo - act, act - self.row_hi), initial=0.0)),
            float(np.max(np.maximum(lo_all[:n] - x, x - hi_all[:n]), initial=0.0)),
        )
        self._remember(basic, T, nonbasic)
        return LpResult(OPTIMAL, x, float(self.c[:n] @ x), iters, Basis(basic.copy(), at_upper.copy()), viol)

    def _cached_tableau(self, basic: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        key = basic.tobytes()
        for k, (T, nonbasic) in self._cache:
            if k == key:
                return T.copy(order="F"), nonbasic.copy()
        T, nonbasic = self._tableau(basic)
        self._remember(basic, T, nonbasic)
        return T, nonbasic

    def _remember(self, basic, T, nonbasic) -> None:
        self._cache.append((basic.tobytes(), (T.copy(order="F"), nonbasic.copy())))
        del self._cache[: -self.cache_size]

    @staticmethod
    def _place_nonbasic(val, nonbasic, at_upper, lo_all, hi_all):
        lo_n, hi_n = lo_all[nonbasic], hi_all[nonbasic]
        up = at_upper[nonbasic]
        # a nonbasic variable must sit at a finite bound
        up = np.where(~np.isfinite(lo_n), True, np.where(~np.isfinite(hi_n), False, up))
        at_upper[nonbasic] = up
        val[nonbasic] = np.where(up, hi_n, lo_n)

    @staticmethod
    def _pivot(T: np.ndarray, i: int, k: int) -> None:
        """Exchange basic row ``i`` with nonbasic column ``k`` in place (T is Fortran-ordered)."""
        piv = T[i, k]
        row = T[i].copy()
        col = T[:, k].copy()
        dger(-1.0 / piv, col, row, a=T, overwrite_a=1)
        T[:, k] = col / piv
        T[i] = -row / piv
        T[i, k] = 1.0 / piv


def solve_lp(c, A_ub=None, b_ub=None, A_eq=None, b_eq=None, lo=None, hi=None, **kw) -> LpResult:
    """Convenience wrapper for ``min c.x`` with ``<=``/``=`` row blocks and finite variable bounds."""
    c = np.asarray(c, dtype=float)
    n = c.size
    blocks, rlo, rhi = [], [], []
    if A_ub is not None and len(b_ub):
        blocks.append(np.asarray(A_ub, dtype=float).reshape(-1, n))
        rlo.append(np.full(len(b_ub), -np.inf))
        rhi.append(np.asarray(b_ub, dtype=float))
    if A_eq is not None and len(b_eq):
        blocks.append(np.asarray(A_eq, dtype=float).reshape(-1, n))
        rlo.append(np.asarray(b_eq, dtype=float))
        rhi.append(np.asarray(b_eq, dtype=float))
    A = np.vstack(blocks) if blocks else np.zeros((0, n))
    solver = BoundedSimplex(c, A, np.concatenate(rlo) if rlo else np.zeros(0), np.concatenate(rhi) if rhi else np.zeros(0), **kw)
    return solver.solve(np.zeros(n) if lo is None else lo, np.full(n, np.inf) if hi is None else hi)

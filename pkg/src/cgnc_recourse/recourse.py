"""Cutting-set search for robust counterfactuals, the non-robust baseline and coverage.

The loop alternates a master problem (closest point satisfying the
decision rule under every scenario collected so far) with an adversarial
problem (worst perturbation of that point inside the uncertainty set)
until the worst violation drops to ``epsilon``.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .cgnc import CgncModel, class_geometry, classify, decision_h, log_threshold
from .data import FeatureBounds
from .expansion import ExpandedForm, build_expansion
from .metric import UncertaintySet, WhitenedMetric, distance, parse_p, sample_ball
from .milp.lp_format import write_lp
from .milp.relax import TighteningState, build_ap, build_mp, extract_vector, tighten
from .solve.bnb import solve_milp
from .solve.local import solve_local_ap, solve_local_mp
from .solve.result import INFEASIBLE, ITERATION_LIMIT, SolveResult

BACKENDS = ("milp", "local")
ROBUST = "robust"
EARLY_STOP = "early-stop"
OUTCOME_INFEASIBLE = "infeasible"
TIMEOUT = "timeout"


def _finite(v):
    return float(v) if v is not None and math.isfinite(v) else None


class RecourseError(ValueError):
    """Bad input to the recourse driver."""


class PreconditionError(RecourseError):
    """The factual point is not classified as class 0."""


class BackendFailure(RuntimeError):
    """A subproblem solver returned no usable answer."""


@dataclass(frozen=True)
class RecourseConfig:
    backend: str = "milp"
    tau: float = 0.5
    epsilon: float = 1e-3
    bounds: Optional[FeatureBounds] = None
    m_init: int = 20
    nu: float = 0.5
    m_ap: int = 20
    gap: float = 0.01
    node_limit: int = 200_000
    time_limit: float = 3600.0
    max_iterations: int = 50
    starts: int = 16
    seed: int = 0
    double_partition: bool = False
    polish: bool = True
    coverage_tol: float = 1e-3
    dump_lp: Optional[str] = None

    def __post_init__(self):
        if self.backend not in BACKENDS:
            raise RecourseError(f"backend must be one of {BACKENDS}, got {self.backend!r}")
        if not self.epsilon > 0:
            raise RecourseError("epsilon must be positive")
        log_threshold(self.tau)


@dataclass
class IterationRecord:
    t: int
    phi: float
    objective: float
    m: Optional[int] = None
    mp_stats: dict = field(default_factory=dict)
    ap_stats: dict = field(default_factory=dict)

    def to_dict(self, timings: bool = True) -> dict:
        out = {"t": self.t, "phi": _finite(self.phi), "objective": _finite(self.objective), "m": self.m}
        for key, st in (("mp", self.mp_stats), ("ap", self.ap_stats)):
            out[key] = {k: v for k, v in st.items() if timings or k != "wall_time"}
        return out


@dataclass
class CuttingSetState:
    scenarios: list
    iterate: Optional[np.ndarray] = None
    violation: float = math.inf
    t: int = 0
    tightening: Optional[TighteningState] = None
    log: list = field(default_factory=list)


@dataclass
class RecourseResult:
    factual: np.ndarray
    counterfactual: Optional[np.ndarray]
    distance: float
    iterations: int
    outcome: str
    coverage: Optional[float]
    violation_final: float
    log: list = field(default_factory=list)
    wall_time: float = 0.0
    nodes: int = 0
    simplex_iterations: int = 0

    def to_dict(self, timings: bool = True) -> dict:
        doc = {
            "factual": self.factual.tolist(),
            "counterfactual": None if self.counterfactual is None else self.counterfactual.tolist(),
            "distance": _finite(self.distance),
            "iterations": self.iterations,
            "outcome": self.outcome,
            "coverage": self.coverage,
            "violation_final": _finite(self.violation_final),
            "log": [r.to_dict(timings) for r in self.log],
            "solver_stats": {"nodes": self.nodes, "simplex_iterations": self.simplex_iterations},
        }
        if timings:
            doc["solver_stats"]["wall_time"] = self.wall_time
        return doc


def default_bounds(model: CgncModel, k: float = 3.0) -> FeatureBounds:
    """Union over classes of ``mean +- k * sd`` of the model marginals."""
    lo, hi = np.full(model.n, np.inf), np.full(model.n, -np.inf)
    for c in (0, 1):
        mean = np.linalg.solve(model.A[c], model.b[c])
        sd = np.sqrt(np.diag(class_geometry(model, c).covariance))
        lo, hi = np.minimum(lo, mean - k * sd), np.maximum(hi, mean + k * sd)
    return FeatureBounds(lo, hi)


def _check_inputs(model: CgncModel, metric: WhitenedMetric, x_fac) -> np.ndarray:
    x = np.asarray(x_fac, dtype=float)
    if x.shape != (model.n,):
        raise RecourseError(f"factual must have {model.n} entries")
    if not np.all(np.isfinite(x)):
        raise RecourseError("factual contains non-finite values")
    if metric.n != model.n:
        raise RecourseError("metric dimension does not match the model")
    return x


class _Subproblems:
    """Dispatches master/adversarial solves to the configured backend."""

    def __init__(self, model, metric, x_fac, config: RecourseConfig, deadline: float):
        self.model = model
        self.metric = metric
        self.x_fac = x_fac
        self.cfg = config
        self.tau_prime = log_threshold(config.tau)
        self.bounds = config.bounds if config.bounds is not None else default_bounds(model)
        self.deadline = deadline
        self.form: Optional[ExpandedForm] = build_expansion(model) if config.backend == "milp" else None
        self.nodes = 0
        self.simplex_iterations = 0
        if config.backend == "milp" and parse_p(metric.p) == 2.0:
            raise RecourseError("quadratic set unsupported in MILP path")

    def _remaining(self) -> float:
        return max(0.0, self.deadline - time.perf_counter())

    def _account(self, res: SolveResult) -> dict:
        self.nodes += res.stats.nodes
        self.simplex_iterations += res.stats.simplex_iterations
        return res.stats_dict()

    def _dump(self, m, name: str) -> None:
        if self.cfg.dump_lp:
            write_lp(m, Path(self.cfg.dump_lp) / f"{name}.lp", title=name)

    def master(self, scenarios, tightening, t: int, anchors=()):
        """Returns (x or None, objective, stats, timed_out)."""
        cfg = self.cfg
        if cfg.backend == "local":
            res = solve_local_mp(self.model, self.metric, self.x_fac, scenarios, self.tau_prime, self.bounds,
                                 starts=cfg.starts, seed=cfg.seed + t, anchors=anchors)
            stats = self._account(res)
            if res.status == INFEASIBLE:
                return None, math.nan, stats, False
            return extract_vector(res.assignment, self.model.n, "x"), res.objective, stats, False
        m = build_mp(self.model, self.form, self.metric, self.x_fac, scenarios, tightening, self.tau_prime,
                     cfg.double_partition)
        self._dump(m, f"mp_t{t}")
        res = solve_milp(m, gap_tol=cfg.gap, node_limit=cfg.node_limit, time_limit=self._remaining())
        stats = self._account(res)
        if res.status == INFEASIBLE:
            return None, math.nan, stats, False
        if not res.has_solution:
            return None, math.nan, stats, res.status == ITERATION_LIMIT
        x = extract_vector(res.assignment, self.model.n, "x")
        objective = res.objective
        if cfg.polish:
            pol = solve_local_mp(self.model, self.metric, self.x_fac, scenarios, self.tau_prime, self.bounds,
                                 starts=1, seed=cfg.seed + t, anchors=[x])
            self._account(pol)
            if pol.status != INFEASIBLE:
                x = extract_vector(pol.assignment, self.model.n, "x")
                objective = pol.objective
            stats["polished_distance"] = pol.objective
        return x, objective, stats, False

    def adversary(self, x_hat, gamma: float, t: int, tag: str = "ap"):
        """Returns (delta, phi, stats)."""
        cfg = self.cfg
        uset = UncertaintySet(self.metric, gamma)
        if cfg.backend == "local":
            res = solve_local_ap(self.model, uset, x_hat, self.tau_prime, starts=cfg.starts, seed=cfg.seed + t)
        else:
            m = build_ap(self.model, self.form, uset, x_hat, cfg.m_ap, self.tau_prime, cfg.double_partition)
            self._dump(m, f"{tag}_t{t}")
            res = solve_milp(m, gap_tol=cfg.gap, node_limit=cfg.node_limit, time_limit=max(self._remaining(), 1.0))
            if not res.has_solution:
                raise BackendFailure(f"adversarial MILP returned {res.status}")
        stats = self._account(res)
        return extract_vector(res.assignment, self.model.n, "delta"), float(res.objective), stats


def find_counterfactual(
    model: CgncModel,
    metric: WhitenedMetric,
    x_fac,
    gamma: float,
    epsilon: Optional[float] = None,
    tau: Optional[float] = None,
    backend: Optional[str] = None,
    config: Optional[RecourseConfig] = None,
) -> RecourseResult:
    """Robust counterfactual of ``x_fac`` against perturbations of whitened size ``gamma``."""
    cfg = config or RecourseConfig()
    overrides = {k: v for k, v in (("epsilon", epsilon), ("tau", tau), ("backend", backend)) if v is not None}
    if overrides:
        cfg = replace(cfg, **overrides)
    if not gamma > 0:
        raise RecourseError("gamma must be positive")
    x_fac = _check_inputs(model, metric, x_fac)
    if classify(model, x_fac, cfg.tau) != 0:
        raise PreconditionError("factual is already classified as class 1")
    start = time.perf_counter()
    sub = _Subproblems(model, metric, x_fac, cfg, start + cfg.time_limit)
    state = CuttingSetState(scenarios=[np.zeros(model.n)])
    if cfg.backend == "milp":
        state.tightening = TighteningState.initial(sub.bounds, cfg.m_init, cfg.nu)
    outcome = None
    while True:
        state.t += 1
        if state.t > cfg.max_iterations or time.perf_counter() > sub.deadline:
            state.t -= 1
            outcome = TIMEOUT
            break
        anchors = [] if state.iterate is None else [state.iterate]
        x_hat, obj, mp_stats, timed_out = sub.master(state.scenarios, state.tightening, state.t, anchors)
        if x_hat is None:
            state.t -= 1
            outcome = TIMEOUT if timed_out else OUTCOME_INFEASIBLE
            break
        # every scenario collected so far must hold at the new iterate
        delta, phi, ap_stats = sub.adversary(x_hat, gamma, state.t)
        state.iterate, state.violation = x_hat, phi
        state.log.append(IterationRecord(
            state.t, phi, obj, None if state.tightening is None else state.tightening.m_t, mp_stats, ap_stats,
        ))
        if phi <= cfg.epsilon:
            break
        state.scenarios.append(delta)
        if state.tightening is not None:
            state.tightening = tighten(state.tightening, x_hat)

    x_star = state.iterate
    coverage = None
    if outcome is None:
        if state.violation <= 0.0:
            outcome, coverage = ROBUST, 1.0
        else:
            outcome = EARLY_STOP
            coverage = coverage_ratio(model, metric, x_star, gamma, sub.tau_prime, cfg.backend, cfg.coverage_tol,
                                      config=cfg, _sub=sub)
    return RecourseResult(
        factual=x_fac,
        counterfactual=x_star,
        distance=math.nan if x_star is None else distance(metric, x_star, x_fac),
        iterations=len(state.scenarios) if outcome in (ROBUST, EARLY_STOP) else state.t,
        outcome=outcome,
        coverage=coverage,
        violation_final=state.violation,
        log=state.log,
        wall_time=time.perf_counter() - start,
        nodes=sub.nodes,
        simplex_iterations=sub.simplex_iterations,
    )


def baseline_counterfactual(
    model: CgncModel,
    metric: WhitenedMetric,
    x_fac,
    tau: Optional[float] = None,
    backend: Optional[str] = None,
    config: Optional[RecourseConfig] = None,
) -> RecourseResult:
    """Closest point with ``H >= tau'`` and no robustness requirement (a single master solve)."""
    cfg = config or RecourseConfig()
    overrides = {k: v for k, v in (("tau", tau), ("backend", backend)) if v is not None}
    if overrides:
        cfg = replace(cfg, **overrides)
    x_fac = _check_inputs(model, metric, x_fac)
    start = time.perf_counter()
    tau_prime = log_threshold(cfg.tau)
    if classify(model, x_fac, cfg.tau) == 1:
        return RecourseResult(x_fac, x_fac.copy(), 0.0, 0, ROBUST, None, tau_prime - float(decision_h(model, x_fac)),
                              wall_time=time.perf_counter() - start)
    sub = _Subproblems(model, metric, x_fac, cfg, start + cfg.time_limit)
    tightening = TighteningState.initial(sub.bounds, cfg.m_init, cfg.nu) if cfg.backend == "milp" else None
    x, obj, stats, timed_out = sub.master([np.zeros(model.n)], tightening, 1)
    if x is None:
        return RecourseResult(x_fac, None, math.nan, 1, TIMEOUT if timed_out else OUTCOME_INFEASIBLE, None, math.nan,
                              wall_time=time.perf_counter() - start, nodes=sub.nodes,
                              simplex_iterations=sub.simplex_iterations)
    phi = tau_prime - float(decision_h(model, x))
    return RecourseResult(
        x_fac, x, distance(metric, x, x_fac), 1, ROBUST if phi <= 0 else EARLY_STOP, None, phi,
        log=[IterationRecord(1, phi, obj, None if tightening is None else tightening.m_t, stats)],
        wall_time=time.perf_counter() - start, nodes=sub.nodes, simplex_iterations=sub.simplex_iterations,
    )


def coverage_ratio(
    model: CgncModel,
    metric: WhitenedMetric,
    x_star,
    gamma: float,
    tau_prime: float,
    backend: str = "milp",
    tol: float = 1e-3,
    config: Optional[RecourseConfig] = None,
    _sub: Optional[_Subproblems] = None,
) -> float:
    """Largest fraction of ``gamma`` at which ``x_star`` has no violation, by bisection."""
    x_star = np.asarray(x_star, dtype=float)
    if not np.all(np.isfinite(x_star)):
        raise RecourseError("point contains non-finite values")
    if tau_prime - float(decision_h(model, x_star)) > 0.0:
        return 0.0
    cfg = config or RecourseConfig(backend=backend)
    if cfg.backend != backend:
        cfg = replace(cfg, backend=backend)
    sub = _sub or _Subproblems(model, metric, x_star, cfg, time.perf_counter() + cfg.time_limit)

    def robust_at(g: float) -> bool:
        return sub.adversary(x_star, g, 0, tag="coverage")[1] <= 0.0

    if robust_at(gamma):
        return 1.0
    lo, hi = 0.0, gamma
    while hi - lo >= tol * gamma:
        mid = 0.5 * (lo + hi)
        if robust_at(mid):
            lo = mid
        else:
            hi = mid
    return lo / gamma


def max_sampled_violation(
    model: CgncModel,
    metric: WhitenedMetric,
    x,
    gamma: float,
    tau_prime: float,
    samples: int = 100_000,
    seed: int = 0,
) -> float:
    """Monte-Carlo estimate of ``max tau' - H(x + delta)`` over the uncertainty set."""
    rng = np.random.default_rng(seed)
    deltas = sample_ball(metric, gamma, samples, rng)
    return float(np.max(tau_prime - decision_h(model, np.asarray(x, dtype=float) + deltas)))

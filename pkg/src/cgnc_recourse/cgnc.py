"""Conditional Gaussian network classifier (binary class, linear Gaussian CPDs)."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np
from scipy.linalg import solve_triangular

from .data import Dataset
from .structure import DagStructure

log = logging.getLogger(__name__)

VARIANCE_FLOOR = 1e-6
RIDGE = 1e-8
LOG_2PI = math.log(2.0 * math.pi)


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class NodeCpd:
    parents: tuple[int, ...]
    weights: tuple[float, ...]
    intercept: float
    variance: float

    def __post_init__(self):
        if len(self.parents) != len(self.weights):
            raise ModelError("one weight per parent required")
        if not self.variance >= VARIANCE_FLOOR:
            raise ModelError(f"variance {self.variance} below floor {VARIANCE_FLOOR}")

    @property
    def weight_map(self) -> dict[int, float]:
        return dict(zip(self.parents, self.weights))

    def mean(self, x: np.ndarray) -> float:
        return float(self.intercept + sum(w * x[j] for j, w in zip(self.parents, self.weights)))


@dataclass(frozen=True)
class ClassGeometry:
    a_rows: np.ndarray
    covariance: np.ndarray


@dataclass(frozen=True, eq=False)
class CgncModel:
    structure: DagStructure
    priors: tuple[float, float]
    cpds: tuple[tuple[NodeCpd, ...], tuple[NodeCpd, ...]]
    feature_names: tuple[str, ...] = ()

    def __post_init__(self):
        p0, p1 = (float(p) for p in self.priors)
        if not (p0 > 0 and p1 > 0 and abs(p0 + p1 - 1.0) < 1e-12):
            raise ModelError(f"priors must be positive and sum to 1, got {self.priors}")
        object.__setattr__(self, "priors", (p0, p1))
        n = self.structure.n
        for c in (0, 1):
            if len(self.cpds[c]) != n:
                raise ModelError("one CPD per node and class required")
            for i, cpd in enumerate(self.cpds[c]):
                if tuple(cpd.parents) != self.structure.parents[i]:
                    raise ModelError(f"CPD parents of node {i} disagree with the structure")
        if not self.feature_names:
            object.__setattr__(self, "feature_names", tuple(f"x{i}" for i in range(n)))

    @property
    def n(self) -> int:
        return self.structure.n

    @cached_property
    def A(self) -> np.ndarray:
        """Stacked ``A_c = I - W_c``, shape (2, n, n)."""
        A = np.zeros((2, self.n, self.n))
        for c in (0, 1):
            A[c] = np.eye(self.n)
            for i, cpd in enumerate(self.cpds[c]):
                for j, w in zip(cpd.parents, cpd.weights):
                    A[c, i, j] = -w
        A.setflags(write=False)
        return A

    @cached_property
    def b(self) -> np.ndarray:
        b = np.array([[cpd.intercept for cpd in self.cpds[c]] for c in (0, 1)])
        b.setflags(write=False)
        return b

    @cached_property
    def variances(self) -> np.ndarray:
        s = np.array([[cpd.variance for cpd in self.cpds[c]] for c in (0, 1)])
        s.setflags(write=False)
        return s

    @cached_property
    def log_priors(self) -> np.ndarray:
        return np.log(np.array(self.priors))


def fit(ds: Dataset, structure: DagStructure) -> CgncModel:
    """Per class and node, OLS of x_i on its parents plus an intercept.

    Variances are the unbiased residual estimate, floored at
    ``VARIANCE_FLOOR``. Parentless nodes reduce to the class sample mean
    and (unbiased) variance.
    """
    if ds.n_features != structure.n:
        raise ModelError(f"dataset has {ds.n_features} features, structure {structure.n} nodes")
    cpds = []
    for c in (0, 1):
        Xc = ds.class_rows(c)
        rows = Xc.shape[0]
        per_class = []
        for i, ps in enumerate(structure.parents):
            if rows < len(ps) + 2:
                raise ModelError(
                    f"class {c} has {rows} rows; node {i} with {len(ps)} parents needs {len(ps) + 2}"
                )
            y = Xc[:, i]
            if not ps:
                per_class.append(NodeCpd((), (), float(y.mean()), max(float(y.var(ddof=1)), VARIANCE_FLOOR)))
                continue
            D = np.column_stack([Xc[:, list(ps)], np.ones(rows)])
            if np.linalg.matrix_rank(D) < D.shape[1]:
                log.warning("singular design for class %d node %d; ridge fallback", c, i)
                coef = np.linalg.solve(D.T @ D + RIDGE * np.eye(D.shape[1]), D.T @ y)
            else:
                coef = np.linalg.lstsq(D, y, rcond=None)[0]
            resid = y - D @ coef
            var = float(resid @ resid) / (rows - len(ps) - 1)
            per_class.append(
                NodeCpd(ps, tuple(float(w) for w in coef[:-1]), float(coef[-1]), max(var, VARIANCE_FLOOR))
            )
        cpds.append(tuple(per_class))
    pri = ds.priors()
    return CgncModel(structure, (float(pri[0]), float(pri[1])), (cpds[0], cpds[1]), ds.feature_names)


def log_density_node(model: CgncModel, c: int, i: int, x) -> float:
    x = np.asarray(x, dtype=float)
    cpd = model.cpds[c][i]
    dev = x[i] - cpd.mean(x)
    return -0.5 * (LOG_2PI + math.log(cpd.variance)) - dev * dev / (2.0 * cpd.variance)


def log_joint(model: CgncModel, c: int, x) -> float:
    """log rho_c + sum_i log N(x_i; mu_i|c, sigma^2_i|c) (product form, node by node)."""
    return float(model.log_priors[c]) + sum(log_density_node(model, c, i, x) for i in range(model.n))


def log_joint_affine(model: CgncModel, c: int, x) -> np.ndarray:
    """Vectorised ``-sum_i (a_i^T x - b_i)^2 / 2 sigma_i^2 + C_c`` for one point or a batch (rows)."""
    X = np.atleast_2d(np.asarray(x, dtype=float))
    dev = X @ model.A[c].T - model.b[c]
    var = model.variances[c]
    const = model.log_priors[c] - 0.5 * np.sum(LOG_2PI + np.log(var))
    out = const - np.sum(dev * dev / (2.0 * var), axis=1)
    return out if np.ndim(x) > 1 else out[0]


def decision_h(model: CgncModel, x):
    """Log-relative likelihood ``log h_1(x) - log h_0(x)``; accepts a batch of rows."""
    return log_joint_affine(model, 1, x) - log_joint_affine(model, 0, x)


def posterior(model: CgncModel, x) -> float:
    l0, l1 = log_joint(model, 0, x), log_joint(model, 1, x)
    m = max(l0, l1)
    return math.exp(l1 - m) / (math.exp(l0 - m) + math.exp(l1 - m))


def log_threshold(tau: float) -> float:
    if not 0.0 < tau < 1.0:
        raise ModelError(f"threshold must lie in (0, 1), got {tau}")
    return math.log(tau / (1.0 - tau))


def classify(model: CgncModel, x, tau: float = 0.5) -> int:
    return int(decision_h(model, x) >= log_threshold(tau))


def class_geometry(model: CgncModel, c: int) -> ClassGeometry:
    order = model.structure.topological_order()
    A = model.A[c]
    # Unit lower triangular once rows/cols follow a topological order.
    Ap = A[np.ix_(order, order)]
    Linv = solve_triangular(Ap, np.diag(np.sqrt(model.variances[c][order])), lower=True, unit_diagonal=True)
    Sp = Linv @ Linv.T
    inv = np.argsort(order)
    S = Sp[np.ix_(inv, inv)]
    S = 0.5 * (S + S.T)
    return ClassGeometry(np.array(A), S)


def sample(model: CgncModel, c: int, size: int, rng: np.random.Generator) -> np.ndarray:
    """Ancestral samples from ``P(X | Y=c)``."""
    X = np.zeros((size, model.n))
    for i in model.structure.topological_order():
        cpd = model.cpds[c][i]
        mu = cpd.intercept + sum(w * X[:, j] for j, w in zip(cpd.parents, cpd.weights))
        X[:, i] = mu + math.sqrt(cpd.variance) * rng.standard_normal(size)
    return X


def sample_dataset(model: CgncModel, size: int, rng: np.random.Generator) -> Dataset:
    y = (rng.random(size) < model.priors[1]).astype(int)
    X = np.zeros((size, model.n))
    for c in (0, 1):
        idx = np.flatnonzero(y == c)
        X[idx] = sample(model, c, idx.size, rng)
    return Dataset(X, y, model.feature_names)


def make_model(
    structure: DagStructure,
    weights: Sequence[dict[int, float]] | Sequence[Sequence[dict[int, float]]],
    intercepts,
    variances,
    priors=(0.5, 0.5),
    feature_names: Sequence[str] = (),
) -> CgncModel:
    """Assemble a model from raw parameters; ``intercepts``/``variances`` shaped (2, n).

    ``weights`` is a pair (one per class) of per-node ``{parent: w}`` dicts.
    """
    b = np.asarray(intercepts, dtype=float).reshape(2, structure.n)
    v = np.asarray(variances, dtype=float).reshape(2, structure.n)
    cpds = []
    for c in (0, 1):
        nodes = []
        for i, ps in enumerate(structure.parents):
            wmap = weights[c][i] if weights else {}
            nodes.append(NodeCpd(ps, tuple(float(wmap.get(j, 0.0)) for j in ps), float(b[c, i]), float(v[c, i])))
        cpds.append(tuple(nodes))
    return CgncModel(structure, tuple(priors), (cpds[0], cpds[1]), tuple(feature_names))

"""Seeded synthetic stand-ins for the two benchmark tables used in the experiments.

Each class is drawn from a multivariate normal whose means, standard
deviations and correlations follow the published summary statistics of
the corresponding public dataset. Row counts and class balance match.
"""
from __future__ import annotations

import numpy as np

from .data import Dataset

BANKNOTE_FEATURES = ("variance", "skewness", "curtosis", "entropy")
BANKNOTE_CORR = np.array(
    [
        [1.00, 0.26, -0.38, 0.28],
        [0.26, 1.00, -0.79, -0.53],
        [-0.38, -0.79, 1.00, 0.32],
        [0.28, -0.53, 0.32, 1.00],
    ]
)
BANKNOTE_CLASSES = (
    # (rows, means, standard deviations)
    (762, (2.2767, 4.2566, 0.7967, -1.1476), (2.019, 5.138, 3.239, 2.125)),
    (610, (-1.8684, -0.9936, 2.1483, -1.2466), (1.881, 5.404, 5.262, 2.070)),
)

PIMA_FEATURES = ("pregnancies", "glucose", "blood_pressure", "skin", "insulin", "bmi", "pedigree", "age")
_PIMA_PAIRS = {
    (0, 7): 0.54,
    (1, 4): 0.33,
    (3, 4): 0.44,
    (3, 5): 0.39,
    (2, 5): 0.28,
    (1, 7): 0.26,
    (2, 7): 0.24,
    (2, 3): 0.21,
    (1, 5): 0.22,
    (0, 2): 0.14,
    (6, 4): 0.18,
    (6, 3): 0.18,
}
PIMA_CLASSES = (
    (500, (3.30, 109.98, 68.18, 19.66, 68.79, 30.30, 0.43, 31.19), (3.02, 26.14, 18.06, 14.89, 98.87, 7.69, 0.30, 11.67)),
    (268, (4.87, 141.26, 70.82, 22.16, 100.34, 35.14, 0.55, 37.07), (3.74, 31.94, 21.49, 17.68, 138.69, 7.26, 0.37, 10.97)),
)


def _pima_corr() -> np.ndarray:
    C = np.eye(len(PIMA_FEATURES))
    for (j, k), r in _PIMA_PAIRS.items():
        C[j, k] = C[k, j] = r
    return C


def _draw(classes, corr: np.ndarray, names, seed: int) -> Dataset:
    rng = np.random.default_rng(seed)
    xs, ys = [], []
    for label, (rows, mean, sd) in enumerate(classes):
        sd = np.asarray(sd, dtype=float)
        cov = corr * np.outer(sd, sd)
        xs.append(rng.multivariate_normal(np.asarray(mean, dtype=float), cov, size=rows, method="cholesky"))
        ys.append(np.full(rows, label))
    X = np.round(np.vstack(xs), 5)
    y = np.concatenate(ys)
    order = rng.permutation(y.size)
    return Dataset(X[order], y[order], tuple(names))


def banknote_like(seed: int = 0) -> Dataset:
    """1372 rows, 4 features, 762/610 class split."""
    return _draw(BANKNOTE_CLASSES, BANKNOTE_CORR, BANKNOTE_FEATURES, seed)


def pima_like(seed: int = 0) -> Dataset:
    """768 rows, 8 features, 500/268 class split."""
    return _draw(PIMA_CLASSES, _pima_corr(), PIMA_FEATURES, seed)


GENERATORS = {"banknote_like": banknote_like, "pima_like": pima_like}

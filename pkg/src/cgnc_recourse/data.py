"""Dataset ingestion, feature bounds and equal-frequency discretization."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np


class DataError(ValueError):
    """Raised for malformed or unusable input data."""


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    feature_names: tuple[str, ...]
    label_values: tuple[str, str] = ("0", "1")

    def __post_init__(self):
        X = np.asarray(self.features, dtype=float)
        y = np.asarray(self.labels, dtype=int)
        if X.ndim != 2:
            raise DataError("features must be a 2-D matrix")
        if X.shape[0] != y.shape[0]:
            raise DataError(f"{X.shape[0]} feature rows but {y.shape[0]} labels")
        if len(self.feature_names) != X.shape[1]:
            raise DataError("feature_names length does not match column count")
        if not np.all(np.isfinite(X)):
            raise DataError("non-finite feature values")
        if np.any((y != 0) & (y != 1)):
            raise DataError("labels must be 0 or 1")
        counts = np.bincount(y, minlength=2)
        # per-class row minimums are enforced where they matter, in fit()
        if counts.min() < 1:
            raise DataError(f"single-class data (class counts {counts.tolist()})")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def n_rows(self) -> int:
        return self.features.shape[0]

    def class_rows(self, c: int) -> np.ndarray:
        return self.features[self.labels == c]

    def priors(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=2) / self.n_rows


@dataclass(frozen=True)
class FeatureBounds:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.array(self.lower, dtype=float)
        hi = np.array(self.upper, dtype=float)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise DataError("bounds must be two vectors of equal length")
        if not np.all(lo < hi):
            raise DataError("every lower bound must be strictly below its upper bound")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower

    def contains(self, x, tol: float = 0.0) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lower - tol) and np.all(x <= self.upper + tol))


def _sort_labels(values: set[str]) -> list[str]:
    try:
        return sorted(values, key=float)
    except ValueError:
        return sorted(values)


def load_csv(path, label_column: str) -> Dataset:
    """Read a comma-separated file with a header row into a :class:`Dataset`.

    The label column must hold exactly two distinct values; the smaller one
    (numerically if every value parses as a number, else lexicographically)
    becomes class 0. Rows with missing or non-numeric feature cells are
    collected and reported together in a single :class:`DataError`.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path} is empty") from None
        if label_column not in header:
            raise DataError(f"label column {label_column!r} not in header {header}")
        li = header.index(label_column)
        names = [h for k, h in enumerate(header) if k != li]
        rows, raw_labels, bad = [], [], []
        for lineno, rec in enumerate(reader, start=2):
            if not rec or all(not cell.strip() for cell in rec):
                continue
            if len(rec) != len(header):
                bad.append(lineno)
                continue
            try:
                vals = [float(cell) for k, cell in enumerate(rec) if k != li]
            except ValueError:
                bad.append(lineno)
                continue
            if not all(math.isfinite(v) for v in vals) or not rec[li].strip():
                bad.append(lineno)
                continue
            rows.append(vals)
            raw_labels.append(rec[li].strip())
    if bad:
        raise DataError(
            f"{len(bad)} row(s) rejected for missing/non-numeric cells "
            f"(first at line {bad[0]})"
        )
    if not rows:
        raise DataError(f"{path} has no data rows")
    distinct = set(raw_labels)
    if len(distinct) != 2:
        if len(distinct) == 1:
            raise DataError(f"single-class data: label column holds only {distinct.pop()!r}")
        raise DataError(f"label column must have two distinct values, found {len(distinct)}")
    order = _sort_labels(distinct)
    mapping = {v: k for k, v in enumerate(order)}
    labels = np.array([mapping[v] for v in raw_labels], dtype=int)
    return Dataset(np.array(rows, dtype=float), labels, tuple(names), tuple(order))


def write_csv(ds: Dataset, path, label_column: str = "class") -> None:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([*ds.feature_names, label_column])
        for row, lab in zip(ds.features, ds.labels):
            w.writerow([repr(float(v)) for v in row] + [ds.label_values[lab]])


def percentile_bounds(ds: Dataset, lo: float = 0.05, hi: float = 0.95) -> FeatureBounds:
    """Per-feature empirical percentiles, linear interpolation between order statistics.

    A feature whose two percentiles coincide is widened symmetrically by
    ``max(1e-6, 1e-6 * |value|)`` so the resulting box is never degenerate.
    """
    if not 0.0 <= lo < hi <= 1.0:
        raise DataError(f"need 0 <= lo < hi <= 1, got lo={lo}, hi={hi}")
    X = ds.features
    if X.shape[0] == 0:
        raise DataError("empty dataset")
    lower = np.quantile(X, lo, axis=0, method="linear")
    upper = np.quantile(X, hi, axis=0, method="linear")
    same = lower >= upper
    if np.any(same):
        pad = np.maximum(1e-6, 1e-6 * np.abs(lower[same]))
        mid = lower[same]
        lower[same] = mid - pad
        upper[same] = mid + pad
    return FeatureBounds(lower, upper)


def equal_frequency_bins(values: Sequence[float], k: int) -> np.ndarray:
    """Edges of ``k`` equal-frequency bins; duplicate edges are merged.

    The first and last edges are the sample minimum and maximum, so a
    sample with no spread collapses to a single edge (one bin).
    """
    if k < 2:
        raise DataError(f"need at least 2 bins, got {k}")
    v = np.asarray(values, dtype=float)
    if v.size < k:
        raise DataError(f"{v.size} values cannot fill {k} bins")
    edges = np.quantile(v, np.linspace(0.0, 1.0, k + 1), method="linear")
    return np.unique(edges)


def assign_bins(values: Sequence[float], edges: np.ndarray) -> np.ndarray:
    """Bin index of every value for edges from :func:`equal_frequency_bins`.

    Values equal to an interior edge fall in the upper bin; values outside
    the edge range are clamped to the first/last bin.
    """
    v = np.asarray(values, dtype=float)
    inner = np.asarray(edges, dtype=float)[1:-1]
    return np.searchsorted(inner, v, side="right")

"""Robust counterfactual explanations for conditional Gaussian network classifiers."""
from .cgnc import CgncModel, classify, decision_h, fit, log_threshold
from .data import Dataset, FeatureBounds, load_csv, percentile_bounds
from .metric import UncertaintySet, WhitenedMetric, build_metric, distance
from .recourse import (
    PreconditionError,
    RecourseConfig,
    RecourseError,
    RecourseResult,
    baseline_counterfactual,
    coverage_ratio,
    find_counterfactual,
)
from .structure import DagStructure, structure_nb, structure_tan

__version__ = "0.1.0"

__all__ = [
    "CgncModel",
    "DagStructure",
    "Dataset",
    "FeatureBounds",
    "PreconditionError",
    "RecourseConfig",
    "RecourseError",
    "RecourseResult",
    "UncertaintySet",
    "WhitenedMetric",
    "baseline_counterfactual",
    "build_metric",
    "classify",
    "coverage_ratio",
    "decision_h",
    "distance",
    "find_counterfactual",
    "fit",
    "load_csv",
    "log_threshold",
    "percentile_bounds",
    "structure_nb",
    "structure_tan",
]

"""Batch protocol: sample factuals, run the recourse driver per budget and backend, aggregate.

Outputs in the chosen directory:

``results.jsonl``
    one deterministic record per (gamma, backend, run); no wall-clock fields,
    so a fixed seed reproduces the file byte for byte
``timings.jsonl``
    wall-clock seconds for the same keys, in the same order
``scatter.csv``
    distance against runtime per run, ready for plotting elsewhere
``summary.json``
    the aggregated table in machine-readable form
"""
from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .cgnc import CgncModel, class_geometry, decision_h, fit, log_threshold
from .data import DataError, Dataset, FeatureBounds, load_csv, percentile_bounds
from .datasets import GENERATORS
from .metric import WhitenedMetric, build_metric
from .recourse import (
    EARLY_STOP,
    OUTCOME_INFEASIBLE,
    ROBUST,
    TIMEOUT,
    RecourseConfig,
    baseline_counterfactual,
    find_counterfactual,
)
from .structure import DagStructure, structure_ban_from_file, structure_nb, structure_tan

BUILTIN_PREFIX = "builtin:"


@dataclass(frozen=True)
class ExperimentConfig:
    data: str
    label: str = "class"
    structure: str = "nb"
    ban_file: Optional[str] = None
    max_in_degree: Optional[int] = None
    gammas: tuple = (0.01,)
    backends: tuple = ("milp",)
    runs: int = 25
    seed: int = 0
    p: str = "inf"
    out: Optional[str] = None
    baseline: bool = False
    recourse: RecourseConfig = field(default_factory=RecourseConfig)

    def __post_init__(self):
        if self.runs < 1:
            raise ValueError("runs must be >= 1")
        if not self.gammas or any(not g > 0 for g in self.gammas):
            raise ValueError("every gamma must be positive")
        if self.structure not in ("nb", "tan", "ban"):
            raise ValueError(f"unknown structure {self.structure!r}")
        if self.structure == "ban" and not self.ban_file:
            raise ValueError("structure ban needs a DAG file")


def load_dataset(spec: str, label: str = "class") -> Dataset:
    """A CSV path, or ``builtin:<name>`` for one of the bundled generators."""
    if spec.startswith(BUILTIN_PREFIX):
        name = spec[len(BUILTIN_PREFIX):]
        if name not in GENERATORS:
            raise DataError(f"unknown builtin dataset {name!r}; choose from {sorted(GENERATORS)}")
        return GENERATORS[name]()
    return load_csv(spec, label)


def learn_structure(ds: Dataset, kind: str, ban_file=None, max_in_degree=None) -> DagStructure:
    if kind == "nb":
        return structure_nb(ds.n_features)
    if kind == "tan":
        return structure_tan(ds)
    if kind == "ban":
        return structure_ban_from_file(ban_file, ds.n_features, max_in_degree)
    raise ValueError(f"unknown structure {kind!r}")


def model_metric(model: CgncModel, p="inf") -> WhitenedMetric:
    return build_metric(class_geometry(model, 0).covariance, p)


def sample_factuals(model: CgncModel, ds: Dataset, runs: int, seed: int, tau: float = 0.5) -> np.ndarray:
    """Row indices of ``runs`` class-0 rows that the model also assigns to class 0, drawn uniformly."""
    zero = np.flatnonzero(ds.labels == 0)
    ok = zero[decision_h(model, ds.features[zero]) < log_threshold(tau)]
    if len(ok) < runs:
        raise DataError(f"only {len(ok)} correctly classified class-0 rows, {runs} requested")
    rng = np.random.default_rng(seed)
    return np.sort(rng.choice(ok, size=runs, replace=False))


def run_seed(seed: int, run: int) -> int:
    return int(np.random.SeedSequence([seed, run]).generate_state(1)[0])


def _mean_se(values: Sequence[float]):
    if not values:
        return None, None
    a = np.asarray(values, dtype=float)
    if a.size == 1:
        return float(a[0]), None
    return float(a.mean()), float(a.std(ddof=1) / math.sqrt(a.size))


def summarize(records: list, timings: list) -> list:
    """One row per (gamma, backend); timeouts and failed runs stay out of the means."""
    keys = []
    for r in records:
        k = (r["gamma"], r["backend"])
        if k not in keys:
            keys.append(k)
    wall = {(t["gamma"], t["backend"], t["run"]): t["wall_time"] for t in timings}
    rows = []
    for gamma, backend in keys:
        group = [r for r in records if r["gamma"] == gamma and r["backend"] == backend]
        done = [r for r in group if r.get("outcome") in (ROBUST, EARLY_STOP)]
        rt_mean, rt_se = _mean_se([wall[(gamma, backend, r["run"])] for r in done])
        it_mean, it_se = _mean_se([r["iterations"] for r in done])
        early = [r for r in group if r.get("outcome") == EARLY_STOP]
        cov = [r["coverage"] for r in early]
        rows.append({
            "gamma": gamma,
            "backend": backend,
            "runs": len(group),
            "runtime_mean": rt_mean,
            "runtime_se": rt_se,
            "iterations_mean": it_mean,
            "iterations_se": it_se,
            "early_stops": len(early),
            "coverage_mean": float(np.mean(cov)) if cov else None,
            "timeouts": sum(r.get("outcome") == TIMEOUT for r in group),
            "infeasible": sum(r.get("outcome") == OUTCOME_INFEASIBLE for r in group),
            "errors": sum("error" in r for r in group),
            "distance_mean": _mean_se([r["distance"] for r in done])[0],
        })
    return rows


def _fmt(v, spec: str) -> str:
    return "-" if v is None else format(v, spec)


def format_table(rows: list) -> str:
    head = ("gamma", "backend", "runs", "runtime (s)", "iterations", "early stops", "coverage", "timeouts", "errors")
    body = []
    for r in rows:
        rt = f"{_fmt(r['runtime_mean'], '.3f')} ({_fmt(r['runtime_se'], '.3f')})"
        it = f"{_fmt(r['iterations_mean'], '.2f')} ({_fmt(r['iterations_se'], '.2f')})"
        cov = _fmt(None if r["coverage_mean"] is None else 100.0 * r["coverage_mean"], ".2f")
        body.append((f"{r['gamma']:g}", r["backend"], str(r["runs"]), rt, it, str(r["early_stops"]),
                     cov if cov == "-" else cov + "%", str(r["timeouts"]), str(r["errors"])))
    widths = [max(len(h), *(len(b[i]) for b in body)) if body else len(h) for i, h in enumerate(head)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(head, widths))]
    lines.append("  ".join("-" * w for w in widths))
    for b in body:
        lines.append("  ".join(c.ljust(w) for c, w in zip(b, widths)))
    return "\n".join(lines)


@dataclass
class ExperimentOutput:
    records: list
    timings: list
    summary: list
    table: str


def run_experiment(cfg: ExperimentConfig, log=None) -> ExperimentOutput:
    ds = load_dataset(cfg.data, cfg.label)
    model = fit(ds, learn_structure(ds, cfg.structure, cfg.ban_file, cfg.max_in_degree))
    metric = model_metric(model, cfg.p)
    bounds: FeatureBounds = cfg.recourse.bounds or percentile_bounds(ds)
    rows = sample_factuals(model, ds, cfg.runs, cfg.seed, cfg.recourse.tau)
    records, timings = [], []
    for gamma in cfg.gammas:
        for backend in cfg.backends:
            for run, row in enumerate(rows):
                rc = replace(cfg.recourse, backend=backend, bounds=bounds, seed=run_seed(cfg.seed, run))
                rec = {"gamma": gamma, "backend": backend, "run": run, "row": int(row)}
                t0 = time.perf_counter()
                try:
                    res = find_counterfactual(model, metric, ds.features[row], gamma, config=rc)
                    rec.update(res.to_dict(timings=False))
                    if cfg.baseline:
                        rec["baseline_distance"] = baseline_counterfactual(model, metric, ds.features[row],
                                                                           config=rc).distance
                except Exception as exc:  # counted, never fatal to the batch
                    rec["error"] = f"{type(exc).__name__}: {exc}"
                wall = time.perf_counter() - t0
                records.append(rec)
                timings.append({"gamma": gamma, "backend": backend, "run": run, "wall_time": wall})
                if log is not None:
                    log(f"gamma={gamma:g} backend={backend} run={run} row={row} "
                        f"{rec.get('outcome', 'error')} {wall:.2f}s")
    summary = summarize(records, timings)
    out = ExperimentOutput(records, timings, summary, format_table(summary))
    if cfg.out:
        write_outputs(out, Path(cfg.out))
    return out


def _jsonl(items: list) -> str:
    return "".join(json.dumps(it, sort_keys=True, allow_nan=True) + "\n" for it in items)


def write_outputs(out: ExperimentOutput, directory: Path) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    (directory / "results.jsonl").write_text(_jsonl(out.records), encoding="utf-8")
    (directory / "timings.jsonl").write_text(_jsonl(out.timings), encoding="utf-8")
    (directory / "summary.json").write_text(json.dumps(out.summary, indent=2) + "\n", encoding="utf-8")
    wall = {(t["gamma"], t["backend"], t["run"]): t["wall_time"] for t in out.timings}
    with (directory / "scatter.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["gamma", "backend", "run", "row", "outcome", "distance", "runtime"])
        for r in out.records:
            w.writerow([r["gamma"], r["backend"], r["run"], r["row"], r.get("outcome", "error"),
                        r.get("distance", ""), wall[(r["gamma"], r["backend"], r["run"])]])

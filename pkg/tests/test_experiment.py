import csv
import json
import math

import numpy as np
import pytest

from cgnc_recourse.cgnc import decision_h, fit, make_model, sample_dataset
from cgnc_recourse.cli import EXIT_OK, main
from cgnc_recourse.data import DataError, write_csv
from cgnc_recourse.experiment import (
    ExperimentConfig,
    load_dataset,
    run_experiment,
    run_seed,
    sample_factuals,
    summarize,
)
from cgnc_recourse.recourse import RecourseConfig
from cgnc_recourse.structure import structure_nb


@pytest.fixture(scope="module")
def small_csv(tmp_path_factory):
    truth = make_model(structure_nb(2), None, [[0.0, 0.0], [2.0, 1.5]], [[1.0, 0.8], [1.2, 1.0]])
    path = tmp_path_factory.mktemp("data") / "small.csv"
    write_csv(sample_dataset(truth, 300, np.random.default_rng(5)), path)
    return str(path)


def _cfg(data, out, **kw):
    rc = RecourseConfig(starts=4)
    return ExperimentConfig(data=data, gammas=(0.01, 0.05), backends=("local",), runs=3, seed=11, out=str(out),
                            recourse=rc, **kw)


class TestSampling:
    def test_seeded_and_valid(self):
        ds = load_dataset("builtin:banknote_like")
        model = fit(ds, structure_nb(4))
        a = sample_factuals(model, ds, 25, 3)
        assert np.array_equal(a, sample_factuals(model, ds, 25, 3))
        assert len(set(a.tolist())) == 25
        assert np.all(ds.labels[a] == 0)
        assert np.all(decision_h(model, ds.features[a]) < 0)

    def test_too_many(self):
        ds = load_dataset("builtin:banknote_like")
        with pytest.raises(DataError):
            sample_factuals(fit(ds, structure_nb(4)), ds, 10_000, 0)

    def test_run_seed_distinct(self):
        seeds = {run_seed(7, r) for r in range(100)}
        assert len(seeds) == 100 and run_seed(7, 3) == run_seed(7, 3)


class TestBatch:
    def test_outputs_and_determinism(self, small_csv, tmp_path):
        a = run_experiment(_cfg(small_csv, tmp_path / "a", baseline=True))
        run_experiment(_cfg(small_csv, tmp_path / "b", baseline=True))
        ra = (tmp_path / "a" / "results.jsonl").read_bytes()
        assert ra == (tmp_path / "b" / "results.jsonl").read_bytes()
        for name in ("timings.jsonl", "summary.json", "scatter.csv"):
            assert (tmp_path / "a" / name).exists()
        assert [(r["gamma"], r["backend"]) for r in a.summary] == [(0.01, "local"), (0.05, "local")]
        for rec in a.records:
            if rec.get("outcome") in ("robust", "early-stop"):
                assert rec["baseline_distance"] <= rec["distance"] + 1e-6

    def test_summary_recomputed_from_files(self, small_csv, tmp_path):
        run_experiment(_cfg(small_csv, tmp_path))
        recs = [json.loads(l) for l in (tmp_path / "results.jsonl").read_text().splitlines()]
        wall = {(t["gamma"], t["backend"], t["run"]): t["wall_time"]
                for t in map(json.loads, (tmp_path / "timings.jsonl").read_text().splitlines())}
        summary = json.loads((tmp_path / "summary.json").read_text())
        for row in summary:
            grp = [r for r in recs if r["gamma"] == row["gamma"] and r["backend"] == row["backend"]]
            ok = [r for r in grp if r.get("outcome") in ("robust", "early-stop")]
            its = np.array([r["iterations"] for r in ok], float)
            rts = np.array([wall[(r["gamma"], r["backend"], r["run"])] for r in ok])
            assert row["iterations_mean"] == pytest.approx(its.mean())
            assert row["iterations_se"] == pytest.approx(its.std(ddof=1) / math.sqrt(its.size))
            assert row["runtime_mean"] == pytest.approx(rts.mean())
            assert row["early_stops"] == sum(r.get("outcome") == "early-stop" for r in grp)
            assert row["timeouts"] == sum(r.get("outcome") == "timeout" for r in grp)
        with (tmp_path / "scatter.csv").open() as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == len(recs)
        assert set(rows[0]) == {"gamma", "backend", "run", "row", "outcome", "distance", "runtime"}

    def test_single_run_se_null(self, small_csv, tmp_path):
        cfg = ExperimentConfig(data=small_csv, gammas=(0.01,), backends=("local",), runs=1, seed=0,
                               recourse=RecourseConfig(starts=2))
        row = run_experiment(cfg).summary[0]
        assert row["runtime_se"] is None and row["iterations_se"] is None

    def test_cli_experiment(self, small_csv, tmp_path, capsys):
        code = main(["experiment", "--data", small_csv, "--runs", "1", "--gamma", "0.01", "--backend", "local",
                     "--starts", "2", "--out", str(tmp_path)])
        assert code == EXIT_OK
        out = capsys.readouterr().out
        assert "iterations" in out and "coverage" in out
        assert (tmp_path / "results.jsonl").exists()


class TestSummarize:
    def test_errors_counted_not_averaged(self):
        recs = [
            {"gamma": 0.1, "backend": "milp", "run": 0, "outcome": "robust", "iterations": 2, "distance": 1.0,
             "coverage": 1.0},
            {"gamma": 0.1, "backend": "milp", "run": 1, "error": "BackendFailure: boom"},
            {"gamma": 0.1, "backend": "milp", "run": 2, "outcome": "timeout", "iterations": 50, "distance": 9.0,
             "coverage": None},
            {"gamma": 0.1, "backend": "milp", "run": 3, "outcome": "early-stop", "iterations": 4, "distance": 3.0,
             "coverage": 0.98},
        ]
        timings = [{"gamma": 0.1, "backend": "milp", "run": r, "wall_time": float(r + 1)} for r in range(4)]
        row = summarize(recs, timings)[0]
        assert row["errors"] == 1 and row["timeouts"] == 1 and row["early_stops"] == 1
        assert row["iterations_mean"] == 3.0 and row["runtime_mean"] == 2.5
        assert row["coverage_mean"] == 0.98 and row["distance_mean"] == 2.0

    def test_bad_config(self):
        with pytest.raises(ValueError):
            ExperimentConfig(data="x", runs=0)
        with pytest.raises(ValueError):
            ExperimentConfig(data="x", gammas=(0.0,))

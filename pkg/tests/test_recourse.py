import json
import math

import numpy as np
import pytest

from cgnc_recourse.cgnc import decision_h, log_threshold, make_model
from cgnc_recourse.data import FeatureBounds
from cgnc_recourse.metric import build_metric
from cgnc_recourse.recourse import (
    EARLY_STOP,
    OUTCOME_INFEASIBLE,
    ROBUST,
    TIMEOUT,
    PreconditionError,
    RecourseConfig,
    RecourseError,
    baseline_counterfactual,
    coverage_ratio,
    default_bounds,
    find_counterfactual,
    max_sampled_violation,
)
from cgnc_recourse.structure import structure_nb

from conftest import identity_metric, one_d_model, random_model

BOX_1D = FeatureBounds(np.array([-3.0]), np.array([5.0]))
BACKENDS = ("milp", "local")


def _cfg(backend, **kw):
    return RecourseConfig(backend=backend, bounds=kw.pop("bounds", BOX_1D), **kw)


@pytest.mark.parametrize("backend", BACKENDS)
class TestOneDimensional:
    def test_closed_form_robust_point(self, backend):
        gamma = 0.01
        res = find_counterfactual(one_d_model(), identity_metric(1), [0.0], gamma, config=_cfg(backend))
        tp = log_threshold(0.5)
        # whitened extent of the identity l-inf ball equals gamma
        expect = (tp + 2 + 2 * gamma) / 2
        assert res.outcome in (ROBUST, EARLY_STOP)
        assert res.iterations <= 3
        assert res.counterfactual[0] == pytest.approx(expect, abs=1e-4)
        assert res.distance == pytest.approx(expect, abs=1e-4)

    def test_threshold_shift(self, backend):
        tau = 0.75
        res = find_counterfactual(one_d_model(), identity_metric(1), [0.0], 0.05, tau=tau, config=_cfg(backend))
        assert res.counterfactual[0] == pytest.approx((math.log(3.0) + 2 + 0.1) / 2, abs=1e-4)

    def test_tiny_gamma_matches_baseline(self, backend):
        m, met = one_d_model(), identity_metric(1)
        res = find_counterfactual(m, met, [-0.5], 1e-12, config=_cfg(backend))
        base = baseline_counterfactual(m, met, [-0.5], config=_cfg(backend))
        assert res.iterations == 1
        assert res.violation_final <= 1e-3
        assert res.violation_final == pytest.approx(-float(decision_h(m, res.counterfactual)), abs=1e-9)
        assert res.distance == pytest.approx(base.distance, abs=1e-6)

    def test_baseline_boundary(self, backend):
        res = baseline_counterfactual(one_d_model(), identity_metric(1), [0.0], config=_cfg(backend))
        assert res.counterfactual[0] == pytest.approx(1.0, abs=1e-4)
        assert res.distance == pytest.approx(1.0, abs=1e-4)
        assert res.iterations == 1 and res.coverage is None

    def test_baseline_not_above_robust(self, backend):
        m, met = one_d_model(), identity_metric(1)
        base = baseline_counterfactual(m, met, [0.2], config=_cfg(backend))
        rob = find_counterfactual(m, met, [0.2], 0.05, config=_cfg(backend))
        assert base.distance <= rob.distance + 1e-6

    def test_monte_carlo_oracle(self, backend):
        m, met = one_d_model(), identity_metric(1)
        res = find_counterfactual(m, met, [0.0], 0.01, config=_cfg(backend))
        assert max_sampled_violation(m, met, res.counterfactual, 0.01, 0.0) <= 1e-3 + 1e-6

    def test_dump_lp(self, backend, tmp_path):
        find_counterfactual(one_d_model(), identity_metric(1), [0.0], 0.01,
                            config=_cfg(backend, dump_lp=str(tmp_path)))
        files = sorted(p.name for p in tmp_path.iterdir())
        if backend == "milp":
            assert "mp_t1.lp" in files and "ap_t1.lp" in files
            assert all(p.read_text().strip().endswith("End") for p in tmp_path.iterdir())
        else:
            assert files == []


class TestBaseline:
    def test_already_past_threshold(self):
        m = one_d_model()
        res = baseline_counterfactual(m, identity_metric(1), [0.8], tau=0.2, config=_cfg("milp"))
        assert res.distance == 0.0
        np.testing.assert_array_equal(res.counterfactual, res.factual)


class TestCoverage:
    def test_robust_is_one(self):
        m = one_d_model()
        assert coverage_ratio(m, identity_metric(1), [1.5], 0.1, 0.0, "local") == 1.0

    def test_constant_violating_is_zero(self):
        p1 = 1.0 / (1.0 + math.e)
        m = make_model(structure_nb(2), None, np.zeros((2, 2)), np.ones((2, 2)), (1.0 - p1, p1))
        assert float(decision_h(m, np.zeros(2))) == pytest.approx(-1.0)
        for backend in BACKENDS:
            assert coverage_ratio(m, identity_metric(2), [0.3, -0.2], 0.1, 0.0, backend) == 0.0

    @pytest.mark.parametrize("backend", BACKENDS)
    def test_half_placement(self, backend):
        gamma, tol = 0.02, 1e-3
        x = np.array([1.0 + gamma / 2])
        cfg = _cfg(backend)
        ratio = coverage_ratio(one_d_model(), identity_metric(1), x, gamma, 0.0, backend, tol, config=cfg)
        assert abs(ratio - 0.5) <= tol + 1e-9

    def test_non_finite(self):
        with pytest.raises(RecourseError):
            coverage_ratio(one_d_model(), identity_metric(1), [math.nan], 0.1, 0.0)


class TestErrors:
    def test_precondition(self):
        with pytest.raises(PreconditionError):
            find_counterfactual(one_d_model(), identity_metric(1), [2.0], 0.01, config=_cfg("local"))

    def test_non_finite_factual(self):
        with pytest.raises(RecourseError):
            find_counterfactual(one_d_model(), identity_metric(1), [math.inf], 0.01)

    @pytest.mark.parametrize("gamma", [0.0, -1.0])
    def test_bad_gamma(self, gamma):
        with pytest.raises(RecourseError):
            find_counterfactual(one_d_model(), identity_metric(1), [0.0], gamma)

    def test_bad_backend(self):
        with pytest.raises(RecourseError):
            RecourseConfig(backend="gurobi")

    def test_quadratic_milp(self):
        with pytest.raises(RecourseError, match="quadratic"):
            find_counterfactual(one_d_model(), identity_metric(1, 2), [0.0], 0.01, config=_cfg("milp"))


class TestLoop:
    def test_infeasible(self):
        # identical classes: H is the constant log prior ratio, below tau'
        m = make_model(structure_nb(2), None, np.zeros((2, 2)), np.ones((2, 2)), (0.6, 0.4))
        box = FeatureBounds(np.full(2, -1.0), np.full(2, 1.0))
        for backend in BACKENDS:
            res = find_counterfactual(m, identity_metric(2), np.zeros(2), 0.01, config=_cfg(backend, bounds=box))
            assert res.outcome == OUTCOME_INFEASIBLE and res.counterfactual is None
            assert math.isnan(res.distance)

    def test_iteration_cap_is_timeout(self):
        res = find_counterfactual(one_d_model(), identity_metric(1), [0.0], 0.3,
                                  config=_cfg("local", max_iterations=1))
        assert res.outcome == TIMEOUT and res.iterations == 1

    @pytest.mark.parametrize("backend", BACKENDS)
    def test_iterations_equal_scenarios_and_history(self, backend):
        rng = np.random.default_rng(21)
        checked = 0
        for _ in range(6):
            m = random_model(rng, 2, spread=1.5)
            met = build_metric(np.eye(2), "inf")
            box = FeatureBounds(np.full(2, -4.0), np.full(2, 4.0))
            xs = [x for x in rng.uniform(-2, 2, size=(20, 2)) if decision_h(m, x) < 0]
            if not xs:
                continue
            res = find_counterfactual(m, met, xs[0], 0.05, config=_cfg(backend, bounds=box, starts=6))
            if res.outcome not in (ROBUST, EARLY_STOP):
                continue
            checked += 1
            assert res.iterations == len(res.log)
            assert [r.t for r in res.log] == list(range(1, res.iterations + 1))
            assert res.log[-1].phi <= 1e-3
            for r in res.log[:-1]:
                assert r.phi > 1e-3
            if res.outcome == ROBUST:
                assert max_sampled_violation(m, met, res.counterfactual, 0.05, 0.0, samples=20_000) <= 1e-3 + 1e-6
        assert checked >= 3

    def test_distance_monotone_in_gamma(self):
        m, met = one_d_model(), identity_metric(1)
        d = [find_counterfactual(m, met, [0.0], g, config=_cfg("local")).distance for g in (0.01, 0.05, 0.2)]
        assert d[0] <= d[1] + 1e-6 <= d[2] + 2e-6

    def test_report_json(self):
        res = find_counterfactual(one_d_model(), identity_metric(1), [0.0], 0.01, config=_cfg("milp"))
        doc = res.to_dict()
        assert set(doc) == {"factual", "counterfactual", "distance", "iterations", "outcome", "coverage",
                            "violation_final", "log", "solver_stats"}
        assert "wall_time" in doc["solver_stats"]
        bare = res.to_dict(timings=False)
        assert "wall_time" not in bare["solver_stats"]
        json.dumps(bare, allow_nan=False)

    def test_default_bounds_cover_means(self):
        b = default_bounds(one_d_model())
        assert b.lower[0] == pytest.approx(-3.0) and b.upper[0] == pytest.approx(5.0)

import math

import numpy as np
import pytest

from cgnc_recourse.cgnc import make_model
from cgnc_recourse.metric import WhitenedMetric
from cgnc_recourse.structure import DagStructure, structure_nb


def one_d_model():
    """Class 0 ~ N(0, 1), class 1 ~ N(2, 1), equal priors, so H(x) = 2x - 2."""
    return make_model(structure_nb(1), None, [[0.0], [2.0]], [[1.0], [1.0]])


def identity_metric(n: int, p=math.inf) -> WhitenedMetric:
    return WhitenedMetric(np.eye(n), p)


def random_structure(rng: np.random.Generator, n: int, density: float = 0.5) -> DagStructure:
    order = rng.permutation(n)
    edges = [(int(order[a]), int(order[b])) for a in range(n) for b in range(a + 1, n) if rng.random() < density]
    return DagStructure.from_edges(n, edges)


def random_model(rng: np.random.Generator, n: int, structure: DagStructure = None, spread: float = 1.0):
    """Random linear Gaussian classifier over ``structure`` (a random DAG by default)."""
    s = structure if structure is not None else random_structure(rng, n)
    weights = [[{j: float(rng.normal(0, 0.7)) for j in ps} for ps in s.parents] for _ in range(2)]
    intercepts = rng.normal(0, spread, size=(2, n))
    variances = rng.uniform(0.3, 2.0, size=(2, n))
    p1 = float(rng.uniform(0.3, 0.7))
    return make_model(s, weights, intercepts, variances, (1.0 - p1, p1))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE = pytest.StashKey[dict]()
N_CRITERIA = 12


def pytest_configure(config):
    config.stash[ACCEPTANCE] = {}


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = config.stash.get(ACCEPTANCE, {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for k in range(1, N_CRITERIA + 1):
        ok, detail = results.get(k, (False, "not reached"))
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture
def criterion(request):
    """Call as ``criterion(k, ok, detail)``; records the line for the summary then asserts."""
    store = request.config.stash[ACCEPTANCE]

    def record(k: int, ok: bool, detail: str = "") -> None:
        store[k] = (bool(ok), detail)
        assert ok, f"criterion {k}: {detail}"

    return record

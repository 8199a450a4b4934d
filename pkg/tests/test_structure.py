import numpy as np
import pytest

from cgnc_recourse.data import Dataset
from cgnc_recourse.datasets import banknote_like, pima_like
from cgnc_recourse.structure import (
    DagStructure,
    StructureError,
    cap_in_degree,
    conditional_mutual_information,
    structure_ban_from_file,
    structure_nb,
    structure_tan,
)


def _is_acyclic(s: DagStructure) -> bool:
    # independent of DagStructure.topological_order: repeatedly strip sinks
    remaining = set(range(s.n))
    edges = set(s.edges)
    while remaining:
        sinks = [v for v in remaining if not any(j == v and k in remaining for j, k in edges)]
        if not sinks:
            return False
        remaining -= set(sinks)
    return True


class TestNaiveBayes:
    @pytest.mark.parametrize("n", [1, 4, 8])
    def test_no_edges(self, n):
        s = structure_nb(n)
        assert s.n_edges == 0
        assert s.summary() == f"{n} nodes, 0 edges"

    def test_zero_nodes(self):
        with pytest.raises(StructureError):
            structure_nb(0)


class TestTan:
    def test_banknote_three_edges(self):
        s = structure_tan(banknote_like())
        assert s.summary() == "4 nodes, 3 edges"

    def test_forced_edge(self, rng):
        x1 = rng.normal(size=400)
        ds = Dataset(np.column_stack([x1, 2 * x1]), np.arange(400) % 2, ("a", "b"))
        assert structure_tan(ds).edges == frozenset({(0, 1)})

    def test_independent_features_still_tree(self, rng):
        ds = Dataset(rng.uniform(size=(3000, 3)), np.arange(3000) % 2, ("a", "b", "c"))
        s = structure_tan(ds)
        assert s.n_edges == 2
        assert max(len(p) for p in s.parents) <= 1

    def test_cmi_symmetric(self):
        cmi = conditional_mutual_information(pima_like())
        assert np.max(np.abs(cmi - cmi.T)) <= 1e-12

    def test_needs_two_features(self):
        ds = Dataset(np.arange(6.0)[:, None], np.arange(6) % 2, ("a",))
        with pytest.raises(StructureError):
            structure_tan(ds)

    @pytest.mark.parametrize("seed", range(5))
    def test_tree_properties(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 8))
        X = rng.normal(size=(300, n)) @ rng.normal(size=(n, n))
        s = structure_tan(Dataset(X, np.arange(300) % 2, tuple(map(str, range(n)))))
        assert s.n_edges == n - 1
        assert max(len(p) for p in s.parents) <= 1
        assert _is_acyclic(s)


class TestBan:
    def _file(self, tmp_path, text):
        p = tmp_path / "dag.txt"
        p.write_text(text, encoding="utf-8")
        return p

    def test_cap_keeps_largest(self, tmp_path):
        p = self._file(tmp_path, "# parent child weight\n0 3 0.9\n1 3 -0.5\n2 3 0.1\n")
        s = structure_ban_from_file(p, 4, max_in_degree=2)
        assert s.edges == frozenset({(0, 3), (1, 3)})

    def test_cap_tie_smaller_parent(self):
        kept = cap_in_degree([(2, 3, 0.5), (1, 3, -0.5), (0, 3, 0.1)], 1)
        assert kept == [(1, 3, -0.5)]

    def test_no_cap_identity(self, tmp_path):
        p = self._file(tmp_path, "0 1 0.3\n0 2 0.1\n1 2 -2\n")
        s = structure_ban_from_file(p, 3)
        assert s.edges == frozenset({(0, 1), (0, 2), (1, 2)})

    def test_cycle(self, tmp_path):
        p = self._file(tmp_path, "0 1 1.0\n1 0 1.0\n")
        with pytest.raises(StructureError, match="cycle"):
            structure_ban_from_file(p, 2)

    def test_out_of_range(self, tmp_path):
        p = self._file(tmp_path, "0 5 1.0\n")
        with pytest.raises(StructureError):
            structure_ban_from_file(p, 3)

    def test_malformed(self, tmp_path):
        p = self._file(tmp_path, "0 1\n")
        with pytest.raises(StructureError):
            structure_ban_from_file(p, 3)

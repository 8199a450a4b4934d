import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cgnc_recourse.data import (
    DataError,
    Dataset,
    FeatureBounds,
    assign_bins,
    equal_frequency_bins,
    load_csv,
    percentile_bounds,
    write_csv,
)
from cgnc_recourse.datasets import banknote_like, pima_like


def _write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


class TestLoadCsv:
    def test_label_mapping_sorted(self, tmp_path):
        p = _write(tmp_path / "d.csv", "f1,f2,y\n1,2,a\n3,4,b\n5,6,a\n")
        ds = load_csv(p, "y")
        assert ds.labels.tolist() == [0, 1, 0]
        assert ds.label_values == ("a", "b")
        assert ds.feature_names == ("f1", "f2")

    def test_numeric_labels_sort_numerically(self, tmp_path):
        p = _write(tmp_path / "d.csv", "x,y\n1,10\n2,9\n3,10\n")
        assert load_csv(p, "y").labels.tolist() == [1, 0, 1]

    def test_banknote_shape_round_trip(self, tmp_path):
        ds = banknote_like()
        write_csv(ds, tmp_path / "b.csv")
        back = load_csv(tmp_path / "b.csv", "class")
        assert back.n_features == 4 and back.n_rows == 1372
        np.testing.assert_array_equal(back.features, ds.features)

    def test_single_class(self, tmp_path):
        p = _write(tmp_path / "d.csv", "x,y\n1,a\n2,a\n")
        with pytest.raises(DataError, match="single-class"):
            load_csv(p, "y")

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError, match="no such file"):
            load_csv(tmp_path / "none.csv", "y")

    def test_unknown_label(self, tmp_path):
        p = _write(tmp_path / "d.csv", "x,y\n1,a\n2,b\n")
        with pytest.raises(DataError, match="label column"):
            load_csv(p, "z")

    def test_bad_rows_counted(self, tmp_path):
        p = _write(tmp_path / "d.csv", "x,y\n1,a\nfoo,b\n,a\n3,b\n")
        with pytest.raises(DataError, match="2 row"):
            load_csv(p, "y")


class TestDataset:
    def test_rejects_non_finite(self):
        with pytest.raises(DataError):
            Dataset(np.array([[np.nan], [1.0], [2.0], [3.0]]), np.array([0, 0, 1, 1]), ("a",))

    def test_priors(self):
        ds = Dataset(np.arange(8.0).reshape(4, 2), np.array([0, 1, 0, 1]), ("a", "b"))
        np.testing.assert_allclose(ds.priors(), [0.5, 0.5])

    def test_pima_dimensions(self):
        ds = pima_like()
        assert ds.n_features == 8 and ds.n_rows == 768
        assert int((ds.labels == 1).sum()) == 268


class TestPercentileBounds:
    def _ds(self, col):
        col = np.asarray(col, dtype=float)
        labels = np.arange(col.size) % 2
        return Dataset(col[:, None], labels, ("x",))

    def test_five_ninety_five(self):
        b = percentile_bounds(self._ds(np.arange(101)), 0.05, 0.95)
        np.testing.assert_allclose([b.lower[0], b.upper[0]], [5.0, 95.0])

    def test_constant_widened(self):
        b = percentile_bounds(self._ds(np.full(10, 3.0)))
        np.testing.assert_allclose([b.lower[0], b.upper[0]], [3.0 - 3e-6, 3.0 + 3e-6])

    def test_full_range_is_min_max(self):
        vals = np.array([4.0, -1.0, 7.5, 2.0])
        b = percentile_bounds(self._ds(vals), 0.0, 1.0)
        assert b.lower[0] == -1.0 and b.upper[0] == 7.5

    def test_bad_fractions(self):
        with pytest.raises(DataError):
            percentile_bounds(self._ds([1.0, 2.0]), 0.6, 0.4)

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.floats(-1e3, 1e3), min_size=4, max_size=40), st.floats(0.0, 0.4), st.floats(0.6, 1.0),
           st.floats(0.0, 1.0))
    def test_monotone(self, vals, lo, hi, shrink):
        ds = self._ds(vals)
        inner = percentile_bounds(ds, lo + shrink * (0.5 - lo) * 0.5, hi - shrink * (hi - 0.5) * 0.5)
        outer = percentile_bounds(ds, lo, hi)
        assert np.all(outer.lower <= inner.lower + 1e-9 * (1 + abs(inner.lower)))
        assert np.all(outer.upper >= inner.upper - 1e-9 * (1 + abs(inner.upper)))


class TestFeatureBounds:
    def test_rejects_inverted(self):
        with pytest.raises(DataError):
            FeatureBounds(np.array([1.0]), np.array([0.0]))


class TestEqualFrequencyBins:
    def test_split_at_median(self):
        edges = equal_frequency_bins(np.arange(1.0, 9.0), 2)
        assert edges[1] == 4.5
        counts = np.bincount(assign_bins(np.arange(1.0, 9.0), edges))
        assert counts.tolist() == [4, 4]

    def test_identical_values_single_bin(self):
        edges = equal_frequency_bins(np.full(10, 2.0), 4)
        assert edges.size == 1
        assert set(assign_bins(np.full(10, 2.0), edges)) == {0}

    def test_duplicates_merge_strictly_increasing(self):
        edges = equal_frequency_bins([1, 1, 1, 2], 2)
        assert np.all(np.diff(edges) > 0)

    def test_k_too_small(self):
        with pytest.raises(DataError):
            equal_frequency_bins([1, 2, 3], 1)

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.integers(-5, 5), min_size=6, max_size=60), st.integers(2, 6))
    def test_edges_increasing_counts_sum(self, vals, k):
        if len(vals) < k:
            return
        edges = equal_frequency_bins(vals, k)
        assert np.all(np.diff(edges) > 0)
        codes = assign_bins(vals, edges)
        assert np.bincount(codes).sum() == len(vals)

import numpy as np
import pytest

from chd.data import CATEGORICAL, Dataset, make_informative_noise
from chd.errors import ParameterError, SelectionError
from chd.relief import DiffMetric, FeatureWeights, relieff_knn, relieff_literal, select_top

from oracles import exhaustive_relief, feature_diff


def toy(seed=0, n_per_class=3, p=3):
    rng = np.random.default_rng(seed)
    y = np.array([0] * n_per_class + [1] * n_per_class)
    X = rng.random((len(y), p))
    X[:, 0] += y  # informative column
    return Dataset.from_arrays(X, y)


def test_diff_metric_properties():
    X = np.array([[0.0, 1], [2.0, 0], [4.0, 1]])
    m = DiffMetric(X, np.array([False, True]))
    for i in range(3):
        assert np.all(m.between(i, i) == 0)
        for j in range(3):
            d = m.between(i, j)
            assert np.all((0 <= d) & (d <= 1))
            assert np.array_equal(d, m.between(j, i))
    assert m.between(0, 1).tolist() == [0.5, 1.0]


def test_diff_metric_rejects_missing():
    with pytest.raises(SelectionError):
        DiffMetric(np.array([[np.nan], [1.0]]), np.array([False]))


GRID = 2**24


@pytest.mark.parametrize("seed", range(5))
def test_literal_equals_exhaustive_enumeration(seed):
    d = toy(seed, n_per_class=2)
    expected, triples = exhaustive_relief(d.X, d.y, d.categorical_mask, GRID)
    got = relieff_literal(d, triples=triples)
    assert np.allclose(got.weights, expected, rtol=0, atol=1e-12)
    assert got.m == len(triples)


@pytest.mark.parametrize("seed", range(5))
def test_unsnapped_literal_equals_exhaustive_enumeration(seed):
    d = toy(seed, n_per_class=2)
    expected, triples = exhaustive_relief(d.X, d.y, d.categorical_mask)
    got = relieff_literal(d, triples=triples, resolution=None)
    assert np.allclose(got.weights, expected, rtol=0, atol=1e-12)
    # the default grid moves weights by at most two grid steps
    snapped = relieff_literal(d, triples=triples)
    assert np.max(np.abs(snapped.weights - expected)) <= 2.0 / GRID


def test_literal_with_categorical_column():
    rng = np.random.default_rng(4)
    y = np.array([0, 0, 0, 1, 1, 1, 1])
    X = np.column_stack([rng.random(7), rng.integers(0, 3, 7)])
    d = Dataset.from_arrays(X, y, ["a", "c"], {"c": CATEGORICAL})
    expected, triples = exhaustive_relief(d.X, d.y, d.categorical_mask, GRID)
    assert np.allclose(relieff_literal(d, triples=triples).weights, expected, atol=1e-12)


def test_literal_rejects_bad_triples():
    d = toy()
    with pytest.raises(ParameterError):
        relieff_literal(d, triples=[(0, 3, 4)])


def knn_oracle(d, k, grid=GRID):
    """Every record is a focal once; nearest by summed diff, ties to lower index."""
    X, y, cat = d.X, d.y, d.categorical_mask
    n = len(y)
    w = np.zeros(X.shape[1])
    for f in range(n):
        dist = [(feature_diff(X, cat, f, j, grid).sum(), j) for j in range(n) if j != f]
        dist.sort()
        hits = [j for _, j in dist if y[j] == y[f]][:k]
        misses = [j for _, j in dist if y[j] != y[f]][:k]
        w += np.mean([feature_diff(X, cat, f, j, grid) for j in misses], axis=0)
        w -= np.mean([feature_diff(X, cat, f, j, grid) for j in hits], axis=0)
    return w / n


@pytest.mark.parametrize("k", [1, 2])
def test_knn_matches_nearest_neighbour_oracle(k):
    d = toy(7, n_per_class=5, p=4)
    got = relieff_knn(d, m=len(d), k=k, seed=0)
    assert np.allclose(got.weights, knn_oracle(d, k), atol=1e-12)


def test_constant_feature_scores_zero():
    d = toy(1, n_per_class=6)
    X = np.array(d.X)
    X[:, 1] = 3.7
    d = Dataset.from_arrays(X, d.y)
    for seed in range(3):
        assert relieff_literal(d, m=17, seed=seed).weights[1] == 0.0
        assert relieff_knn(d, m=9, k=3, seed=seed).weights[1] == 0.0


def test_duplicated_column_gets_identical_weight():
    d = toy(2, n_per_class=6)
    X = np.column_stack([d.X, d.X[:, 0]])
    d2 = Dataset.from_arrays(X, d.y)
    for w in (relieff_literal(d2, m=30, seed=1), relieff_knn(d2, k=2, seed=1)):
        assert w.weights[0] == w.weights[-1]


def test_positive_rescaling_is_bit_identical():
    d = make_informative_noise(seed=3)
    X = np.array(d.X)
    X[:, 0] *= 7.3
    X[:, 4] *= 0.0123
    scaled = Dataset.from_arrays(X, d.y, d.feature_names)
    for fn in (relieff_literal, relieff_knn):
        assert np.array_equal(fn(d, m=200, seed=5).weights, fn(scaled, m=200, seed=5).weights)


def test_deterministic():
    d = make_informative_noise(seed=1)
    a, b = relieff_knn(d, seed=4), relieff_knn(d, seed=4)
    assert np.array_equal(a.weights, b.weights)


def test_knn_is_order_free_when_every_record_is_focal():
    d = make_informative_noise(n=60, seed=2)
    perm = np.random.default_rng(0).permutation(len(d))
    shuffled = d.take(perm)
    # m = n visits each record once whatever the order; only summation order changes
    a = relieff_knn(d, k=5, seed=0).weights
    b = relieff_knn(shuffled, k=5, seed=9).weights
    assert np.allclose(a, b, rtol=0, atol=1e-12)


def test_noise_weight_shrinks_with_large_m():
    d = make_informative_noise(n=200, n_noise=1, seed=11)
    w = relieff_literal(d, m=10000, seed=0)
    assert abs(w.weights[1]) < 0.05


def test_single_class_is_selection_error():
    d = Dataset.from_arrays(np.arange(6.0), [0] * 6)
    with pytest.raises(SelectionError):
        relieff_literal(d)
    with pytest.raises(SelectionError):
        relieff_knn(d, k=1)


def test_k_too_large():
    with pytest.raises(ParameterError):
        relieff_knn(toy(n_per_class=3), k=3)


def test_select_top_tie_break():
    w = FeatureWeights(("a", "b", "c"), np.array([0.3, 0.1, 0.3]), 1, 1, 0, "literal")
    assert select_top(w, 2) == ["a", "c"]
    assert select_top(w, 3) == ["a", "c", "b"]
    with pytest.raises(ParameterError):
        select_top(w, 0)


def test_weights_table_sorted_by_rank():
    w = FeatureWeights(("a", "b"), np.array([0.1, 0.2]), 1, 1, 0, "knn")
    lines = w.to_text().splitlines()
    assert lines[1].split() == ["b", "0.2"]
    assert lines[2].split() == ["a", "0.1"]

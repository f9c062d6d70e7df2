import json
import math

import numpy as np
import pytest

from chd.data import CATEGORICAL, Dataset, clean, load_heart_fixture, make_informative_noise, stratified_split
from chd.errors import ModelLoadError, ParameterError, ShapeError, VersionError
from chd.models import (Encoder, ForestConfig, GbtConfig, LinearSvmModel, LogisticConfig, MlpConfig,
                        NbConfig, SvmConfig, TreeConfig, fit_forest, fit_gbt, fit_logistic, fit_mlp,
                        fit_nb, fit_svm, fit_tree, load_model, logistic_loss_grad, mlp_loss_grad,
                        predict, predict_proba, save_model, svm_loss_grad)
from chd.models.mlp import init_params, layer_shapes
from chd.models.trees import TreeNode, apply_tree, logistic_loss

from oracles import central_difference, relative_error, walk_tree


def one_d(xs, ys):
    return Dataset.from_arrays(np.asarray(xs, float)[:, None], ys, ["x"])


def xor():
    return Dataset.from_arrays(np.array([[0.0, 0], [0, 1], [1, 0], [1, 1]]), [0, 1, 1, 0])


@pytest.fixture(scope="module")
def heart_split():
    return stratified_split(clean(load_heart_fixture()), 0.8, 0)


FAST = {
    "logistic_regression": (fit_logistic, LogisticConfig(epochs=100)),
    "svm": (fit_svm, SvmConfig(epochs=100)),
    "multilayer_perceptron": (fit_mlp, MlpConfig(epochs=100, hidden_width=6)),
    "naive_bayes": (fit_nb, NbConfig()),
    "decision_tree": (fit_tree, TreeConfig()),
    "random_forest": (fit_forest, ForestConfig(n_trees=10)),
    "gradient_boosted_tree": (fit_gbt, GbtConfig(n_rounds=15)),
}


@pytest.fixture(scope="module")
def trained(heart_split):
    return {name: fit(heart_split.train, cfg) for name, (fit, cfg) in FAST.items()}


def random_records(train, n, seed):
    """Random rows inside (and a little beyond) the training ranges."""
    rng = np.random.default_rng(seed)
    X = np.empty((n, train.X.shape[1]))
    for j, spec in enumerate(train.schema.features):
        if spec.is_categorical:
            X[:, j] = rng.integers(0, len(spec.levels), n)
        else:
            lo, hi = train.X[:, j].min(), train.X[:, j].max()
            span = hi - lo
            X[:, j] = rng.uniform(lo - 0.5 * span, hi + 0.5 * span, n)
    return X


# --- gradients ---------------------------------------------------------------


def test_logistic_gradient_matches_finite_differences():
    rng = np.random.default_rng(0)
    for _ in range(20):
        n, p = int(rng.integers(3, 10)), int(rng.integers(1, 5))
        Z, y = rng.normal(size=(n, p)), rng.integers(0, 2, n).astype(float)
        theta = rng.normal(size=p + 1)
        _, g = logistic_loss_grad(theta, Z, y)
        fd = central_difference(lambda t: logistic_loss_grad(t, Z, y)[0], theta)
        assert relative_error(g, fd) <= 1e-4


@pytest.mark.parametrize("hidden", ["relu", "sigmoid"])
def test_mlp_gradient_matches_finite_differences(hidden):
    rng = np.random.default_rng(1)
    for _ in range(20):
        n, p, w = int(rng.integers(3, 8)), int(rng.integers(1, 4)), int(rng.integers(1, 5))
        Z, y = rng.normal(size=(n, p)), rng.integers(0, 2, n).astype(float)
        shapes = layer_shapes(p, w)
        theta = init_params(p, w, rng) + 0.1 * rng.normal(size=sum(a * b + a for a, b in shapes))
        _, g = mlp_loss_grad(theta, Z, y, shapes, hidden)
        fd = central_difference(lambda t: mlp_loss_grad(t, Z, y, shapes, hidden)[0], theta)
        assert relative_error(g, fd) <= 1e-4


def test_svm_gradient_matches_finite_differences_away_from_kinks():
    rng = np.random.default_rng(2)
    checked = 0
    while checked < 20:
        n, p = int(rng.integers(3, 10)), int(rng.integers(1, 5))
        Z, y = rng.normal(size=(n, p)), rng.integers(0, 2, n).astype(float)
        theta = rng.normal(size=p + 1)
        margins = 1 - (2 * y - 1) * (Z @ theta[:-1] + theta[-1])
        if np.min(np.abs(margins)) < 1e-3:
            continue
        _, g = svm_loss_grad(theta, Z, y, 0.1)
        fd = central_difference(lambda t: svm_loss_grad(t, Z, y, 0.1)[0], theta)
        assert relative_error(g, fd) <= 1e-4
        checked += 1


# --- logistic, SVM, MLP ------------------------------------------------------


def test_logistic_separates_two_points():
    d = one_d([-1, 1], [0, 1])
    m = fit_logistic(d, LogisticConfig(epochs=500))
    assert np.array_equal(m.predict(d.X), d.y)


def test_single_class_training_is_rejected():
    d = one_d([1, 2, 3], [1, 1, 1])
    for fit in (fit_logistic, fit_svm, fit_mlp, fit_nb, fit_gbt):
        with pytest.raises(ParameterError):
            fit(d)


def test_svm_separates_two_points():
    d = one_d([-1, 1], [0, 1])
    m = fit_svm(d)
    assert np.array_equal(m.predict(d.X), d.y)


def test_svm_strong_regularisation_shrinks_weights():
    d = one_d([-1, 1], [0, 1])
    assert np.linalg.norm(fit_svm(d, SvmConfig(lam=1e6)).weights) < 1e-2


def test_svm_midpoint_decision_is_bias():
    d = one_d([-1, 1], [0, 1])
    m = fit_svm(d)
    assert m.decision_function(np.array([0.0])) == pytest.approx(m.bias, abs=1e-15)


def test_mlp_solves_xor_in_most_seeds():
    d = xor()
    solved = sum(
        np.array_equal(fit_mlp(d, MlpConfig(hidden_width=8, epochs=5000, seed=s)).predict(d.X), d.y)
        for s in range(10)
    )
    assert solved >= 8


def test_mlp_width_zero():
    with pytest.raises(ParameterError):
        fit_mlp(xor(), MlpConfig(hidden_width=0))


def test_mlp_layers_chain(trained):
    m = trained["multilayer_perceptron"]
    (W1, b1, a1), (W2, b2, a2) = m.layers
    assert W2.shape[1] == W1.shape[0] and (a1, a2) == ("relu", "sigmoid")


def test_encoder_round_trip(heart_split):
    enc = Encoder.fit(heart_split.train)
    X = heart_split.test.X
    assert np.allclose(enc.group(enc.transform(X)), X, rtol=0, atol=1e-9)
    cat = heart_split.train.categorical_mask
    assert np.array_equal(enc.group(enc.transform(X))[:, cat], X[:, cat])


def test_encoder_constant_column_is_finite():
    d = Dataset.from_arrays(np.array([[1.0, 0], [1.0, 1]]), [0, 1])
    assert np.isfinite(Encoder.fit(d).transform(d.X)).all()


# --- naive Bayes --------------------------------------------------------------


def test_nb_hand_posterior():
    d = one_d([0, 2, 4, 6], [0, 0, 1, 1])
    m = fit_nb(d)
    assert m.predict_proba(np.array([3.0])) == pytest.approx(0.5, abs=1e-12)
    assert m.predict_proba(np.array([2.0])) == pytest.approx(1 / (1 + math.exp(4)), abs=1e-12)


def test_nb_hand_posterior_with_category():
    X = np.array([[0.0, 0], [2.0, 1], [4.0, 1], [6.0, 1], [5.0, 0], [1.0, 0]])
    y = [0, 0, 1, 1, 1, 0]
    d = Dataset.from_arrays(X, y, ["x", "c"], {"c": CATEGORICAL})
    m = fit_nb(d, NbConfig(smoothing=1.0))
    x = np.array([3.0, 1.0])
    # class 0: x in {0, 2, 1}; class 1: x in {4, 6, 5}; c counts with +1 smoothing
    def gauss(v, values):
        mu, var = np.mean(values), np.var(values)
        return math.exp(-(v - mu) ** 2 / (2 * var)) / math.sqrt(2 * math.pi * var)
    l0 = 0.5 * gauss(3.0, [0, 2, 1]) * (1 + 1) / (3 + 2)
    l1 = 0.5 * gauss(3.0, [4, 6, 5]) * (2 + 1) / (3 + 2)
    assert m.predict_proba(x) == pytest.approx(l1 / (l0 + l1), abs=1e-12)


def test_nb_identical_classes_follow_prior():
    d = one_d([1, 2, 3, 1, 2, 3, 1, 2, 3], [0, 0, 0, 0, 0, 0, 1, 1, 1])
    m = fit_nb(d)
    assert m.predict_proba(np.array([2.5])) == pytest.approx(1 / 3, abs=1e-12)
    assert m.predict(np.array([2.5])) == 0


def test_nb_variance_floor():
    d = one_d([1, 1, 2, 2], [0, 0, 1, 1])
    m = fit_nb(d)
    assert np.all(m.variances >= 1e-9)
    assert 0 <= m.predict_proba(np.array([1.5])) <= 1


# --- trees --------------------------------------------------------------------


def test_pure_training_set_is_one_leaf():
    m = fit_tree(one_d([1, 2, 3], [1, 1, 1]))
    assert m.root.is_leaf and m.root.value == (0.0, 1.0)


def test_separable_split_threshold():
    m = fit_tree(one_d([1, 2, 3, 4, 6, 7, 8, 9], [0, 0, 0, 0, 1, 1, 1, 1]))
    assert 4 < m.root.threshold < 6
    assert m.root.left.is_leaf and m.root.right.is_leaf
    assert m.root.left.value == (1.0, 0.0) and m.root.right.value == (0.0, 1.0)


def test_tie_goes_to_lower_feature():
    x = np.array([1.0, 2, 3, 4])
    d = Dataset.from_arrays(np.column_stack([x, x]), [0, 0, 1, 1])
    assert fit_tree(d).root.feature == 0


def test_tie_goes_to_lower_threshold():
    d = one_d([1, 2, 3, 4], [0, 1, 1, 0])
    root = fit_tree(d, TreeConfig(max_depth=1, min_leaf=1)).root
    assert root.threshold == 1.5


def test_tree_depth_limit(heart_split):
    m = fit_tree(heart_split.train, TreeConfig(max_depth=3))
    assert m.root.depth() <= 3


def test_leaf_distributions_sum_to_one(trained):
    def leaves(node):
        return [node] if node.is_leaf else leaves(node.left) + leaves(node.right)
    for leaf in leaves(trained["decision_tree"].root):
        assert sum(leaf.value) == pytest.approx(1.0, abs=1e-12)


def test_categorical_split():
    X = np.array([[0.0], [1], [2], [0], [1], [2]])
    d = Dataset.from_arrays(X, [0, 1, 0, 0, 1, 0], ["c"], {"c": CATEGORICAL})
    root = fit_tree(d, TreeConfig(min_leaf=1)).root
    assert root.categories is not None
    assert np.array_equal(fit_tree(d, TreeConfig(min_leaf=1)).predict(X), d.y)


def test_tree_prediction_matches_walk_oracle(heart_split, trained):
    X = random_records(heart_split.train, 1000, 3)
    tree = trained["decision_tree"]
    assert [v[1] for v in apply_tree(tree.root, X)] == [walk_tree(tree.root, x)[1] for x in X]
    gbt = trained["gradient_boosted_tree"]
    for t in gbt.trees[:3]:
        assert apply_tree(t, X) == [walk_tree(t, x) for x in X]


def test_forest_single_tree_without_bootstrap_equals_tree(heart_split):
    train = heart_split.train
    p = train.X.shape[1]
    forest = fit_forest(train, ForestConfig(n_trees=1, bootstrap=False, max_features=p))
    tree = fit_tree(train)
    assert forest.trees[0].to_dict() == tree.root.to_dict()


def test_forest_all_zero_votes():
    leaf = TreeNode(value=(1.0, 0.0), n_samples=1)
    from chd.models.trees import ForestModel
    f = ForestModel([leaf, leaf], [0, 1], 1, 1, ForestConfig(n_trees=2))
    assert f.predict_proba(np.array([3.0])) == 0.0


def test_forest_is_seed_and_thread_deterministic(heart_split, monkeypatch):
    cfg = ForestConfig(n_trees=12, seed=5)
    monkeypatch.setenv("CHD_THREADS", "1")
    a = fit_forest(heart_split.train, cfg)
    monkeypatch.setenv("CHD_THREADS", "4")
    b = fit_forest(heart_split.train, cfg)
    assert [t.to_dict() for t in a.trees] == [t.to_dict() for t in b.trees]


def test_forest_beats_majority_on_informative_fixture():
    split = stratified_split(make_informative_noise(n=200, seed=4), 0.8, 0)
    m = fit_forest(split.train, ForestConfig(n_trees=25))
    acc = np.mean(m.predict(split.test.X) == split.test.y)
    majority = max(np.mean(split.test.y), 1 - np.mean(split.test.y))
    assert acc > majority


def test_gbt_zero_rounds_predicts_base_rate():
    d = one_d([1, 2, 3, 4, 5], [0, 0, 1, 1, 1])
    m = fit_gbt(d, GbtConfig(n_rounds=0))
    assert np.allclose(m.predict_proba(np.array([[0.0], [9.0]])), 0.6, atol=1e-12)


def test_gbt_single_stump_newton_leaves():
    d = one_d([1, 2, 3, 4, 5], [0, 0, 1, 1, 1])
    m = fit_gbt(d, GbtConfig(n_rounds=1, max_depth=1, min_leaf=1))
    assert m.init_score == pytest.approx(math.log(1.5), abs=1e-12)
    root = m.trees[0]
    assert root.threshold == 2.5
    # p = 0.6 everywhere: residuals -0.6 / +0.4, hessian 0.24
    assert root.left.value == pytest.approx(-1.2 / 0.48, abs=1e-9)
    assert root.right.value == pytest.approx(1.2 / 0.72, abs=1e-9)


def test_gbt_loss_non_increasing(heart_split):
    m = fit_gbt(heart_split.train, GbtConfig(n_rounds=100))
    tr = m.loss_trace
    assert len(tr) == 101
    assert all(b <= a for a, b in zip(tr, tr[1:]))
    assert tr[-1] == pytest.approx(logistic_loss(heart_split.train.y, m.raw_score(heart_split.train.X)))


# --- shared contract ------------------------------------------------------------


def test_probability_tie_maps_to_positive():
    m = LinearSvmModel([0.0], 0.0, Encoder([False], [0], [0.0], [1.0]), SvmConfig())
    assert m.predict_proba(np.array([1.0])) == 0.5
    assert predict(m, np.array([1.0])) == 1


@pytest.mark.parametrize("name", list(FAST))
def test_probabilities_in_unit_interval(name, trained, heart_split):
    X = random_records(heart_split.train, 1000, 4)
    p = predict_proba(trained[name], X)
    assert p.shape == (1000,) and np.all((p >= 0) & (p <= 1))


@pytest.mark.parametrize("name", list(FAST))
def test_arity_mismatch(name, trained):
    with pytest.raises(ShapeError):
        trained[name].predict_proba(np.zeros(3))


@pytest.mark.parametrize("name", list(FAST))
def test_save_load_round_trip(name, trained, heart_split, tmp_path):
    model = trained[name]
    path = tmp_path / f"{name}.json"
    save_model(model, path)
    back = load_model(path)
    X = random_records(heart_split.train, 100, 5)
    assert np.array_equal(back.predict_proba(X), model.predict_proba(X))
    assert np.array_equal(back.predict(X), model.predict(X))


def test_truncated_model_file(trained, tmp_path):
    path = tmp_path / "m.json"
    save_model(trained["svm"], path)
    path.write_bytes(path.read_bytes()[:-1])
    with pytest.raises(ModelLoadError):
        load_model(path)


def test_bumped_version(trained, tmp_path):
    path = tmp_path / "m.json"
    save_model(trained["naive_bayes"], path)
    doc = json.loads(path.read_text())
    doc["version"] += 1
    path.write_text(json.dumps(doc))
    with pytest.raises(VersionError):
        load_model(path)


@pytest.mark.parametrize("name", ["logistic_regression", "multilayer_perceptron", "gradient_boosted_tree"])
def test_fits_are_deterministic(name, heart_split):
    fit, cfg = FAST[name]
    a, b = fit(heart_split.train, cfg), fit(heart_split.train, cfg)
    X = heart_split.test.X
    assert np.array_equal(a.predict_proba(X), b.predict_proba(X))

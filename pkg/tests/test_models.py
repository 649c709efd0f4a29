import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from limeout.data import dataset_from_arrays
from limeout.models import (EvalReport, ForestHyper, LogisticHyper, Recipe, best_f1_threshold,
                            drop_features, ensemble_average, evaluate, load_model,
                            log_loss_and_grad, model_from_dict, model_to_dict, save_model,
                            train_forest, train_logistic, tune_threshold)

from _synth import mixed, numeric


@pytest.fixture(scope="module")
def data():
    return mixed(n=400, seed=0)


@pytest.fixture(scope="module")
def logistic(data):
    return Recipe("logistic").fit(data, seed=1)


@pytest.fixture(scope="module")
def forest(data):
    return Recipe("forest", {"n_trees": 15, "max_depth": 6}).fit(data, seed=1)


# ---------------------------------------------------------------- logistic

@given(seed=st.integers(0, 10_000), l2=st.sampled_from([0.0, 1e-4, 0.1]))
@settings(max_examples=30, deadline=None)
def test_log_loss_gradient_matches_finite_differences(seed, l2):
    rng = np.random.default_rng(seed)
    Z = rng.normal(size=(12, 4))
    y = rng.integers(0, 2, 12).astype(float)
    w, b = rng.normal(size=4), float(rng.normal())
    _, gw, gb = log_loss_and_grad(w, b, Z, y, l2)
    h = 1e-6
    num = np.empty(5)
    for i in range(5):
        e = np.zeros(5); e[i] = h
        f = lambda v: log_loss_and_grad(v[:4], v[4], Z, y, l2)[0]
        v = np.append(w, b)
        num[i] = (f(v + e) - f(v - e)) / (2 * h)
    analytic = np.append(gw, gb)
    scale = np.maximum(np.abs(num), 1e-3)
    assert np.max(np.abs(analytic - num) / scale) < 1e-5


def test_logistic_learns_and_is_deterministic(data):
    m1 = train_logistic(data, LogisticHyper(), seed=3)
    m2 = train_logistic(data, LogisticHyper(), seed=3)
    np.testing.assert_array_equal(m1.weights, m2.weights)
    assert evaluate(m1, data).accuracy > 0.9
    p = m1.predict_proba(data.X)
    assert ((p >= 0) & (p <= 1)).all()


def test_logistic_one_hot_ignores_code_order():
    # a categorical whose middle code is the positive one: an ordinal model
    # cannot fit it, a one-hot model can
    codes = np.tile([0, 1, 2], 100).astype(float)
    y = (codes == 1).astype(np.int64)
    d = dataset_from_arrays(codes[:, None], y, ["c"], ["categorical"])
    m = train_logistic(d, LogisticHyper(epochs=3000))
    assert evaluate(m, d).accuracy == 1.0


def test_width_mismatch_raises(logistic):
    with pytest.raises(ValueError, match="columns"):
        logistic.predict_proba(np.zeros((2, 3)))


# ---------------------------------------------------------------- threshold

def _f1(p, y, t):
    pred = p >= t
    tp = np.sum(pred & (y == 1)); fp = np.sum(pred & (y == 0)); fn = np.sum(~pred & (y == 1))
    return 2 * tp / (2 * tp + fp + fn) if 2 * tp + fp + fn else 0.0


@given(p=arrays(float, st.integers(1, 30), elements=st.floats(0, 1).map(lambda v: round(v, 2))),
       data=st.data())
@settings(max_examples=150, deadline=None)
def test_best_threshold_matches_enumeration(p, data):
    y = np.array(data.draw(st.lists(st.integers(0, 1), min_size=len(p), max_size=len(p))))
    t, f = best_f1_threshold(p, y)
    cands = sorted(set(p.tolist()) | {0.5})
    scores = [_f1(p, y, c) for c in cands]
    best = max(scores)
    assert f == pytest.approx(best, abs=1e-12)
    tied = [c for c, s in zip(cands, scores) if abs(s - best) < 1e-12]
    nearest = min(tied, key=lambda c: (abs(c - 0.5), c))
    assert t == nearest


def test_threshold_examples():
    p = np.array([0.1, 0.4, 0.6, 0.9]); y = np.array([0, 0, 1, 1])
    t, f = best_f1_threshold(p, y)
    assert 0.4 < t <= 0.6 and f == 1.0
    t, _ = best_f1_threshold(np.full(6, 0.7), np.array([0, 1, 0, 1, 1, 0]))
    assert t == 0.5


def test_threshold_single_class_warns(logistic, data):
    one = data.subset(np.flatnonzero(data.y == 1))
    with pytest.warns(UserWarning):
        m = tune_threshold(logistic, one)
    assert m.decision_threshold == 0.5


# ---------------------------------------------------------------- evaluation

def test_eval_report_example():
    r = EvalReport(tp=3, fp=1, tn=4, fn=2)
    assert r.accuracy == pytest.approx(0.7)
    assert r.f1 == pytest.approx(2 * 3 / (2 * 3 + 1 + 2))


def test_evaluate_perfect_and_all_wrong():
    X = np.array([[0.0], [1.0], [2.0], [3.0]]); y = np.array([0, 0, 1, 1])
    d = dataset_from_arrays(X, y, ["a"])
    m = train_forest(d, ForestHyper(n_trees=1, max_depth=16, feature_subsample=None,
                                    bootstrap=False), seed=0)
    assert evaluate(m, d).accuracy == 1.0 and evaluate(m, d).f1 == 1.0
    flipped = dataset_from_arrays(X, 1 - y, ["a"])
    assert evaluate(m, flipped).accuracy == 0.0


# ---------------------------------------------------------------- forest

def _traverse(m, x):
    votes = 0
    for r in m.roots:
        node = r
        while m.left[node] >= 0:
            node = m.left[node] if np.float32(x[m.feature[node]]) <= m.threshold[node] else m.right[node]
        votes += m.leaf_class[node]
    return votes / len(m.roots)


def test_forest_vote_fraction_matches_plain_traversal(forest, data):
    p = forest.predict_proba(data.X[:50])
    expected = [_traverse(forest, x) for x in data.X[:50]]
    np.testing.assert_array_equal(p, expected)


def test_single_unpruned_tree_fits_training_data():
    d = numeric(n=150, d=3, seed=2)
    m = train_forest(d, ForestHyper(n_trees=1, max_depth=None, feature_subsample=None,
                                    bootstrap=False), seed=0)
    assert evaluate(m, d).accuracy == 1.0


def test_depth_zero_gives_majority_votes():
    d = numeric(n=100, d=2, seed=0, w=[1.0, 0.0])
    m = train_forest(d, ForestHyper(n_trees=7, max_depth=0), seed=0)
    p = m.predict_proba(d.X)
    assert np.unique(p).size == 1


def test_forest_is_deterministic(data):
    a = Recipe("forest", {"n_trees": 5}).fit(data, 9)
    b = Recipe("forest", {"n_trees": 5}).fit(data, 9)
    np.testing.assert_array_equal(a.threshold, b.threshold)
    np.testing.assert_array_equal(a.predict_proba(data.X), b.predict_proba(data.X))


# ---------------------------------------------------------------- dropout / ensemble

@pytest.mark.parametrize("kind", ["logistic", "forest"])
def test_dropout_is_blind_to_dropped_columns(kind, data):
    rec = Recipe(kind, {"n_trees": 10} if kind == "forest" else {})
    m = drop_features(rec, data, {"group", "x2"}, seed=4)
    assert "group" not in m.active_features and m.dropped == ("x2", "group")
    X = data.X.copy()
    rng = np.random.default_rng(0)
    for name in m.dropped:
        j = data.schema.index(name)
        X[:, j] = rng.permutation(X[:, j])
    np.testing.assert_array_equal(m.predict_proba(X), m.predict_proba(data.X))


def test_drop_nothing_matches_base(data):
    rec = Recipe("logistic")
    a = drop_features(rec, data, set(), seed=2)
    b = rec.fit(data, 2)
    np.testing.assert_array_equal(a.predict_proba(data.X), b.predict_proba(data.X))
    assert a.decision_threshold == b.decision_threshold


def test_drop_everything_raises(data):
    with pytest.raises(ValueError, match="every feature"):
        drop_features(Recipe(), data, set(data.feature_names), seed=0)


def test_ensemble_is_mean_of_members(data, logistic, forest):
    d1 = drop_features(Recipe(), data, {"group"}, seed=1)
    members = [logistic, forest, d1]
    e = ensemble_average(members)
    X = np.random.default_rng(5).normal(size=(200, data.X.shape[1]))
    X[:, 6] = np.random.default_rng(6).integers(0, 2, 200)
    X[:, 7] = np.random.default_rng(7).integers(0, 3, 200)
    direct = sum(m.predict_proba(X) for m in members) / 3
    assert np.max(np.abs(e.predict_proba(X) - direct)) <= 1e-12
    single = ensemble_average([logistic])
    np.testing.assert_array_equal(single.predict_proba(X), logistic.predict_proba(X))
    assert single.decision_threshold == logistic.decision_threshold


def test_ensemble_arithmetic_example():
    d = numeric(n=10, d=1)

    class Const:
        def __init__(self, v):
            self.v = v
            self.input_features = ("f0",)
            self.active_features = ("f0",)
            self.decision_threshold = 0.5

        def predict_proba(self, X):
            return np.full(len(X), self.v)

    e = ensemble_average([Const(v) for v in (0.2, 0.4, 0.6, 0.8)])
    assert e.predict_proba(d.X)[0] == 0.5
    with pytest.raises(ValueError):
        ensemble_average([])


# ---------------------------------------------------------------- persistence

def test_round_trip_is_bit_exact(tmp_path, data, logistic, forest):
    d1 = drop_features(Recipe("forest", {"n_trees": 4}), data, {"colour"}, seed=1)
    models = [logistic, forest, d1, ensemble_average([logistic, forest, d1])]
    for i, m in enumerate(models):
        path = tmp_path / f"m{i}.json"
        save_model(m, path)
        back = load_model(path)
        assert type(back) is type(m)
        np.testing.assert_array_equal(back.predict_proba(data.X), m.predict_proba(data.X))
        assert back.decision_threshold == m.decision_threshold
        assert model_to_dict(model_from_dict(model_to_dict(m))) == model_to_dict(m)


def test_recipe_rejects_unknown_parameters():
    with pytest.raises(ValueError, match="unknown"):
        Recipe("logistic", {"depth": 3})
    with pytest.raises(ValueError):
        Recipe("svm")

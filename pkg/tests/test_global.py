import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from limeout.data import compute_stats
from limeout.global_explain import (FAIR, SINGLE_SENSITIVE, UNFAIR, GlobalConfig,
                                    GlobalExplanation, aggregate, assess_fairness, lime_global,
                                    submodular_pick)
from limeout.lime import Discretizer, LimeConfig, LocalExplanation

from _synth import mixed


def greedy_trace(W, budget):
    """Step-by-step greedy coverage, written with sets; stops once everything is covered."""
    n, d = len(W), len(W[0])
    imp = [math.sqrt(sum(abs(W[i][j]) for i in range(n))) for j in range(d)]
    covered, picked = set(), []
    while len(picked) < min(budget, n):
        best, best_gain = None, -1.0
        for i in range(n):
            if i in picked:
                continue
            gain = sum(imp[j] for j in range(d) if W[i][j] != 0 and j not in covered)
            if gain > best_gain:
                best, best_gain = i, gain
        picked.append(best)
        covered |= {j for j in range(d) if W[best][j] != 0}
        if all(j in covered or imp[j] == 0 for j in range(d)):
            break
    return picked


def check_against_oracle(W, budget):
    picks = submodular_pick(W, budget)
    trace = greedy_trace(W.tolist(), budget)
    assert picks[: len(trace)] == trace
    rest = [i for i in range(len(W)) if i not in trace]
    assert picks[len(trace):] == rest[: len(picks) - len(trace)]
    assert len(picks) == min(budget, len(W))


@given(seed=st.integers(0, 2**32 - 1), budget=st.integers(1, 8),
       density=st.floats(0.1, 0.9))
@settings(max_examples=200, deadline=None)
def test_pick_matches_greedy_oracle(seed, budget, density):
    rng = np.random.default_rng(seed)
    W = rng.normal(size=(8, 6)) * (rng.random((8, 6)) < density)
    check_against_oracle(W, budget)


def test_pick_small_cases():
    assert submodular_pick(np.array([[0.3, -1.0]]), 5) == [0]
    W = np.array([[1.0, 0, 0], [0, 2.0, 0], [0, 0, 0.5], [1.0, 1.0, 0]])
    assert sorted(submodular_pick(W, 4)) == [0, 1, 2, 3]
    # row 3 covers the two heaviest features at once
    assert submodular_pick(W, 1) == [3]
    with pytest.raises(ValueError):
        submodular_pick(W, 0)


def _exp(features, coef):
    return LocalExplanation(np.zeros(len(features)), tuple(features), np.array(coef, float),
                            0.0, 0.5, 0.0)


def test_aggregate_is_linear():
    f = ("a", "b", "c")
    e1, e2 = _exp(f, [0.5, -1.0, 0.25]), _exp(f, [1.0, 1.0, -2.0])
    np.testing.assert_array_equal(aggregate([e1, e1], f), 2 * aggregate([e1], f))
    np.testing.assert_array_equal(aggregate([e1, e2], f), [1.5, 0.0, -1.75])
    np.testing.assert_array_equal(aggregate([e1, e2], f, "abs"), [1.5, 2.0, 2.25])


def test_ranking_uses_magnitude_and_schema_order_on_ties():
    g = GlobalExplanation(("a", "b", "c", "d"), np.array([1.0, -3.0, 3.0, 0.5]), (0,))
    assert g.ranking == ["b", "c", "a", "d"]
    assert g.rank_of("a") == 3 and g.rank_of("zz") is None
    back = GlobalExplanation.from_dict(g.to_dict())
    assert back.ranking == g.ranking


def test_assess_fairness_verdicts():
    g = GlobalExplanation(("a", "s1", "b", "s2"), np.array([4.0, 3.0, 2.0, 1.0]), ())
    assert assess_fairness(g, {"s1", "s2"}, k=4).verdict == UNFAIR
    v = assess_fairness(g, {"s1", "s2"}, k=2)
    assert v.verdict == SINGLE_SENSITIVE and v.sensitive_in_top_k == ("s1",)
    assert assess_fairness(g, set(), k=4).verdict == FAIR
    assert assess_fairness(g, {"s2"}, k=1).verdict == FAIR
    with pytest.raises(ValueError):
        assess_fairness(g, {"s1"}, k=0)


@given(contrib=st.lists(st.floats(-5, 5), min_size=5, max_size=5),
       sens=st.sets(st.sampled_from("abcde")), k=st.integers(1, 4))
def test_verdict_monotone_in_k(contrib, sens, k):
    g = GlobalExplanation(tuple("abcde"), np.array(contrib), ())
    small = set(assess_fairness(g, sens, k).sensitive_in_top_k)
    big = set(assess_fairness(g, sens, k + 1).sensitive_in_top_k)
    assert small <= big


@pytest.fixture(scope="module")
def setup():
    d = mixed(n=300, seed=2)
    return d, Discretizer(compute_stats(d))


def test_single_feature_rule_ranks_first(setup):
    d, disc = setup

    class Rule:
        input_features = tuple(d.feature_names)
        active_features = input_features

        def predict_proba(self, X):
            return (X[:, 3] > 0.2).astype(float)

    cfg = GlobalConfig(candidates=30, budget=10, lime=LimeConfig(n_samples=500))
    g = lime_global(Rule(), d, disc, cfg, seed=0)
    assert g.ranking[0] == "x3"
    assert len(g.picked_instances) == 10


def test_lime_global_is_deterministic_and_random_pick_works(setup):
    d, disc = setup
    from limeout.models import Recipe
    m = Recipe().fit(d, 0)
    cfg = GlobalConfig(candidates=25, budget=5, lime=LimeConfig(n_samples=300))
    a, b = lime_global(m, d, disc, cfg, 3), lime_global(m, d, disc, cfg, 3)
    np.testing.assert_array_equal(a.contributions, b.contributions)
    assert a.picked_instances == b.picked_instances
    assert sorted(a.ranking) == sorted(m.active_features)
    r = lime_global(m, d, disc, GlobalConfig(candidates=25, budget=5, pick="random",
                                             lime=LimeConfig(n_samples=300)), 3)
    assert len(r.picked_instances) == 5
    with pytest.raises(ValueError):
        GlobalConfig(pick="best")

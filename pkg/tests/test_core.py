import numpy as np
import pytest

from limeout.core import (ConfigurationError, LimeOutConfig, build_dropout_pool, run_limeout,
                          significance_test)
from limeout.data import train_test_split
from limeout.global_explain import FAIR, GlobalConfig, UNFAIR
from limeout.lime import LimeConfig
from limeout.models import Recipe, ensemble_average, evaluate

from _synth import mixed

# Paired two-sided t-test on a - b. Frozen before the implementation existed:
# computed with mpmath at 50 digits (regularised incomplete beta for p) and
# cross-checked against scipy.stats.ttest_rel (agreement ~1e-14).
T_ORACLE = [
    ([0.8, 0.82, 0.81], [0.84, 0.85, 0.86], -6.928203230275509, 0.02020410288672876),
    ([0.6569, 0.9], [0.6665, 0.8998], -0.9591836734693877, 0.5132609935998004),
    ([0.6797, 0.6337, 0.8358], [0.6815, 0.6314, 0.8418], -0.7651444963218363, 0.5241438192863231),
    ([0.6587, 0.7525, 0.8032, 0.8347], [0.6681, 0.7482, 0.7989, 0.825], 0.5455197197734307,
     0.6233417111085117),
    ([0.7783, 0.6471, 0.8801, 0.7939, 0.6384], [0.7746, 0.6541, 0.8769, 0.8013, 0.6414],
     -0.8771345213804712, 0.42993641809562166),
    ([0.808, 0.6164, 0.6966, 0.6885, 0.8769, 0.6442], [0.83, 0.6018, 0.7103, 0.6833, 0.8732, 0.649],
     -0.5171632943967909, 0.6270981315755028),
    ([0.7475, 0.6216, 0.7298, 0.7593, 0.7093, 0.6947, 0.8333, 0.7908],
     [0.7459, 0.6266, 0.7297, 0.776, 0.7062, 0.7003, 0.8334, 0.8043],
     -1.7632066903459285, 0.12123333334012994),
    ([0.699, 0.7406, 0.8844, 0.8826, 0.6483, 0.8269, 0.6276, 0.8341, 0.7504, 0.7142],
     [0.7128, 0.7534, 0.8927, 0.8967, 0.6627, 0.8208, 0.6545, 0.8386, 0.7493, 0.7252],
     -3.3921126149943808, 0.007972358249673796),
    ([0.8326, 0.7279, 0.8948, 0.6554, 0.7053, 0.6304, 0.6045, 0.7635, 0.7583, 0.7319],
     [0.8299, 0.7368, 0.9191, 0.6504, 0.7219, 0.6462, 0.5983, 0.7704, 0.7685, 0.7278],
     -1.9261479126121932, 0.08620314106318439),
    ([0.7689, 0.6328, 0.8604, 0.7546, 0.703, 0.7473, 0.7184, 0.7688, 0.6314, 0.7202, 0.7811,
      0.8033, 0.6414, 0.8057, 0.8298],
     [0.7863, 0.6332, 0.8659, 0.7736, 0.6954, 0.7542, 0.7332, 0.7632, 0.6294, 0.7127, 0.7979,
      0.8064, 0.6432, 0.7966, 0.8242],
     -1.2634859978201527, 0.22705010477744006),
]


@pytest.mark.parametrize("a,b,t,p", T_ORACLE)
def test_t_test_matches_oracle(a, b, t, p):
    s = significance_test(a, b)
    assert abs(s.statistic - t) < 1e-6
    assert abs(s.p_value - p) < 1e-6
    assert s.runs == len(a) and not s.degenerate


def test_t_test_edge_cases():
    s = significance_test([0.7, 0.8, 0.9], [0.7, 0.8, 0.9])
    assert s.statistic == 0.0 and s.p_value == 1.0
    s = significance_test([2.0, 3.0, 4.0, 5.0], [1.0, 2.0, 3.0, 4.0])
    assert s.degenerate and s.p_value == 0.0 and s.statistic == np.inf
    with pytest.raises(ValueError):
        significance_test([0.5], [0.4])
    with pytest.raises(ValueError):
        significance_test([0.5, 0.6], [0.4])


def test_config_validation():
    with pytest.raises(ConfigurationError, match="sensitive"):
        LimeOutConfig(sensitive=())
    with pytest.raises(ConfigurationError, match="k"):
        LimeOutConfig(sensitive=("a",), k=0)
    with pytest.raises(ConfigurationError, match="runs"):
        LimeOutConfig(sensitive=("a",), runs=1)


@pytest.fixture(scope="module")
def biased():
    return mixed(n=500, seed=4, biased=True)


def test_pool_has_one_model_per_flagged_feature_plus_one(biased):
    pool = build_dropout_pool(Recipe(), biased, ["group", "colour"], {"group": ("x5",)}, seed=0)
    assert [m.dropped for m in pool] == [("x5", "group"), ("colour",), ("x5", "group", "colour")]
    single = build_dropout_pool(Recipe(), biased, ["group"], {}, seed=0)
    assert [m.dropped for m in single] == [("group",), ("group",)]
    with pytest.raises(ConfigurationError):
        build_dropout_pool(Recipe(), biased, [], {}, seed=0)
    with pytest.raises(ConfigurationError, match="every feature"):
        build_dropout_pool(Recipe(), biased, ["group"],
                           {"group": tuple(n for n in biased.feature_names if n != "group")},
                           seed=0)


def test_identical_members_give_identical_ensemble_eval(biased):
    m = Recipe().fit(biased, 0)
    e = ensemble_average([m, m, m])
    assert evaluate(e, biased) == evaluate(m, biased)
    p = e.predict_proba(biased.X)
    assert ((p >= 0) & (p <= 1)).all()


def small_cfg(aggregate="signed", **kw):
    explain = GlobalConfig(candidates=40, budget=10, aggregate=aggregate,
                           lime=LimeConfig(n_samples=400))
    return LimeOutConfig(explain=explain, **{"k": 3, "runs": 3, **kw})


def test_biased_model_is_repaired(biased):
    tr, te = train_test_split(biased, 0.25, 0)
    cfg = small_cfg(sensitive=("group", "colour"), force_repair=True)
    r = run_limeout(Recipe(), tr, te, cfg)
    assert "group" in r.verdict_before.sensitive_in_top_k
    assert r.action == "ensemble"
    i = len(r.flagged)
    assert len(r.pool) == i + 1
    assert r.significance.runs == 3 and len(r.significance.member_accuracy) == 3
    g0, g1 = r.global_before, r.global_after
    after = dict(g1.table())
    assert abs(after.get("group", 0.0)) < abs(g0.contribution("group"))
    d = r.to_dict()
    assert d["schema_version"] == 1 and d["config"]["seed"] == cfg.seed


@pytest.mark.parametrize("seed", [0, 1, 4])
def test_unbiased_model_is_left_alone(seed):
    # signed sums let a skewed, unused column outrank symmetric strong ones
    # (their per-instance signs cancel), so rank by magnitude here
    d = mixed(n=2000, seed=seed, biased=False)
    tr, te = train_test_split(d, 0.25, 0)
    r = run_limeout(Recipe(), tr, te, small_cfg(sensitive=("group", "colour"), k=2,
                                                 aggregate="abs"))
    assert r.verdict_before.verdict == FAIR and r.action == "none"
    assert r.global_after is r.global_before and r.final_model is r.baseline
    assert r.pool == () and r.significance is None


def test_single_sensitive_takes_no_action_unless_forced(biased):
    tr, te = train_test_split(biased, 0.25, 0)
    r = run_limeout(Recipe(), tr, te, small_cfg(sensitive=("group",)))
    assert r.verdict_before.verdict == "single-sensitive" and r.action == "none"
    forced = run_limeout(Recipe(), tr, te, small_cfg(sensitive=("group",), force_repair=True,
                                                      runs=0))
    assert forced.action == "ensemble" and len(forced.pool) == 2


def test_run_is_reproducible(biased):
    tr, te = train_test_split(biased, 0.25, 1)
    cfg = small_cfg(sensitive=("group", "colour"), seed=11, runs=2)
    a = run_limeout(Recipe(), tr, te, cfg).to_dict()
    b = run_limeout(Recipe(), tr, te, cfg).to_dict()
    assert a == b


def test_unknown_sensitive_feature(biased):
    tr, te = train_test_split(biased, 0.25, 0)
    with pytest.raises(ConfigurationError, match="Gender"):
        run_limeout(Recipe(), tr, te, small_cfg(sensitive=("Gender",)))

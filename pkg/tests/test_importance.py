import dataclasses
import json
from itertools import combinations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ugbm.booster import GBMConfig, fit
from ugbm.data import Dataset, synth_example1
from ugbm.demos import independent_split_trials
from ugbm.errors import EmptyOob, WrongMode
from ugbm.importance import (
    Method,
    gain_importance,
    oob_gradients,
    permutation_importance,
    refit_validation_gain,
    split_score_importance,
    split_unbiased_gain,
    unbiased_gain,
)
from ugbm.loss import LossKind, grad_hess
from ugbm.splitter import Mode

CLASSIC = GBMConfig(mode=Mode.CLASSIC, n_estimators=12, min_data_in_leaf=5, max_leaves=8, learning_rate=0.1)


def _data(n=400, seed=0, m=4):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, m))
    y = X[:, 0] - 0.5 * X[:, 1] + 0.5 * rng.normal(size=n)
    return Dataset.from_arrays(X, y)


def test_gain_importance_matches_recomputed_split_gains():
    ds = _data()
    preds = []
    model = fit(ds, CLASSIC, callback=lambda t, p: preds.append(p.copy()))
    n = ds.n_rows
    expected = np.zeros(ds.n_features)
    state = [np.full(n, model.base_score)] + preds[:-1]
    for tree, pred in zip(model.trees, state):
        g = pred - ds.target
        reach = tree.route(ds.X)
        for node in tree.internal_nodes():
            L, R = reach[node.left], reach[node.right]
            P = reach[node.id]
            # h = 1 for squared error
            s = g[L].sum() ** 2 / len(L) + g[R].sum() ** 2 / len(R) - g[P].sum() ** 2 / len(P)
            expected[node.split.feature] += s / (2 * n)
    report = gain_importance(model)
    np.testing.assert_allclose(report.values, expected, rtol=1e-9, atol=1e-15)
    np.testing.assert_allclose(report.values, model.importance_classic, rtol=1e-9, atol=1e-15)


def test_split_unbiased_gain_hand_value():
    # k = 1; parent ratio is 1 whichever row is drawn
    v = split_unbiased_gain(
        4.0, 3.0, 1.0, 2,
        (np.array([1.0, 1.0]), np.ones(2)), (np.array([2.0]), np.ones(1)), (np.array([0.0]), np.ones(1)),
        rng=0,
    )
    # L(I) = -4 * 1 / 4, L(L) = -3 * 2 / 4, L(R) = 0
    assert v == 0.5


def test_split_unbiased_gain_zero_for_constant_ratio():
    g = np.array([2.0, 2.0, 2.0, 2.0])
    h = np.array([1.0, 1.0, 1.0, 1.0])
    v = split_unbiased_gain(5.0, 2.0, 3.0, 10, (g, h), (g[:2], h[:2]), (g[2:], h[2:]), rng=1)
    assert v == pytest.approx(0.0, abs=1e-15)


def test_split_unbiased_gain_skips_empty_child():
    g = np.ones(3)
    assert split_unbiased_gain(1.0, 1.0, 0.0, 5, (g, g), (g, g), (g[:0], g[:0])) is None
    z = np.zeros(2)
    assert split_unbiased_gain(1.0, 1.0, 0.0, 5, (z, z), (z[:1], z[:1]), (z[1:], z[1:])) is None


@settings(max_examples=100, deadline=None)
@given(
    st.lists(st.integers(-20, 20), min_size=2, max_size=7),
    st.integers(1, 6),
    st.integers(0, 2**32 - 1),
)
def test_subsample_draw_is_a_size_k_subset(gs, n_left, seed):
    g = np.array(gs, dtype=float)
    h = np.ones_like(g)
    n_left = min(n_left, len(g) - 1)
    left, right = np.arange(n_left), np.arange(n_left, len(g))
    k = min(len(left), len(right))
    v = split_unbiased_gain(1.0, 0.5, 0.5, 3, (g, h), (g[left], h[left]), (g[right], h[right]), rng=seed)
    # every admissible draw: a size-k subset for the parent and for each child
    possible = set()
    for P in combinations(range(len(g)), k):
        for Lc in combinations(left, k):
            for Rc in combinations(right, k):
                rp, rl, rr = (g[list(ix)].sum() / k for ix in (P, Lc, Rc))
                possible.add(round((-rp + 0.5 * rl + 0.5 * rr) / 6, 9))
    assert round(v, 9) in possible


@pytest.mark.parametrize("loss", [LossKind.SQUARED_ERROR, LossKind.LOGISTIC])
def test_unbiased_split_gain_has_zero_mean_on_independent_feature(loss):
    trials = independent_split_trials(4000, n=60, loss=loss, seed=11)
    m, se = trials[:, 0].mean(), trials[:, 0].std(ddof=1) / np.sqrt(len(trials))
    assert abs(m) < 4 * se
    # the in-sample gain and the held-out refit are biased in opposite directions
    se_refit = trials[:, 2].std(ddof=1) / np.sqrt(len(trials))
    assert trials[:, 2].mean() < -4 * se_refit
    assert trials[:, 3].mean() > 0


def test_refit_validation_gain_hand_value():
    # weights -G/H: parent -1, left -2, right 0
    sums = ((4.0, 4.0), (4.0, 2.0), (0.0, 2.0))
    ones = np.ones(2)
    v = refit_validation_gain(sums, (np.array([1.0, 1.0]), ones), (np.array([1.0]), ones[:1]), (np.array([0.0]), ones[:1]), 2)
    parent = (2 * -1 + 0.5 * 2 * 1) / 2
    left = (1 * -2 + 0.5 * 1 * 4) / 2
    assert v == pytest.approx(parent - left)


def test_oob_gradients_follow_the_prefix_model():
    ds = _data(seed=2)
    model = fit(ds, CLASSIC)
    oob = _data(n=150, seed=3)
    X = oob.X
    outputs = model.tree_outputs(X)
    prefix = np.vstack([np.zeros(X.shape[0]), np.cumsum(outputs, axis=0)[:-1]])
    for t, tree, gh in oob_gradients(model, X, oob.target):
        assert tree is model.trees[t]
        expected = grad_hess(model.loss, model.base_score + model.learning_rate * prefix[t], oob.target)
        np.testing.assert_allclose(gh.g, expected.g, rtol=1e-12, atol=1e-12)
        np.testing.assert_array_equal(gh.h, expected.h)


def test_unbiased_gain_is_deterministic_and_averages_repeats():
    ds, oob = _data(seed=4), _data(n=200, seed=5)
    model = fit(ds, CLASSIC)
    a = unbiased_gain(model, oob, repeats=3, seed=9)
    b = unbiased_gain(model, oob, repeats=3, seed=9)
    np.testing.assert_array_equal(a.values, b.values)
    assert a.std is not None and a.repeats == 3
    c = unbiased_gain(model, oob, repeats=1, seed=10)
    assert not np.array_equal(a.values, c.values)
    assert a.values[0] > 0


def test_single_tree_unbiased_gain_is_centred_for_noise_features():
    # one tree, so held-out gradients do not depend on earlier fitted noise
    config = dataclasses.replace(CLASSIC, n_estimators=1, max_leaves=31, min_data_in_leaf=10)
    vals = []
    for r in range(200):
        rng = np.random.default_rng([77, r])
        train = synth_example1(1000, rng)
        oob = synth_example1(1000, rng)
        vals.append(unbiased_gain(fit(train, config), oob, seed=r).values)
    vals = np.array(vals)
    m = vals.mean(axis=0)
    se = vals.std(axis=0, ddof=1) / np.sqrt(len(vals))
    assert abs(m[1]) < 4 * se[1]
    assert abs(m[2]) < 4 * se[2]
    assert m[0] > 4 * se[0]


def test_mode_and_input_errors():
    ds = _data(n=120)
    unb = fit(ds, dataclasses.replace(CLASSIC, mode=Mode.UNBIASED))
    with pytest.raises(WrongMode):
        gain_importance(unb)
    assert split_score_importance(unb).method == Method.SPLIT_SCORE
    classic = fit(ds, CLASSIC)
    with pytest.raises(WrongMode):
        split_score_importance(classic)
    with pytest.raises(EmptyOob):
        unbiased_gain(classic, ds.subset(np.arange(0)))
    with pytest.raises(ValueError):
        permutation_importance(classic, ds, metric="mae")


def test_permutation_unused_feature_is_exactly_zero():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(300, 3))
    y = (X[:, 0] > 0).astype(float)
    ds = Dataset.from_arrays(X, y)
    model = fit(ds, dataclasses.replace(CLASSIC, loss=LossKind.LOGISTIC, max_leaves=2, n_estimators=5))
    used = {n.split.feature for t in model.trees for n in t.internal_nodes()}
    assert used == {0}
    rep = permutation_importance(model, ds, metric="auc", repeats=2, seed=3)
    assert rep.values[1] == 0.0 and rep.values[2] == 0.0
    # a perfect separator loses about half its AUC when shuffled
    assert rep.values[0] == pytest.approx(0.5, abs=0.08)
    again = permutation_importance(model, ds, metric="auc", repeats=2, seed=3)
    np.testing.assert_array_equal(rep.values, again.values)


def test_permutation_rmse_sign():
    ds = _data(seed=6)
    model = fit(ds, CLASSIC)
    rep = permutation_importance(model, ds, metric="rmse", seed=0)
    assert rep.values[0] > 0
    assert rep.values[0] > rep.values[2]


def test_report_serialization():
    ds = _data(n=120)
    rep = gain_importance(fit(ds, CLASSIC))
    lines = rep.to_csv().splitlines()
    assert lines[0] == "feature,method,value,repeats"
    assert len(lines) == 1 + ds.n_features
    assert lines[1].startswith("x0,gain,")
    doc = json.loads(rep.to_json())
    assert doc["method"] == "gain" and doc["features"] == list(ds.feature_names)
    assert rep.ranking()[0] == 0

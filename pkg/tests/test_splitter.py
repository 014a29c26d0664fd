from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from ugbm.data import Dataset, FeatureColumn, PartitionAssignment
from ugbm.errors import InvalidCandidate, ZeroHessian
from ugbm.loss import GradHess
from ugbm.splitter import (
    Mode,
    NodeStats,
    SplitDescriptor,
    SplitterConfig,
    best_split_for_feature,
    classic_gain,
    find_split,
    leaf_loss,
    score1,
    score2,
    score3,
)

CLASSIC = SplitterConfig(Mode.CLASSIC, min_data_in_leaf=1, n_total=1)


def same_candidate(a, b):
    if a is None or b is None:
        return a is b
    return (
        a.descriptor == b.descriptor
        and (a.score1, a.score2, a.score3) == (b.score1, b.score2, b.score3)
        and np.array_equal(a.left_stats.G, b.left_stats.G)
        and np.array_equal(a.right_stats.n, b.right_stats.n)
    )


def gh(g, h=None):
    g = np.asarray(g, dtype=float)
    return GradHess(g, np.ones_like(g) if h is None else np.asarray(h, dtype=float))


def test_classic_gain_hand_value():
    # g = [1, -1], h = [1, 1], n = 2: (1 + 1 - 0) / 4
    assert classic_gain((1, 1), (-1, 1), (0, 2), 2) == 0.5


def test_classic_gain_zero_when_ratios_match():
    assert classic_gain((2, 4), (1, 2), (3, 6), 10) == pytest.approx(0.0, abs=1e-15)


def test_classic_gain_rejects_zero_hessian():
    with pytest.raises(ZeroHessian):
        classic_gain((1, 0), (1, 1), (2, 1), 2)


@settings(max_examples=300, deadline=None)
@given(st.lists(st.tuples(st.floats(-5, 5), st.floats(0.01, 5), st.booleans()), min_size=2, max_size=30))
def test_classic_gain_non_negative(rows):
    g = np.array([r[0] for r in rows])
    h = np.array([r[1] for r in rows])
    left = np.array([r[2] for r in rows])
    if left.all() or not left.any():
        return
    val = classic_gain((g[left].sum(), h[left].sum()), (g[~left].sum(), h[~left].sum()), (g.sum(), h.sum()), len(g))
    assert val >= -1e-12


def test_leaf_loss():
    assert leaf_loss(3.0, 2.0, 10) == pytest.approx(-0.225, rel=1e-15)
    assert leaf_loss(0.0, 2.0, 10) == 0.0
    assert leaf_loss(-4.0, 0.5, 3) < 0
    with pytest.raises(ZeroHessian):
        leaf_loss(1.0, 0.0, 3)


def test_score1_hand_value():
    L = NodeStats.of([1.0], [1.0])
    R = NodeStats.of([-1.0], [1.0])
    assert score1(L, R, L + R) == 2.0


def test_score1_zero_for_equal_ratios():
    L = NodeStats.of([1.0], [2.0])
    R = NodeStats.of([3.0], [6.0])
    assert score1(L, R, L + R) == pytest.approx(0.0, abs=1e-14)


def test_score2_hand_value():
    L = NodeStats.of([1.0, 2.0], [1.0, 1.0])
    R = NodeStats.of([-1.0, -2.0], [1.0, 1.0])
    assert score2(L, R, L + R) == 4.0


def test_score2_zero_when_validation_ratio_constant():
    L = NodeStats.of([1.5, 1.0, 0], [1.0, 2.0, 0])
    R = NodeStats.of([-0.25, 3.0, 0], [1.0, 6.0, 0])
    assert score2(L, R, L + R) == pytest.approx(0.0, abs=1e-14)


def test_score3_zero_when_second_validation_ratio_constant():
    L = NodeStats.of([1.5, 1.0, 2.0], [1.0, 2.0, 4.0])
    R = NodeStats.of([-0.25, 3.0, 1.0], [1.0, 6.0, 2.0])
    assert score3(L, R, L + R) == pytest.approx(0.0, abs=1e-14)


def test_score3_hand_value():
    # (G1+G2) * G3 / H3 per side: (1+2)*1/1 + (-1-2)*(-1)/1 - 0 = 6
    L = NodeStats.of([1.0, 2.0, 1.0], [1.0, 1.0, 1.0])
    R = NodeStats.of([-1.0, -2.0, -1.0], [1.0, 1.0, 1.0])
    assert score3(L, R, L + R) == 6.0


def test_score3_merged_is_score2():
    L = NodeStats.of([1.3, 2.1], [1.0, 0.7])
    R = NodeStats.of([-1.1, -0.4], [2.0, 1.9])
    assert score3(L, R, L + R, merge_validation=True) == score2(L, R, L + R)


def test_scores_reject_empty_partitions():
    L = NodeStats.of([1.0], [1.0])
    R = NodeStats.of([-1.0], [1.0])
    with pytest.raises(InvalidCandidate):
        score2(L, R, L + R)
    with pytest.raises(InvalidCandidate):
        score3(L, R, L + R)
    with pytest.raises(InvalidCandidate):
        score1(NodeStats.of([1.0], [0.0]), R, R)


def _one_feature(values, categorical=None):
    if categorical is None:
        return FeatureColumn.numeric(values)
    return FeatureColumn.categorical(values, categorical)


def test_best_split_for_feature_numeric_hand_value():
    col = _one_feature([1.0, 1.0, 2.0, 2.0])
    cand = best_split_for_feature(np.arange(4), col, gh([1, 1, -1, -1]), PartitionAssignment.single(4), CLASSIC)
    assert cand.descriptor.threshold == 1.5
    # 2^2/2 + (-2)^2/2 - 0
    assert cand.score1 == 4.0


def test_best_split_for_feature_constant_is_none():
    col = _one_feature([3.0] * 5)
    assert best_split_for_feature(np.arange(5), col, gh([1, -1, 1, -1, 2]), PartitionAssignment.single(5), CLASSIC) is None


def test_best_split_for_feature_categorical_orders_by_ratio():
    # code 0 = "b" with ratio +1, code 1 = "a" with ratio -1
    col = _one_feature([0, 0, 1, 1], ("b", "a"))
    cand = best_split_for_feature(np.arange(4), col, gh([1, 1, -1, -1]), PartitionAssignment.single(4), CLASSIC)
    assert cand.descriptor.left_codes == frozenset({1})


def test_best_split_respects_min_data_in_leaf():
    col = _one_feature([1.0, 2.0, 3.0, 4.0, 5.0, 6.0])
    g = gh([5, -1, -1, -1, -1, -1])
    conf = SplitterConfig(Mode.CLASSIC, min_data_in_leaf=2, n_total=6)
    cand = best_split_for_feature(np.arange(6), col, g, PartitionAssignment.single(6), conf)
    assert cand.left_stats.n[0] >= 2 and cand.right_stats.n[0] >= 2
    conf3 = SplitterConfig(Mode.CLASSIC, min_data_in_leaf=4, n_total=6)
    assert best_split_for_feature(np.arange(6), col, g, PartitionAssignment.single(6), conf3) is None


def test_threshold_is_midpoint_and_routes_left_inclusive():
    d = SplitDescriptor(0, threshold=1.5)
    np.testing.assert_array_equal(d.goes_left([1.0, 1.5, 1.5000001, 2.0]), [True, True, False, False])


def test_midpoint_of_adjacent_floats_stays_below_upper_value():
    a = 1.0
    b = np.nextafter(1.0, 2.0)
    col = _one_feature([a, a, b, b])
    cand = best_split_for_feature(np.arange(4), col, gh([1, 1, -1, -1]), PartitionAssignment.single(4), CLASSIC)
    assert a <= cand.descriptor.threshold < b


def _three_partition_fixture():
    # sub-train rows 0-3, val1 rows 4-7; feature A fits sub-train perfectly but
    # reverses on val1, feature B is weaker on sub-train but holds on val1
    g = gh([2, 2, -2, -2, 1, 1, -1, -1])
    b = PartitionAssignment(np.array([0, 0, 0, 0, 1, 1, 1, 1]), merge_validation=True)
    A = [0, 0, 1, 1, 1, 1, 0, 0]
    B = [0, 0, 0, 1, 0, 0, 1, 1]
    ds = Dataset.from_arrays(np.column_stack([A, B]).astype(float), np.zeros(8), ["A", "B"])
    return ds, g, b


def test_find_split_picks_feature_by_score2():
    ds, g, b = _three_partition_fixture()
    conf = SplitterConfig(Mode.UNBIASED, min_data_in_leaf=1, merge_validation=True, n_total=8)
    a_cand = best_split_for_feature(np.arange(8), ds.columns[0], g, b, conf, feature_index=0)
    b_cand = best_split_for_feature(np.arange(8), ds.columns[1], g, b, conf, feature_index=1)
    # A: 16/2 + 16/2 = 16 on sub-train; B: 4/3 + 4/1
    assert a_cand.score1 == 16.0
    assert b_cand.score1 == pytest.approx(4 / 3 + 4.0)
    # A: 4*(-2)/2 + (-4)*2/2 = -8; B: 2*2/2 + (-2)*(-2)/2 = 4
    assert a_cand.score2 == -8.0
    assert b_cand.score2 == 4.0
    chosen = find_split(np.arange(8), ds, g, b, conf)
    assert chosen.feature == 1
    assert chosen.score3 == chosen.score2

    winners = oracles.per_feature_score1_winners(ds.X, g.g, g.h, b.buckets, 1, True)
    assert [w[1] for w in winners] == [-8.0, 4.0]


def test_find_split_single_feature_matches_per_feature():
    rng = np.random.default_rng(0)
    x = rng.normal(size=40)
    g = gh(rng.normal(size=40))
    ds = Dataset.from_arrays(x, np.zeros(40))
    a = find_split(np.arange(40), ds, g, PartitionAssignment.single(40), CLASSIC)
    b = best_split_for_feature(np.arange(40), ds.columns[0], g, PartitionAssignment.single(40), CLASSIC)
    assert same_candidate(a, b)


def test_find_split_ties_go_to_lowest_feature():
    x = np.array([0.0, 0.0, 1.0, 1.0])
    ds = Dataset.from_arrays(np.column_stack([x, x, x]), np.zeros(4))
    cand = find_split(np.arange(4), ds, gh([1, 1, -1, -1]), PartitionAssignment.single(4), CLASSIC)
    assert cand.feature == 0


def test_classic_candidate_carries_classic_gain():
    rng = np.random.default_rng(3)
    ds = Dataset.from_arrays(rng.normal(size=(30, 2)), np.zeros(30))
    g = gh(rng.normal(size=30), rng.uniform(0.1, 1, size=30))
    conf = SplitterConfig(Mode.CLASSIC, min_data_in_leaf=1, n_total=30)
    cand = find_split(np.arange(30), ds, g, PartitionAssignment.single(30), conf)
    L, R = cand.left_stats, cand.right_stats
    expected = classic_gain((L.G[0], L.H[0]), (R.G[0], R.H[0]), (L.G[0] + R.G[0], L.H[0] + R.H[0]), 30)
    assert cand.gain == pytest.approx(expected, rel=1e-9, abs=1e-15)
    assert cand.score1 == cand.score2 == cand.score3


def _random_problem(rng, n, m, merge, cat_prob=0.3):
    cats = {}
    cols = []
    for j in range(m):
        if rng.random() < cat_prob:
            k = int(rng.integers(2, 6))
            cols.append(rng.integers(0, k, size=n).astype(float))
            cats[j] = [str(c) for c in range(k)]
        else:
            cols.append(np.round(rng.normal(size=n), int(rng.integers(0, 3))))
    ds = Dataset.from_arrays(np.column_stack(cols), np.zeros(n), categorical=cats)
    g = gh(rng.normal(size=n), rng.uniform(0.05, 1.0, size=n))
    b = rng.integers(0, 2 if merge else 3, size=n)
    return ds, g, PartitionAssignment(b, merge_validation=merge)


@pytest.mark.parametrize("merge", [True, False])
def test_candidate_stats_are_additive_and_scores_recompute(merge):
    rng = np.random.default_rng(11)
    conf = SplitterConfig(Mode.UNBIASED, min_data_in_leaf=2, merge_validation=merge, n_total=60)
    checked = 0
    for _ in range(60):
        ds, g, b = _random_problem(rng, 60, 3, merge)
        rows = np.arange(60)
        cand = find_split(rows, ds, g, b, conf)
        if cand is None:
            continue
        checked += 1
        parent = NodeStats.from_rows(rows, g, b)
        total = cand.left_stats + cand.right_stats
        np.testing.assert_array_equal(total.n, parent.n)
        np.testing.assert_allclose(total.G, parent.G, atol=1e-9)
        np.testing.assert_allclose(total.H, parent.H, atol=1e-9)
        left = cand.descriptor.goes_left(ds.X[:, cand.feature])
        s = oracles.three_scores(left, g.g, g.h, b.buckets, merge)
        np.testing.assert_allclose([cand.score1, cand.score2, cand.score3], s, rtol=1e-9, atol=1e-9)
        assert cand.score1 >= -1e-9
    assert checked > 40


def test_find_split_independent_of_executor():
    rng = np.random.default_rng(5)
    conf = SplitterConfig(Mode.UNBIASED, min_data_in_leaf=1, merge_validation=False, n_total=80)
    with ThreadPoolExecutor(4) as pool:
        for _ in range(20):
            ds, g, b = _random_problem(rng, 80, 6, False)
            rows = np.arange(80)
            assert same_candidate(find_split(rows, ds, g, b, conf), find_split(rows, ds, g, b, conf, executor=pool))


@pytest.mark.parametrize("seed", range(40))
def test_classic_find_split_matches_exhaustive_search(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(4, 40))
    ds, g, _ = _random_problem(rng, n, int(rng.integers(1, 4)), True)
    part = PartitionAssignment.single(n)
    conf = SplitterConfig(Mode.CLASSIC, min_data_in_leaf=1, n_total=n)
    cand = find_split(np.arange(n), ds, g, part, conf)
    best = oracles.best_classic_gain(ds.X, ds.categorical_mask, g.g, g.h, 1, n)
    if best is None:
        assert cand is None
    else:
        assert cand.gain == pytest.approx(best, rel=1e-9, abs=1e-12)


def test_unbiased_split_skips_candidates_without_validation_samples():
    # validation rows sit at x = 3 and x = 4, so only the 3.5 boundary puts one on each side
    x = np.arange(6.0)
    g = gh([1, 1, -1, -1, 1, -1])
    b = PartitionAssignment(np.array([0, 0, 0, 1, 1, 0]), merge_validation=True)
    conf = SplitterConfig(Mode.UNBIASED, min_data_in_leaf=1, merge_validation=True, n_total=6)
    cand = best_split_for_feature(np.arange(6), FeatureColumn.numeric(x), g, b, conf)
    assert cand.descriptor.threshold == 3.5
    assert cand.left_stats.n[1] == 1 and cand.right_stats.n[1] == 1


@pytest.mark.parametrize("merge", [True, False])
def test_held_out_scores_have_zero_mean_on_uninformative_feature(merge):
    rng = np.random.default_rng(21 if merge else 22)
    n, trials = 90, 10_000
    conf = SplitterConfig(Mode.UNBIASED, min_data_in_leaf=3, merge_validation=merge, n_total=n)
    s2, s3 = [], []
    for _ in range(trials):
        x = FeatureColumn.numeric(rng.random(n))
        g = gh(rng.standard_normal(n))
        b = PartitionAssignment(np.repeat(np.arange(2 if merge else 3), n // (2 if merge else 3)).astype(np.int8), merge)
        cand = best_split_for_feature(np.arange(n), x, g, b, conf)
        s2.append(cand.score2)
        s3.append(cand.score3)
    for s in (np.array(s2), np.array(s3)):
        assert abs(s.mean()) < 4 * s.std(ddof=1) / np.sqrt(trials)

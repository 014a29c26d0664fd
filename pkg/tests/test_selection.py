import numpy as np
import pytest

from ugbm.booster import GBMConfig
from ugbm.data import synth_selection, train_test_split
from ugbm.importance import ImportanceReport, Method
from ugbm.loss import LossKind
from ugbm.selection import holdout_score, importance_on_train, n_selected, select_features, top_features
from ugbm.splitter import Mode

CONF = GBMConfig(mode=Mode.CLASSIC, loss=LossKind.LOGISTIC, n_estimators=8, min_data_in_leaf=10, max_leaves=8)


@pytest.mark.parametrize("m, percent, expected", [(10, 10, 1), (10, 15, 2), (50, 20, 10), (3, 1, 1), (7, 100, 7)])
def test_n_selected_uses_ceiling(m, percent, expected):
    assert n_selected(m, percent) == expected


def test_top_features_breaks_ties_by_index():
    rep = ImportanceReport(Method.GAIN, np.array([1.0, 3.0, 3.0, 0.5]), ["a", "b", "c", "d"])
    assert top_features(rep, 25) == [1]
    assert top_features(rep, 50) == [1, 2]
    assert top_features(rep, 75) == [0, 1, 2]


def _split(seed=0, n=400):
    ds = synth_selection(n, 3, 7, np.random.default_rng(seed))
    return train_test_split(ds, 0.3, np.random.default_rng(seed + 1))


def test_full_selection_reproduces_full_model_score():
    train, test = _split()
    rows = select_features(train, test, CONF, methods=["gain"], percents=[100])
    assert rows[0]["n_features"] == 10
    assert rows[0]["score"] == holdout_score(train, test, CONF)


@pytest.mark.parametrize("method", ["gain", "unbiased", "split_score", "permutation"])
def test_every_method_produces_a_full_report(method):
    train, _ = _split(seed=2)
    rep = importance_on_train(method, train, CONF)
    assert len(rep.values) == train.n_features
    assert np.all(np.isfinite(rep.values))


def test_select_features_rows_and_determinism():
    train, test = _split(seed=3)
    a = select_features(train, test, CONF, methods=["unbiased"], percents=[10, 30])
    b = select_features(train, test, CONF, methods=["unbiased"], percents=[10, 30])
    assert a == b
    assert [r["n_features"] for r in a] == [1, 3]
    with pytest.raises(ValueError):
        importance_on_train("shap", train, CONF)

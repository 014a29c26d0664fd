"""Importance-driven feature selection: rank on train, keep the top k%, retrain, score on test."""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from .booster import GBMConfig, fit, predict
from .data import Dataset, train_test_split
from .importance import ImportanceReport, gain_importance, permutation_importance, split_score_importance, unbiased_gain
from .loss import LossKind
from .metrics import auc, rmse
from .splitter import Mode

METHODS = ("gain", "unbiased", "split_score", "permutation")


def n_selected(m: int, percent: float) -> int:
    return min(m, max(1, math.ceil(percent / 100.0 * m - 1e-9)))


def top_features(report: ImportanceReport, percent: float) -> list[int]:
    """Indices of the top ``percent``% features (ties by value, then index), in index order."""
    keep = report.ranking()[: n_selected(len(report.values), percent)]
    return sorted(keep)


def importance_on_train(method: str, train: Dataset, config: GBMConfig, oob_fraction: float = 0.3) -> ImportanceReport:
    """Estimate importance from the training set only.

    Held-out estimators (unbiased, permutation) carve their own held-out part
    from ``train`` with ``oob_fraction``.
    """
    classic = dataclasses.replace(config, mode=Mode.CLASSIC, min_split_gain=max(config.min_split_gain, 0.0))
    if method == "gain":
        return gain_importance(fit(train, classic))
    if method == "split_score":
        return split_score_importance(fit(train, dataclasses.replace(config, mode=Mode.UNBIASED)))
    fit_part, held_out = train_test_split(train, oob_fraction, np.random.default_rng([config.seed, 1]))
    model = fit(fit_part, classic)
    if method == "unbiased":
        return unbiased_gain(model, held_out, repeats=1, seed=config.seed)
    if method == "permutation":
        metric = "auc" if config.loss == LossKind.LOGISTIC else "rmse"
        return permutation_importance(model, held_out, metric=metric, repeats=1, seed=config.seed)
    raise ValueError(f"unknown method {method!r}")


def holdout_score(train: Dataset, test: Dataset, config: GBMConfig) -> float:
    """AUC for logistic models, RMSE otherwise."""
    model = fit(train, config)
    raw = predict(model, test)
    if config.loss == LossKind.LOGISTIC:
        return auc(test.target, raw)
    return rmse(test.target, raw)


def select_features(
    train: Dataset, test: Dataset, config: GBMConfig, methods=METHODS, percents=(10, 20, 30), oob_fraction: float = 0.3
) -> list[dict]:
    """Rows of (method, k, n_features, score, features) for every method and percentage."""
    rows = []
    for method in methods:
        report = importance_on_train(method, train, config, oob_fraction)
        for k in percents:
            keep = top_features(report, k)
            score = holdout_score(train.select_features(keep), test.select_features(keep), config)
            rows.append(
                {
                    "method": method,
                    "k": k,
                    "n_features": len(keep),
                    "score": score,
                    "features": [train.feature_names[j] for j in keep],
                }
            )
    return rows

"""Evaluation metrics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .errors import EmptyInput, LengthMismatch, SingleClass


@dataclass(frozen=True)
class MetricResult:
    name: str
    value: float
    n_samples: int


def auc(targets, scores) -> float:
    """ROC AUC via the Mann-Whitney rank statistic; tied scores earn half credit."""
    y = np.asarray(targets, dtype=np.float64)
    s = np.asarray(scores, dtype=np.float64)
    if y.shape != s.shape:
        raise LengthMismatch(f"targets {y.shape} vs scores {s.shape}")
    pos = y == 1
    n_pos = int(pos.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise SingleClass("AUC needs both classes present")
    ranks = rankdata(s, method="average")
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def rmse(targets, predictions) -> float:
    y = np.asarray(targets, dtype=np.float64)
    p = np.asarray(predictions, dtype=np.float64)
    if y.shape != p.shape:
        raise LengthMismatch(f"targets {y.shape} vs predictions {p.shape}")
    if y.size == 0:
        raise EmptyInput("rmse of an empty vector")
    return float(np.sqrt(np.mean((y - p) ** 2)))


def evaluate(name: str, targets, predictions) -> MetricResult:
    fn = {"auc": auc, "rmse": rmse}[name]
    return MetricResult(name, fn(targets, predictions), len(np.asarray(targets)))

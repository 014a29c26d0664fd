"""Second-order losses: per-sample gradients and hessians of the current raw score."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy.special import expit, logit

from .errors import EmptyTargets, InvalidTarget, LengthMismatch

PROB_CLAMP = 1e-6


class LossKind(str, enum.Enum):
    SQUARED_ERROR = "squared_error"
    LOGISTIC = "logistic"


@dataclass(frozen=True)
class GradHess:
    g: np.ndarray
    h: np.ndarray

    def __len__(self):
        return len(self.g)


def _check(predictions, targets):
    pred = np.asarray(predictions, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    if pred.shape != y.shape:
        raise LengthMismatch(f"predictions {pred.shape} vs targets {y.shape}")
    return pred, y


def check_targets(loss: LossKind, targets) -> None:
    y = np.asarray(targets, dtype=np.float64)
    if LossKind(loss) == LossKind.LOGISTIC and not np.all((y == 0.0) | (y == 1.0)):
        raise InvalidTarget("logistic loss requires targets in {0, 1}")
    if not np.all(np.isfinite(y)):
        raise InvalidTarget("targets must be finite")


def grad_hess(loss: LossKind, predictions, targets) -> GradHess:
    """Squared error uses l = (p - y)^2 / 2 so that h == 1."""
    pred, y = _check(predictions, targets)
    loss = LossKind(loss)
    check_targets(loss, y)
    if loss == LossKind.SQUARED_ERROR:
        return GradHess(pred - y, np.ones_like(pred))
    p = expit(pred)
    # p * (1 - p) loses the tail to cancellation; sigma(x) * sigma(-x) does not
    return GradHess(p - y, p * expit(-pred))


def base_score(loss: LossKind, targets) -> float:
    y = np.asarray(targets, dtype=np.float64)
    if y.size == 0:
        raise EmptyTargets("cannot compute a base score from no targets")
    loss = LossKind(loss)
    check_targets(loss, y)
    mean = float(np.mean(y))
    if loss == LossKind.SQUARED_ERROR:
        return mean
    return float(logit(min(max(mean, PROB_CLAMP), 1.0 - PROB_CLAMP)))


def eval_loss(loss: LossKind, predictions, targets) -> float:
    """Mean per-sample loss."""
    pred, y = _check(predictions, targets)
    if pred.size == 0:
        return 0.0
    if LossKind(loss) == LossKind.SQUARED_ERROR:
        return float(np.mean(0.5 * (pred - y) ** 2))
    # log(1 + e^p) - y*p, written to never overflow
    return float(np.mean(np.logaddexp(0.0, pred) - y * pred))


def transform(loss: LossKind, raw) -> np.ndarray:
    """Map raw scores to the response scale (probabilities for logistic)."""
    raw = np.asarray(raw, dtype=np.float64)
    return expit(raw) if LossKind(loss) == LossKind.LOGISTIC else raw

"""Feature importance estimators for trained ensembles."""

from __future__ import annotations

import csv
import enum
import io
import json
from dataclasses import dataclass, field

import numpy as np

from .booster import BoostedModel
from .data import Dataset, as_rng
from .errors import EmptyOob, WrongMode, ZeroHessian
from .loss import grad_hess, transform
from .metrics import auc, rmse
from .splitter import HESSIAN_EPSILON, Mode


class Method(str, enum.Enum):
    GAIN = "gain"
    UNBIASED = "unbiased"
    PERMUTATION = "permutation"
    # score3 accumulated while growing an unbiased-mode model
    SPLIT_SCORE = "split_score"


@dataclass
class ImportanceReport:
    method: Method
    values: np.ndarray
    feature_names: list[str]
    repeats: int = 1
    diagnostics: int = 0
    std: np.ndarray | None = None

    def ranking(self) -> list[int]:
        """Feature indices by decreasing importance; ties by index."""
        return sorted(range(len(self.values)), key=lambda j: (-self.values[j], j))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["feature", "method", "value", "repeats"])
        for name, v in zip(self.feature_names, self.values):
            w.writerow([name, self.method.value, repr(float(v)), self.repeats])
        return buf.getvalue()

    def to_json(self) -> str:
        doc = {
            "method": self.method.value,
            "repeats": self.repeats,
            "diagnostics": {"skipped_splits": self.diagnostics},
            "features": self.feature_names,
            "values": [float(v) for v in self.values],
        }
        if self.std is not None:
            doc["std"] = [float(v) for v in self.std]
        return json.dumps(doc, indent=1) + "\n"


def gain_importance(model: BoostedModel) -> ImportanceReport:
    """Sum of the classic second-order gain over every split, per feature."""
    if model.mode != Mode.CLASSIC:
        raise WrongMode("gain importance is defined for classic-mode models; use split_score_importance")
    values = np.zeros(model.n_features)
    for tree in model.trees:
        for node in tree.internal_nodes():
            values[node.split.feature] += node.scores[0] / (2.0 * model.n_train)
    return ImportanceReport(Method.GAIN, values, model.feature_names)


def split_score_importance(model: BoostedModel) -> ImportanceReport:
    """Training-time score3 accumulation of an unbiased-mode model."""
    if model.mode != Mode.UNBIASED:
        raise WrongMode("split-score importance exists only for unbiased-mode models")
    return ImportanceReport(Method.SPLIT_SCORE, model.importance_unbiased.copy(), model.feature_names)


def split_unbiased_gain(
    G_parent: float,
    G_left: float,
    G_right: float,
    n_total: int,
    parent_gh,
    left_gh,
    right_gh,
    rng=None,
    equal_k: bool = True,
) -> float | None:
    """Unbiased gain of one split from training gradient sums and held-out (g, h).

    Each node's loss is -G * (G' / H') / (2n), where G is the training gradient
    sum and G', H' sum k held-out samples drawn without replacement from that
    node, k = min(held-out count left, held-out count right). Using the same k
    for parent and both children makes the gain zero-mean for a split feature
    independent of the target. ``equal_k=False`` uses every held-out row of
    each node instead (biased; kept for comparison).

    Returns None when k == 0 or a selected hessian sum is ~0.
    """
    rng = as_rng(rng)
    k = min(len(left_gh[0]), len(right_gh[0]))
    if k == 0:
        return None
    ratios = []
    for g, h in (parent_gh, left_gh, right_gh):
        if equal_k and len(g) > k:
            pick = rng.choice(len(g), size=k, replace=False)
            g, h = g[pick], h[pick]
        H = float(np.sum(h))
        if H < HESSIAN_EPSILON:
            return None
        ratios.append(float(np.sum(g)) / H)
    scale = 1.0 / (2.0 * n_total)
    loss_parent = -scale * G_parent * ratios[0]
    loss_left = -scale * G_left * ratios[1]
    loss_right = -scale * G_right * ratios[2]
    return loss_parent - loss_left - loss_right


def refit_validation_gain(train_sums, parent_gh, left_gh, right_gh, n_total: int) -> float:
    """Loss reduction of a split re-evaluated on held-out rows with training leaf weights.

    ``train_sums`` is ((G_I, H_I), (G_L, H_L), (G_R, H_R)) from training data.
    Each node's weight w = -G/H is scored on its held-out rows with the
    second-order surrogate (sum(g') w + sum(h') w^2 / 2) / n. The weights were
    chosen on training rows, so on an uninformative split this estimate is
    negative on average; it is provided for comparison only.
    """
    losses = []
    for (G, H), (g, h) in zip(train_sums, (parent_gh, left_gh, right_gh)):
        if H < HESSIAN_EPSILON:
            raise ZeroHessian("training hessian sum is ~0")
        w = -G / H
        losses.append((float(np.sum(g)) * w + 0.5 * float(np.sum(h)) * w * w) / n_total)
    return losses[0] - losses[1] - losses[2]


def oob_gradients(model: BoostedModel, X, y):
    """Yield (tree index, tree, GradHess) with gradients at the model state before each tree."""
    tree_sum = np.zeros(X.shape[0])
    for t, tree in enumerate(model.trees):
        pred = model.base_score + model.learning_rate * tree_sum
        yield t, tree, grad_hess(model.loss, pred, y)
        tree_sum += tree.predict(X)


def unbiased_gain(
    model: BoostedModel, oob: Dataset, repeats: int = 1, seed: int = 0, equal_k: bool = True
) -> ImportanceReport:
    """Post-hoc unbiased gain importance from a held-out set disjoint from training.

    Disjointness is the caller's responsibility. Per-split masks are drawn from
    generators keyed by (seed, tree, node), so results do not depend on
    evaluation order.
    """
    if oob.n_rows == 0:
        raise EmptyOob("held-out dataset is empty")
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    X = model.matrix(oob)
    per_repeat = np.zeros((repeats, model.n_features))
    skipped = 0
    for t, tree, gh in oob_gradients(model, X, oob.target):
        if not tree.internal_nodes():
            continue
        routes = tree.route(X)
        for node in tree.internal_nodes():
            left, right = tree.nodes[node.left], tree.nodes[node.right]
            rows = [routes[node.id], routes[left.id], routes[right.id]]
            ghs = [(gh.g[r], gh.h[r]) for r in rows]
            rng = np.random.default_rng([seed, t, node.id])
            for r in range(repeats):
                v = split_unbiased_gain(
                    node.g_train, left.g_train, right.g_train, model.n_train, *ghs, rng=rng, equal_k=equal_k
                )
                if v is None:
                    skipped += 1
                else:
                    per_repeat[r, node.split.feature] += v
    return ImportanceReport(
        Method.UNBIASED,
        per_repeat.mean(axis=0),
        model.feature_names,
        repeats=repeats,
        diagnostics=skipped,
        std=per_repeat.std(axis=0) if repeats > 1 else None,
    )


def permutation_importance(
    model: BoostedModel, dataset: Dataset, metric: str = "auc", repeats: int = 1, seed: int = 0
) -> ImportanceReport:
    """Drop in model quality when one column is shuffled.

    For AUC the value is baseline - shuffled; for RMSE it is shuffled -
    baseline, so positive always means the feature helps.
    """
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    if dataset.n_rows == 0:
        raise EmptyOob("dataset is empty")
    X = model.matrix(dataset)
    y = dataset.target
    if metric == "auc":
        quality = lambda p: auc(y, p)
    elif metric == "rmse":
        quality = lambda p: -rmse(y, transform(model.loss, p))
    else:
        raise ValueError(f"unknown metric {metric!r}")
    baseline = quality(model.predict_matrix(X))
    per_repeat = np.zeros((repeats, model.n_features))
    used = {node.split.feature for tree in model.trees for node in tree.internal_nodes()}
    for j in range(model.n_features):
        if j not in used:
            continue
        rng = np.random.default_rng([seed, j])
        Xp = X.copy()
        for r in range(repeats):
            Xp[:, j] = X[rng.permutation(X.shape[0]), j]
            per_repeat[r, j] = baseline - quality(model.predict_matrix(Xp))
    return ImportanceReport(
        Method.PERMUTATION,
        per_repeat.mean(axis=0),
        model.feature_names,
        repeats=repeats,
        std=per_repeat.std(axis=0) if repeats > 1 else None,
    )

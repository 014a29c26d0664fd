"""Split statistics and split finding over three sample partitions.

Every node keeps gradient/hessian sums separately for the sub-training set
(bucket 0) and the two validation sets (buckets 1 and 2). The best threshold
of each feature is chosen by ``score1`` (sub-training only), the feature is
chosen by ``score2`` (sub-training gradients weighted by first-validation
ratios), and ``score3`` re-evaluates the winner on the second validation set
to gate growth. In classic mode all samples sit in bucket 0 and the usual
second-order gain is used throughout.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .data import Dataset, FeatureColumn, PartitionAssignment
from .errors import InvalidCandidate, ZeroHessian
from .loss import GradHess

HESSIAN_EPSILON = 1e-12


class Mode(str, enum.Enum):
    CLASSIC = "classic"
    UNBIASED = "unbiased"


@dataclass(frozen=True)
class SplitterConfig:
    mode: Mode = Mode.UNBIASED
    min_data_in_leaf: int = 1
    merge_validation: bool = True
    n_total: int = 1
    hessian_epsilon: float = HESSIAN_EPSILON

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        if self.min_data_in_leaf < 1:
            raise ValueError("min_data_in_leaf must be >= 1")
        if self.n_total < 1:
            raise ValueError("n_total must be >= 1")


@dataclass(frozen=True)
class NodeStats:
    """Per-bucket sums: G[k], H[k], n[k] for k in (sub-train, val1, val2)."""

    G: np.ndarray
    H: np.ndarray
    n: np.ndarray

    @classmethod
    def from_rows(cls, rows, grad_hess: GradHess, buckets: PartitionAssignment) -> "NodeStats":
        b = buckets.buckets[rows]
        g = grad_hess.g[rows]
        h = grad_hess.h[rows]
        return cls(
            np.bincount(b, weights=g, minlength=3).astype(np.float64),
            np.bincount(b, weights=h, minlength=3).astype(np.float64),
            np.bincount(b, minlength=3).astype(np.int64),
        )

    @classmethod
    def of(cls, G, H, n=None) -> "NodeStats":
        """Convenience constructor; pads partial tuples with zeros."""
        G = np.zeros(3) + np.pad(np.asarray(G, float), (0, 3 - len(G)))
        H = np.zeros(3) + np.pad(np.asarray(H, float), (0, 3 - len(H)))
        if n is None:
            n = (H > 0).astype(np.int64)
        n = np.pad(np.asarray(n, np.int64), (0, 3 - len(n)))
        return cls(G, H, n)

    def __add__(self, other: "NodeStats") -> "NodeStats":
        return NodeStats(self.G + other.G, self.H + other.H, self.n + other.n)

    def __sub__(self, other: "NodeStats") -> "NodeStats":
        return NodeStats(self.G - other.G, self.H - other.H, self.n - other.n)

    @property
    def n_train(self) -> int:
        return int(self.n[0])

    @property
    def g_train(self) -> float:
        return float(self.G[0])

    def weight(self) -> float:
        """Newton step -G/H over every sample in the node, all buckets pooled."""
        H = float(self.H.sum())
        if H <= HESSIAN_EPSILON:
            return 0.0
        return -float(self.G.sum()) / H


@dataclass(frozen=True)
class SplitDescriptor:
    feature: int
    threshold: Optional[float] = None
    left_codes: Optional[frozenset] = None

    def __post_init__(self):
        if (self.threshold is None) == (self.left_codes is None):
            raise ValueError("exactly one of threshold / left_codes must be set")
        if self.left_codes is not None:
            object.__setattr__(self, "left_codes", frozenset(int(c) for c in self.left_codes))

    @property
    def is_categorical(self) -> bool:
        return self.left_codes is not None

    def goes_left(self, values) -> np.ndarray:
        """Numeric: x <= threshold goes left. Categorical: listed codes go left, others right."""
        values = np.asarray(values)
        if self.threshold is not None:
            return values <= self.threshold
        codes = np.fromiter(self.left_codes, dtype=np.int64, count=len(self.left_codes))
        return np.isin(values.astype(np.int64), codes)


@dataclass(frozen=True)
class SplitCandidate:
    descriptor: SplitDescriptor
    score1: float
    score2: float
    score3: float
    left_stats: NodeStats
    right_stats: NodeStats
    gain: float = field(default=0.0)

    @property
    def feature(self) -> int:
        return self.descriptor.feature

    @property
    def parent_stats(self) -> NodeStats:
        return self.left_stats + self.right_stats


def leaf_loss(G: float, H: float, n_total: int) -> float:
    """Second-order surrogate loss of a leaf at its optimal weight: -G^2 / (2 n H)."""
    if H <= 0:
        raise ZeroHessian(f"hessian sum must be positive, got {H}")
    return -(G * G) / (2.0 * n_total * H)


def classic_gain(left, right, parent, n_total: int) -> float:
    """Loss reduction (G_L^2/H_L + G_R^2/H_R - G^2/H) / (2n) for (G, H) pairs."""
    (GL, HL), (GR, HR), (GP, HP) = left, right, parent
    if min(HL, HR, HP) <= 0:
        raise ZeroHessian("all hessian sums must be positive")
    return (GL * GL / HL + GR * GR / HR - GP * GP / HP) / (2.0 * n_total)


def _require(H, *ks, eps=HESSIAN_EPSILON):
    for k in ks:
        if H[k] <= eps:
            raise InvalidCandidate(f"hessian sum of bucket {k + 1} is {H[k]} <= {eps}")


def score1(L: NodeStats, R: NodeStats, P: NodeStats) -> float:
    for s in (L, R, P):
        _require(s.H, 0)
    return (L.G[0] * L.G[0] / L.H[0] + R.G[0] * R.G[0] / R.H[0]) - P.G[0] * P.G[0] / P.H[0]


def score2(L: NodeStats, R: NodeStats, P: NodeStats) -> float:
    for s in (L, R, P):
        _require(s.H, 1)
    return (L.G[0] * L.G[1] / L.H[1] + R.G[0] * R.G[1] / R.H[1]) - P.G[0] * P.G[1] / P.H[1]


def score3(L: NodeStats, R: NodeStats, P: NodeStats, merge_validation: bool = False) -> float:
    if merge_validation:
        return score2(L, R, P)
    for s in (L, R, P):
        _require(s.H, 2)
    return (
        (L.G[0] + L.G[1]) * L.G[2] / L.H[2] + (R.G[0] + R.G[1]) * R.G[2] / R.H[2]
    ) - (P.G[0] + P.G[1]) * P.G[2] / P.H[2]


def _scan(cum_G, cum_H, cum_n, parent: NodeStats, config: SplitterConfig):
    """Score every boundary given left-side prefix sums of shape (3, n_boundaries).

    Returns (score1, score2, score3, valid) arrays.
    """
    GL, HL, nL = cum_G, cum_H, cum_n
    GR = parent.G[:, None] - GL
    HR = parent.H[:, None] - HL
    nR = parent.n[:, None] - nL
    eps = config.hessian_epsilon
    min_leaf = config.min_data_in_leaf

    valid = (nL[0] >= min_leaf) & (nR[0] >= min_leaf) & (HL[0] > eps) & (HR[0] > eps)
    with np.errstate(divide="ignore", invalid="ignore"):
        s1 = (GL[0] * GL[0] / HL[0] + GR[0] * GR[0] / HR[0]) - parent.G[0] * parent.G[0] / parent.H[0]
        if config.mode == Mode.CLASSIC:
            return s1, s1, s1, valid
        valid &= (nL[1] >= 1) & (nR[1] >= 1) & (HL[1] > eps) & (HR[1] > eps)
        s2 = (GL[0] * GL[1] / HL[1] + GR[0] * GR[1] / HR[1]) - parent.G[0] * parent.G[1] / parent.H[1]
        if config.merge_validation:
            return s1, s2, s2, valid
        valid &= (nL[2] >= 1) & (nR[2] >= 1) & (HL[2] > eps) & (HR[2] > eps)
        s3 = (
            (GL[0] + GL[1]) * GL[2] / HL[2] + (GR[0] + GR[1]) * GR[2] / HR[2]
        ) - (parent.G[0] + parent.G[1]) * parent.G[2] / parent.H[2]
    return s1, s2, s3, valid


def _parent_ok(parent: NodeStats, config: SplitterConfig) -> bool:
    eps = config.hessian_epsilon
    if parent.n[0] < 2 * config.min_data_in_leaf or parent.H[0] <= eps:
        return False
    if config.mode == Mode.CLASSIC:
        return True
    if parent.H[1] <= eps:
        return False
    return config.merge_validation or parent.H[2] > eps


def _midpoint(a: float, b: float) -> float:
    mid = a + (b - a) / 2.0
    if not (a <= mid < b):
        mid = a
    return float(mid)


def _best_for_values(values, is_categorical, feature_index, node_rows, grad_hess, buckets, parent, config):
    g = grad_hess.g[node_rows]
    h = grad_hess.h[node_rows]
    b = buckets.buckets[node_rows]

    if is_categorical:
        codes = values.astype(np.int64)
        uniq, inv = np.unique(codes, return_inverse=True)
        if len(uniq) < 2:
            return None
        c = len(uniq)
        idx = b.astype(np.int64) * c + inv
        G = np.bincount(idx, weights=g, minlength=3 * c).reshape(3, c)
        H = np.bincount(idx, weights=h, minlength=3 * c).reshape(3, c)
        N = np.bincount(idx, minlength=3 * c).reshape(3, c)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(H[0] > config.hessian_epsilon, G[0] / H[0], np.inf)
        order = np.lexsort((uniq, ratio))
        cum_G = np.cumsum(G[:, order], axis=1)[:, :-1]
        cum_H = np.cumsum(H[:, order], axis=1)[:, :-1]
        cum_n = np.cumsum(N[:, order], axis=1)[:, :-1]
    else:
        order = np.argsort(values, kind="stable")
        xs = values[order]
        boundary = np.flatnonzero(xs[:-1] < xs[1:])
        if boundary.size == 0:
            return None
        bs = b[order]
        gs = g[order]
        hs = h[order]
        cum_G = np.empty((3, boundary.size))
        cum_H = np.empty((3, boundary.size))
        cum_n = np.empty((3, boundary.size), dtype=np.int64)
        for k in range(3):
            mask = bs == k
            cum_G[k] = np.cumsum(np.where(mask, gs, 0.0))[boundary]
            cum_H[k] = np.cumsum(np.where(mask, hs, 0.0))[boundary]
            cum_n[k] = np.cumsum(mask)[boundary]

    s1, s2, s3, valid = _scan(cum_G, cum_H, cum_n, parent, config)
    if not valid.any():
        return None
    s1_masked = np.where(valid, s1, -np.inf)
    i = int(np.argmax(s1_masked))  # first maximum: smallest threshold wins ties

    left = NodeStats(cum_G[:, i].copy(), cum_H[:, i].copy(), cum_n[:, i].copy())
    right = parent - left
    if is_categorical:
        desc = SplitDescriptor(feature_index, left_codes=frozenset(uniq[order[: i + 1]].tolist()))
    else:
        desc = SplitDescriptor(feature_index, threshold=_midpoint(xs[boundary[i]], xs[boundary[i] + 1]))
    return SplitCandidate(
        desc,
        float(s1[i]),
        float(s2[i]),
        float(s3[i]),
        left,
        right,
        gain=float(s1[i]) / (2.0 * config.n_total),
    )


def best_split_for_feature(
    node_rows, feature: FeatureColumn, grad_hess: GradHess, buckets: PartitionAssignment, config: SplitterConfig,
    feature_index: int = 0, parent: NodeStats | None = None,
) -> SplitCandidate | None:
    """Best boundary of one feature by score1, or None if no valid boundary exists.

    Numeric boundaries lie between adjacent distinct sorted values (threshold
    at the midpoint). Categories observed at the node are ordered by their
    sub-training G/H ratio and then scanned like an ordinal feature.
    """
    node_rows = np.asarray(node_rows)
    if parent is None:
        parent = NodeStats.from_rows(node_rows, grad_hess, buckets)
    if not _parent_ok(parent, config):
        return None
    return _best_for_values(
        feature.values[node_rows], feature.is_categorical, feature_index, node_rows, grad_hess, buckets, parent, config
    )


def find_split(
    node_rows, dataset: Dataset, grad_hess: GradHess, buckets: PartitionAssignment, config: SplitterConfig,
    executor=None, parent: NodeStats | None = None,
) -> SplitCandidate | None:
    """Per-feature winners by score1, then the feature with the largest score2.

    Ties go to the lowest feature index. ``executor`` (a concurrent.futures
    executor) may scan features in parallel; the result does not depend on it.
    """
    node_rows = np.asarray(node_rows)
    if parent is None:
        parent = NodeStats.from_rows(node_rows, grad_hess, buckets)
    if not _parent_ok(parent, config):
        return None

    def scan(j):
        col = dataset.columns[j]
        return _best_for_values(col.values[node_rows], col.is_categorical, j, node_rows, grad_hess, buckets, parent, config)

    if executor is None:
        winners = [scan(j) for j in range(dataset.n_features)]
    else:
        winners = list(executor.map(scan, range(dataset.n_features)))

    best = None
    for cand in winners:
        if cand is not None and (best is None or cand.score2 > best.score2):
            best = cand
    return best

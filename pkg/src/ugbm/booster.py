"""Boosting loop, ensemble prediction and model persistence."""

from __future__ import annotations

import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from contextlib import nullcontext
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .data import Dataset, Kind, PartitionAssignment, partition
from .errors import CorruptModel, DegenerateDataset, FormatVersionMismatch, NonFiniteGradient, SchemaMismatch
from .loss import LossKind, base_score, check_targets, grad_hess
from .splitter import Mode
from .tree import Tree, TreeConfig, grow

logger = logging.getLogger(__name__)

FORMAT_VERSION = "ugbm-1"
EARLY_STOP_ROUNDS = 10
ZERO_WEIGHT_TOL = 1e-12


@dataclass(frozen=True)
class GBMConfig:
    mode: Mode = Mode.UNBIASED
    n_estimators: int = 200
    learning_rate: float = 0.05
    min_data_in_leaf: int = 20
    min_split_gain: float = 0.0
    max_leaves: int = 31
    max_depth: int = 10
    partition_ratios: tuple[float, float, float] = (1.0, 1.0, 1.0)
    merge_validation: bool = True
    loss: LossKind = LossKind.SQUARED_ERROR
    seed: int = 0
    early_stopping: bool = True

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        object.__setattr__(self, "loss", LossKind(self.loss))
        object.__setattr__(self, "partition_ratios", tuple(float(r) for r in self.partition_ratios))
        if self.n_estimators < 1:
            raise ValueError("n_estimators must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.min_data_in_leaf < 1 or self.max_leaves < 1 or self.max_depth < 1:
            raise ValueError("min_data_in_leaf, max_leaves and max_depth must be positive")
        if self.mode == Mode.CLASSIC and self.min_split_gain < 0:
            raise ValueError("classic mode requires min_split_gain >= 0")
        if len(self.partition_ratios) != 3:
            raise ValueError("partition_ratios needs three entries")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    def tree_config(self, n_total: int) -> TreeConfig:
        return TreeConfig(
            mode=self.mode,
            min_data_in_leaf=self.min_data_in_leaf,
            merge_validation=self.merge_validation,
            n_total=n_total,
            max_leaves=self.max_leaves,
            max_depth=self.max_depth,
            min_split_gain=self.min_split_gain,
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mode"] = self.mode.value
        d["loss"] = self.loss.value
        d["partition_ratios"] = list(self.partition_ratios)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "GBMConfig":
        return cls(**d)


@dataclass(frozen=True)
class FeatureMeta:
    name: str
    kind: Kind
    vocab: tuple[str, ...] | None = None


@dataclass
class BoostedModel:
    base_score: float
    learning_rate: float
    loss: LossKind
    mode: Mode
    features: list[FeatureMeta]
    n_train: int
    trees: list[Tree] = field(default_factory=list)
    importance_unbiased: np.ndarray | None = None
    importance_classic: np.ndarray | None = None
    config: GBMConfig | None = None

    def __post_init__(self):
        m = len(self.features)
        if self.importance_unbiased is None:
            self.importance_unbiased = np.zeros(m)
        if self.importance_classic is None:
            self.importance_classic = np.zeros(m)

    @property
    def n_features(self) -> int:
        return len(self.features)

    @property
    def feature_names(self) -> list[str]:
        return [f.name for f in self.features]

    def matrix(self, dataset: Dataset) -> np.ndarray:
        """Dense matrix in model feature order, categories recoded to model codes.

        Labels never seen at training time get code -1, which routes right.
        """
        if dataset.n_features != self.n_features:
            raise SchemaMismatch(f"expected {self.n_features} features, got {dataset.n_features}")
        X = np.empty((dataset.n_rows, self.n_features))
        for j, (meta, name, col) in enumerate(zip(self.features, dataset.feature_names, dataset.columns)):
            if meta.name != name or meta.kind != col.kind:
                raise SchemaMismatch(f"column {j}: expected {meta.name}:{meta.kind.value}, got {name}:{col.kind.value}")
            if col.is_categorical and col.vocab != meta.vocab:
                lookup = {label: code for code, label in enumerate(meta.vocab)}
                remap = np.array([lookup.get(label, -1) for label in col.vocab], dtype=np.float64)
                X[:, j] = remap[col.values] if len(remap) else np.empty(0)
            else:
                X[:, j] = col.values
        return X

    def tree_outputs(self, X) -> np.ndarray:
        """Per-tree raw outputs, shape (n_trees, n_rows)."""
        X = np.asarray(X, dtype=np.float64)
        out = np.zeros((len(self.trees), X.shape[0]))
        for t, tree in enumerate(self.trees):
            out[t] = tree.predict(X)
        return out

    def predict_matrix(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        total = np.zeros(X.shape[0])
        for tree in self.trees:
            total += tree.predict(X)
        return self.base_score + self.learning_rate * total

    def to_dict(self) -> dict:
        feats = []
        for f in self.features:
            d = {"name": f.name, "kind": f.kind.value}
            if f.vocab is not None:
                d["vocab"] = list(f.vocab)
            feats.append(d)
        return {
            "version": FORMAT_VERSION,
            "mode": self.mode.value,
            "loss": self.loss.value,
            "base_score": self.base_score,
            "learning_rate": self.learning_rate,
            "n_train": self.n_train,
            "features": feats,
            "importance": {
                "unbiased": self.importance_unbiased.tolist(),
                "classic": self.importance_classic.tolist(),
            },
            "config": self.config.to_dict() if self.config else None,
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BoostedModel":
        if not isinstance(d, dict) or "version" not in d:
            raise CorruptModel("not a model document")
        if d["version"] != FORMAT_VERSION:
            raise FormatVersionMismatch(f"expected {FORMAT_VERSION}, found {d['version']!r}")
        try:
            features = [
                FeatureMeta(f["name"], Kind(f["kind"]), tuple(f["vocab"]) if "vocab" in f else None)
                for f in d["features"]
            ]
            m = len(features)
            trees = [Tree.from_dict(t, m) for t in d["trees"]]
            model = cls(
                base_score=float(d["base_score"]),
                learning_rate=float(d["learning_rate"]),
                loss=LossKind(d["loss"]),
                mode=Mode(d["mode"]),
                features=features,
                n_train=int(d["n_train"]),
                trees=trees,
                importance_unbiased=np.array(d["importance"]["unbiased"], dtype=np.float64),
                importance_classic=np.array(d["importance"]["classic"], dtype=np.float64),
                config=GBMConfig.from_dict(d["config"]) if d.get("config") else None,
            )
        except (KeyError, TypeError, ValueError, IndexError) as exc:
            raise CorruptModel(f"malformed model: {exc}") from exc
        if len(model.importance_unbiased) != m or len(model.importance_classic) != m:
            raise CorruptModel("importance vectors must have one entry per feature")
        return model


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("UGBM_THREADS", "1")))
    except ValueError:
        return 1


def partition_for_round(config: GBMConfig, n_rows: int, t: int) -> PartitionAssignment:
    """Fresh sub-training/validation partition for boosting round ``t``."""
    if config.mode == Mode.CLASSIC:
        return PartitionAssignment.single(n_rows)
    rng = np.random.default_rng([config.seed, t])
    return partition(n_rows, config.partition_ratios, config.merge_validation, rng)


def fit(train: Dataset, config: GBMConfig, callback=None) -> BoostedModel:
    """Train an ensemble.

    ``callback(t, predictions)`` is invoked after every round with the raw
    training predictions, mostly for diagnostics.
    """
    n = train.n_rows
    if n == 0 or train.n_features == 0:
        raise DegenerateDataset("training data needs at least one row and one feature")
    if config.mode == Mode.UNBIASED and n < 3:
        raise DegenerateDataset("unbiased mode needs at least 3 rows")
    check_targets(config.loss, train.target)

    model = BoostedModel(
        base_score=base_score(config.loss, train.target),
        learning_rate=config.learning_rate,
        loss=config.loss,
        mode=config.mode,
        features=[FeatureMeta(name, col.kind, col.vocab) for name, col in zip(train.feature_names, train.columns)],
        n_train=n,
        config=config,
    )
    tconf = config.tree_config(n)
    tree_sum = np.zeros(n)
    pred = np.full(n, model.base_score)
    idle = 0
    n_jobs = _threads()
    with ThreadPoolExecutor(n_jobs) if n_jobs > 1 else nullcontext() as executor:
        for t in range(config.n_estimators):
            gh = grad_hess(config.loss, pred, train.target)
            if not (np.all(np.isfinite(gh.g)) and np.all(np.isfinite(gh.h))):
                raise NonFiniteGradient(f"non-finite gradient at round {t}")
            buckets = partition_for_round(config, n, t)
            tree = grow(train, gh, buckets, tconf, executor=executor)
            model.trees.append(tree)
            if config.mode == Mode.CLASSIC:
                model.importance_classic += tree.importance_delta
            else:
                model.importance_unbiased += tree.importance_delta
            tree_sum += tree.predict(train.X)
            pred = model.base_score + config.learning_rate * tree_sum
            if callback is not None:
                callback(t, pred)

            if tree.n_leaves == 1 and abs(tree.root.weight) <= ZERO_WEIGHT_TOL:
                idle += 1
                if config.early_stopping and idle >= EARLY_STOP_ROUNDS:
                    logger.info("stopping after %d rounds: %d consecutive empty trees", t + 1, idle)
                    break
            else:
                idle = 0
    return model


def predict(model: BoostedModel, dataset: Dataset) -> np.ndarray:
    """Raw scores (logits for logistic models)."""
    return model.predict_matrix(model.matrix(dataset))


def dumps(model: BoostedModel) -> str:
    return json.dumps(model.to_dict(), indent=1, allow_nan=False) + "\n"


def save(model: BoostedModel, path) -> None:
    Path(path).write_text(dumps(model), encoding="utf-8")


def load(path) -> BoostedModel:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CorruptModel(f"{path}: {exc}") from exc
    return BoostedModel.from_dict(doc)

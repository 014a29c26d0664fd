"""Columnar datasets, CSV ingestion, synthetic generators and sample partitioning."""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    DegenerateRatios,
    DegenerateSplit,
    EmptyFile,
    LengthMismatch,
    MissingColumn,
    ParseError,
)

SUBTRAIN, VAL1, VAL2 = 0, 1, 2
BUCKET_NAMES = ("subtrain", "val1", "val2")


def as_rng(rng) -> np.random.Generator:
    """Accept a Generator, an integer seed, a seed sequence list, or None."""
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


class Kind(str, enum.Enum):
    NUMERIC = "numeric"
    CATEGORICAL = "categorical"


@dataclass(frozen=True)
class FeatureColumn:
    """One feature: either float values or integer codes with a vocabulary."""

    kind: Kind
    values: np.ndarray
    vocab: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.kind == Kind.NUMERIC:
            if self.vocab is not None:
                raise ValueError("numeric column cannot carry a vocabulary")
            vals = np.ascontiguousarray(self.values, dtype=np.float64)
            if not np.all(np.isfinite(vals)):
                raise ValueError("numeric column contains NaN or Inf")
        else:
            if self.vocab is None:
                raise ValueError("categorical column requires a vocabulary")
            if len(set(self.vocab)) != len(self.vocab):
                raise ValueError("vocabulary labels must be unique")
            vals = np.ascontiguousarray(self.values, dtype=np.int64)
            if vals.size and (vals.min() < 0 or vals.max() >= len(self.vocab)):
                raise ValueError("category code outside [0, vocab_size)")
            object.__setattr__(self, "vocab", tuple(self.vocab))
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @classmethod
    def numeric(cls, values) -> "FeatureColumn":
        return cls(Kind.NUMERIC, np.asarray(values, dtype=np.float64))

    @classmethod
    def categorical(cls, codes, vocab: Sequence[str]) -> "FeatureColumn":
        return cls(Kind.CATEGORICAL, np.asarray(codes, dtype=np.int64), tuple(vocab))

    @property
    def is_categorical(self) -> bool:
        return self.kind == Kind.CATEGORICAL

    def __len__(self):
        return len(self.values)

    def take(self, rows) -> "FeatureColumn":
        return FeatureColumn(self.kind, self.values[rows], self.vocab)


@dataclass(frozen=True)
class Dataset:
    columns: tuple[FeatureColumn, ...]
    target: np.ndarray
    feature_names: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "columns", tuple(self.columns))
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        target = np.ascontiguousarray(self.target, dtype=np.float64)
        target.setflags(write=False)
        object.__setattr__(self, "target", target)
        if len(self.columns) != len(self.feature_names):
            raise LengthMismatch("one name per column required")
        for col in self.columns:
            if len(col) != len(target):
                raise LengthMismatch("every column must have n_rows entries")

    @property
    def n_rows(self) -> int:
        return len(self.target)

    @property
    def n_features(self) -> int:
        return len(self.columns)

    @cached_property
    def X(self) -> np.ndarray:
        """Dense float matrix; categorical columns hold their codes."""
        out = np.empty((self.n_rows, self.n_features), dtype=np.float64)
        for j, col in enumerate(self.columns):
            out[:, j] = col.values
        out.setflags(write=False)
        return out

    @property
    def categorical_mask(self) -> np.ndarray:
        return np.array([c.is_categorical for c in self.columns], dtype=bool)

    def schema(self) -> list[tuple[str, str]]:
        return [(name, col.kind.value) for name, col in zip(self.feature_names, self.columns)]

    def subset(self, rows) -> "Dataset":
        rows = np.asarray(rows)
        return Dataset(tuple(c.take(rows) for c in self.columns), self.target[rows], self.feature_names)

    def select_features(self, indices: Iterable[int]) -> "Dataset":
        idx = list(indices)
        return Dataset(
            tuple(self.columns[j] for j in idx),
            self.target,
            tuple(self.feature_names[j] for j in idx),
        )

    def with_column(self, j: int, column: FeatureColumn) -> "Dataset":
        cols = list(self.columns)
        cols[j] = column
        return Dataset(tuple(cols), self.target, self.feature_names)

    @classmethod
    def from_arrays(cls, X, y, feature_names=None, categorical: dict[int, Sequence[str]] | None = None):
        """Build from a 2-D array. ``categorical`` maps column index to vocabulary."""
        X = np.asarray(X)
        if X.ndim == 1:
            X = X[:, None]
        categorical = categorical or {}
        if feature_names is None:
            feature_names = [f"x{j}" for j in range(X.shape[1])]
        cols = []
        for j in range(X.shape[1]):
            if j in categorical:
                cols.append(FeatureColumn.categorical(X[:, j].astype(np.int64), categorical[j]))
            else:
                cols.append(FeatureColumn.numeric(X[:, j]))
        return cls(tuple(cols), np.asarray(y, dtype=np.float64), tuple(feature_names))


def load_csv(path, target_column: str | None, categorical_columns: Iterable[str] = ()) -> Dataset:
    """Read a headered CSV into a Dataset.

    Categorical columns are coded by order of first appearance; every other
    non-target cell must parse as a finite real number. With
    ``target_column=None`` every column is a feature and the target is zeros.
    """
    categorical_columns = set(categorical_columns)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyFile(f"{path} is empty") from None
        rows = [r for r in reader if r]
    if target_column is not None and target_column not in header:
        raise MissingColumn(target_column)
    for name in categorical_columns:
        if name not in header:
            raise MissingColumn(name)
    if not rows:
        raise EmptyFile(f"{path} has a header but no data rows")

    width = len(header)
    for i, r in enumerate(rows, start=2):
        if len(r) != width:
            raise ParseError(i, None, ",".join(r))

    def parse_numeric(j):
        out = np.empty(len(rows), dtype=np.float64)
        for i, r in enumerate(rows):
            try:
                v = float(r[j])
            except ValueError:
                raise ParseError(i + 2, header[j], r[j]) from None
            if not math.isfinite(v):
                raise ParseError(i + 2, header[j], r[j])
            out[i] = v
        return out

    names, columns = [], []
    for j, name in enumerate(header):
        if name == target_column:
            continue
        if name in categorical_columns:
            codes: dict[str, int] = {}
            vals = np.fromiter((codes.setdefault(r[j], len(codes)) for r in rows), dtype=np.int64, count=len(rows))
            columns.append(FeatureColumn.categorical(vals, tuple(codes)))
        else:
            columns.append(FeatureColumn.numeric(parse_numeric(j)))
        names.append(name)
    if target_column is None:
        target = np.zeros(len(rows))
    else:
        target = parse_numeric(header.index(target_column))
    return Dataset(tuple(columns), target, tuple(names))


def write_csv(dataset: Dataset, path, target_column: str = "y") -> None:
    """Write a dataset so that ``load_csv`` reads it back unchanged."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([*dataset.feature_names, target_column])
        cells = []
        for col in dataset.columns:
            if col.is_categorical:
                cells.append([col.vocab[c] for c in col.values])
            else:
                cells.append([repr(float(v)) for v in col.values])
        cells.append([repr(float(v)) for v in dataset.target])
        w.writerows(zip(*cells))


@dataclass(frozen=True)
class PartitionAssignment:
    """Bucket label per sample: 0 sub-training, 1 first validation, 2 second validation."""

    buckets: np.ndarray
    merge_validation: bool = False
    sizes: tuple[int, int, int] = field(init=False)

    def __post_init__(self):
        b = np.ascontiguousarray(self.buckets, dtype=np.int8)
        b.setflags(write=False)
        object.__setattr__(self, "buckets", b)
        sizes = tuple(int(np.count_nonzero(b == k)) for k in range(3))
        if sum(sizes) != len(b):
            raise ValueError("bucket labels must lie in {0, 1, 2}")
        if self.merge_validation and sizes[VAL2]:
            raise ValueError("merged partitions cannot label samples as Val2")
        object.__setattr__(self, "sizes", sizes)

    @property
    def n_rows(self) -> int:
        return len(self.buckets)

    @classmethod
    def single(cls, n_rows: int) -> "PartitionAssignment":
        """Everything in the sub-training bucket (classic GBDT)."""
        return cls(np.zeros(n_rows, dtype=np.int8), merge_validation=False)


def apportion(n: int, ratios: Sequence[float]) -> list[int]:
    """Largest-remainder apportionment of n items; ties go to the earlier slot."""
    total = float(sum(ratios))
    quotas = [n * r / total for r in ratios]
    sizes = [math.floor(q) for q in quotas]
    order = sorted(range(len(ratios)), key=lambda i: (-(quotas[i] - sizes[i]), i))
    for i in order[: n - sum(sizes)]:
        sizes[i] += 1
    return sizes


def partition(n_rows: int, ratios=(1.0, 1.0, 1.0), merge_validation: bool = False, rng=None) -> PartitionAssignment:
    """Randomly cut ``n_rows`` samples into sub-training and validation buckets."""
    ratios = [float(r) for r in ratios]
    if len(ratios) != 3 or any(r < 0 or not math.isfinite(r) for r in ratios) or sum(ratios) <= 0:
        raise DegenerateRatios(f"ratios must be three non-negative reals, not all zero: {ratios}")
    if n_rows < 3:
        raise DegenerateRatios(f"need at least 3 rows to partition, got {n_rows}")
    if merge_validation:
        ratios = [ratios[0], ratios[1] + ratios[2], 0.0]
    sizes = apportion(n_rows, ratios)
    required = (SUBTRAIN, VAL1) if merge_validation else (SUBTRAIN, VAL1, VAL2)
    empty = [BUCKET_NAMES[k] for k in required if sizes[k] == 0]
    if empty:
        raise DegenerateRatios(f"bucket(s) {', '.join(empty)} would be empty (sizes {sizes})")

    perm = as_rng(rng).permutation(n_rows)
    buckets = np.empty(n_rows, dtype=np.int8)
    buckets[perm[: sizes[0]]] = SUBTRAIN
    buckets[perm[sizes[0] : sizes[0] + sizes[1]]] = VAL1
    buckets[perm[sizes[0] + sizes[1] :]] = VAL2
    return PartitionAssignment(buckets, merge_validation)


def train_test_split(dataset: Dataset, test_fraction: float, rng=None) -> tuple[Dataset, Dataset]:
    """Random disjoint row split; test size is floor(fraction * n) clamped to [1, n-1]."""
    n = dataset.n_rows
    if not 0.0 < test_fraction < 1.0:
        raise DegenerateSplit(f"test_fraction must be in (0, 1), got {test_fraction}")
    if n < 2:
        raise DegenerateSplit("need at least 2 rows to split")
    n_test = min(max(math.floor(test_fraction * n), 1), n - 1)
    perm = as_rng(rng).permutation(n)
    test_rows = np.sort(perm[:n_test])
    train_rows = np.sort(perm[n_test:])
    return dataset.subset(train_rows), dataset.subset(test_rows)


def synth_example1(n_rows: int, rng=None) -> Dataset:
    """Binary X1, 6-level categorical X2, Gaussian X3; y = 0.1*X1 + N(0, 1).

    Only X1 carries signal.
    """
    if n_rows < 1:
        raise ValueError("n_rows must be >= 1")
    rng = as_rng(rng)
    x1 = rng.integers(0, 2, size=n_rows).astype(np.float64)
    x2 = rng.integers(0, 6, size=n_rows)
    x3 = rng.standard_normal(n_rows)
    y = 0.1 * x1 + rng.standard_normal(n_rows)
    cols = (
        FeatureColumn.numeric(x1),
        FeatureColumn.categorical(x2, tuple(str(c) for c in range(6))),
        FeatureColumn.numeric(x3),
    )
    return Dataset(cols, y, ("X1", "X2", "X3"))


def synth_selection(n_rows: int, n_informative: int = 5, n_noise: int = 45, rng=None) -> Dataset:
    """Binary classification with a few low-cardinality informative features.

    Informative features are binary or 3-level numerics entering a logistic
    model; noise features are continuous Gaussians or 20-level categoricals,
    i.e. the high-cardinality side that split-count bias favours.
    """
    rng = as_rng(rng)
    cols, names = [], []
    logit = np.zeros(n_rows)
    for j in range(n_informative):
        levels = 2 if j % 2 == 0 else 3
        x = rng.integers(0, levels, size=n_rows).astype(np.float64)
        logit += 0.6 * (x - (levels - 1) / 2.0)
        cols.append(FeatureColumn.numeric(x))
        names.append(f"inf{j}")
    for j in range(n_noise):
        if j % 3 == 2:
            cols.append(FeatureColumn.categorical(rng.integers(0, 20, size=n_rows), tuple(f"k{c}" for c in range(20))))
        else:
            cols.append(FeatureColumn.numeric(rng.standard_normal(n_rows)))
        names.append(f"noise{j}")
    p = 1.0 / (1.0 + np.exp(-logit))
    y = (rng.random(n_rows) < p).astype(np.float64)
    return Dataset(tuple(cols), y, tuple(names))

"""Gradient boosted decision trees with three-partition split finding and unbiased gain importance."""

from .booster import BoostedModel, GBMConfig, fit, load, predict, save
from .data import Dataset, FeatureColumn, PartitionAssignment, load_csv, partition, synth_example1, train_test_split
from .importance import ImportanceReport, gain_importance, permutation_importance, unbiased_gain
from .loss import LossKind
from .splitter import Mode

__all__ = [
    "BoostedModel",
    "Dataset",
    "FeatureColumn",
    "GBMConfig",
    "ImportanceReport",
    "LossKind",
    "Mode",
    "PartitionAssignment",
    "fit",
    "gain_importance",
    "load",
    "load_csv",
    "partition",
    "permutation_importance",
    "predict",
    "save",
    "synth_example1",
    "train_test_split",
    "unbiased_gain",
]

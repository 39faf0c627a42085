from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import DatasetError, SkeletonDataset


@dataclass(frozen=True)
class FoldSplit:
    fold_count: int
    assignments: np.ndarray  # fold index per sample

    def test_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments == fold)

    def train_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments != fold)


def stratified_kfold(dataset: SkeletonDataset, fold_count: int = 10, seed: int = 0) -> FoldSplit:
    """Shuffle each class, then deal its samples round-robin over the folds."""
    if fold_count < 2:
        raise DatasetError("fold_count must be at least 2")
    counts = dataset.class_counts()
    if counts.min() < fold_count:
        bad = int(np.argmin(counts))
        raise DatasetError(
            f"class {bad} has {counts[bad]} samples, fewer than fold_count={fold_count}")
    rng = np.random.default_rng([seed, 0xF01D])
    assignments = np.empty(len(dataset), dtype=np.int64)
    for k in range(dataset.num_classes):
        idx = rng.permutation(np.flatnonzero(dataset.labels == k))
        assignments[idx] = np.arange(len(idx)) % fold_count
    return FoldSplit(fold_count, assignments)

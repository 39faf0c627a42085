from __future__ import annotations

from dataclasses import dataclass

import numpy as np

NUM_AXES = 3
NUM_JOINTS = 13
WINDOW = 3

# Joint order of the 13-joint skeleton.
JOINTS = ("head", "neck", "l_shoulder", "r_shoulder", "l_elbow", "r_elbow", "l_hand",
          "r_hand", "pelvis", "l_knee", "r_knee", "l_foot", "r_foot")
J = {name: i for i, name in enumerate(JOINTS)}


class DatasetError(ValueError):
    """A dataset violates its invariants or a file cannot be decoded."""


@dataclass
class SkeletonDataset:
    """Samples ``X[N, C, T, J]`` with integer person-ID labels ``Y[N]``."""

    samples: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        self.labels = np.asarray(self.labels).reshape(-1).astype(np.int64)

    def __len__(self) -> int:
        return len(self.labels)

    def validate(self, require_all_classes: bool = True) -> "SkeletonDataset":
        x, y, k = self.samples, self.labels, self.num_classes
        if x.ndim != 4 or x.shape[1] != NUM_AXES:
            raise DatasetError(f"samples must be [N, 3, T, J], got {x.shape}")
        if x.shape[0] != y.shape[0]:
            raise DatasetError(f"{x.shape[0]} samples but {y.shape[0]} labels")
        if k < 1:
            raise DatasetError("num_classes must be positive")
        if not np.all(np.isfinite(x)) or np.abs(x).max(initial=0.0) > 1.0:
            raise DatasetError("coordinates must be finite and within [-1, 1]")
        if y.size and (y.min() < 0 or y.max() >= k):
            raise DatasetError(f"labels must lie in [0, {k - 1}]")
        if require_all_classes and set(np.unique(y)) != set(range(k)):
            raise DatasetError("every class must appear at least once")
        return self

    def subset(self, idx) -> "SkeletonDataset":
        idx = np.asarray(idx)
        return SkeletonDataset(self.samples[idx], self.labels[idx], self.num_classes)

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.num_classes)

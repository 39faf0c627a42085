"""``SKL1`` dataset files.

Little-endian: magic ``b"SKL1"``; u32 N, C, T, J, K; N*C*T*J float32 samples in
row-major [N, C, T, J] order; N u16 labels.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .dataset import DatasetError, SkeletonDataset

MAGIC = b"SKL1"
_HEADER = struct.Struct("<4s5I")


def dumps_dataset(dataset: SkeletonDataset) -> bytes:
    dataset.validate(require_all_classes=False)
    n, c, t, j = dataset.samples.shape
    if dataset.num_classes > 0xFFFF:
        raise DatasetError("too many classes for u16 labels")
    return b"".join([
        _HEADER.pack(MAGIC, n, c, t, j, dataset.num_classes),
        dataset.samples.astype("<f4").tobytes(),
        dataset.labels.astype("<u2").tobytes(),
    ])


def loads_dataset(data: bytes) -> SkeletonDataset:
    if len(data) < _HEADER.size:
        raise DatasetError("truncated header")
    magic, n, c, t, j, k = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise DatasetError(f"bad magic {magic!r}, expected {MAGIC!r}")
    count = n * c * t * j
    need = _HEADER.size + 4 * count + 2 * n
    if len(data) < need:
        raise DatasetError(f"truncated file: header promises {need} bytes, got {len(data)}")
    if len(data) > need:
        raise DatasetError(f"{len(data) - need} unexpected trailing bytes")
    x = np.frombuffer(data, "<f4", count, _HEADER.size).reshape(n, c, t, j)
    y = np.frombuffer(data, "<u2", n, _HEADER.size + 4 * count)
    if n and int(y.max()) >= k:
        raise DatasetError(f"label {int(y.max())} out of range for K={k}")
    return SkeletonDataset(x.astype(np.float64), y.astype(np.int64), k)


def write_dataset(dataset: SkeletonDataset, path: str | Path) -> None:
    Path(path).write_bytes(dumps_dataset(dataset))


def read_dataset(path: str | Path) -> SkeletonDataset:
    return loads_dataset(Path(path).read_bytes())

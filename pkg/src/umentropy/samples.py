"""Immutable sample container and its on-disk formats."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass(frozen=True, eq=False)
class SampleSet:
    """N x d matrix of i.i.d. samples.

    The array is copied on construction and flagged read-only, so a
    ``SampleSet`` can be shared freely between threads and estimators.
    """

    data: np.ndarray

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.float64, copy=True)
        if arr.ndim == 1:
            arr = arr[:, None]
        if arr.ndim != 2:
            raise ValueError(f"samples must be 1-D or 2-D, got shape {arr.shape}")
        if arr.shape[0] < 2:
            raise ValueError("need at least 2 samples")
        if arr.shape[1] < 1:
            raise ValueError("need at least one dimension")
        if not np.all(np.isfinite(arr)):
            raise ValueError("samples contain non-finite entries")
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def d(self) -> int:
        return self.data.shape[1]

    def __len__(self):
        return self.n

    def subset(self, idx) -> "SampleSet":
        return SampleSet(self.data[np.asarray(idx)])


def as_samples(x) -> SampleSet:
    return x if isinstance(x, SampleSet) else SampleSet(x)


def write_csv(samples: SampleSet, path) -> None:
    """Write one row per sample under an ``x1..xd`` header."""
    samples = as_samples(samples)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{j + 1}" for j in range(samples.d)])
        for row in samples.data:
            w.writerow([repr(float(v)) for v in row])


def read_csv(path) -> SampleSet:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty file")
    header, body = rows[0], rows[1:]
    expected = [f"x{j + 1}" for j in range(len(header))]
    if [h.strip() for h in header] != expected:
        raise ValueError(f"{path}: header must be x1..xd, got {header}")
    return SampleSet(np.array([[float(v) for v in r] for r in body if r], dtype=np.float64))


def write_binary(samples: SampleSet, path) -> None:
    """Compact binary format: a float64 ``.npy`` file."""
    with open(path, "wb") as fh:
        np.save(fh, as_samples(samples).data, allow_pickle=False)


def read_binary(path) -> SampleSet:
    return SampleSet(np.load(path, allow_pickle=False))


def load(path) -> SampleSet:
    """Read a sample file, choosing the format from the suffix."""
    return read_binary(path) if Path(path).suffix == ".npy" else read_csv(path)

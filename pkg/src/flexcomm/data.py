"""Synthetic Gaussian-blob datasets split into disjoint per-worker shards."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class SyntheticDataset:
    X: np.ndarray
    y: np.ndarray
    shards: tuple[np.ndarray, ...]

    @property
    def n_workers(self) -> int:
        return len(self.shards)

    @property
    def classes(self) -> int:
        return int(self.y.max()) + 1

    def shard(self, rank: int) -> tuple[np.ndarray, np.ndarray]:
        idx = self.shards[rank]
        return self.X[idx], self.y[idx]

    @property
    def shard_size(self) -> int:
        return min(len(s) for s in self.shards)


def _split(n_rows: int, n_workers: int, rng: np.random.Generator) -> tuple[np.ndarray, ...]:
    order = rng.permutation(n_rows)
    return tuple(np.sort(part) for part in np.array_split(order, n_workers))


def make_blobs(
    n_workers: int,
    per_worker: int,
    features: int,
    classes: int,
    seed: int,
    separation: float = 3.0,
) -> SyntheticDataset:
    """Class means ~ N(0, separation^2 / features); points are mean + N(0, I)."""
    rng = np.random.default_rng(seed)
    total = n_workers * per_worker
    centers = rng.normal(0.0, separation / np.sqrt(features), size=(classes, features))
    y = rng.integers(0, classes, size=total)
    X = centers[y] + rng.normal(size=(total, features))
    return SyntheticDataset(X, y, _split(total, n_workers, rng))


def load_csv(path: str | Path, n_workers: int, seed: int) -> SyntheticDataset:
    """Rows of ``feature...,label``; an optional non-numeric header is skipped."""
    raw = np.genfromtxt(path, delimiter=",", dtype=np.float64)
    if raw.ndim == 1:
        raw = raw[None, :]
    raw = raw[~np.isnan(raw).all(axis=1)]
    if raw.shape[1] < 2:
        raise ValueError("dataset CSV needs at least one feature column and a label")
    X, y = raw[:, :-1], raw[:, -1].astype(np.int64)
    if len(y) < n_workers:
        raise ValueError("fewer rows than workers")
    rng = np.random.default_rng(seed)
    return SyntheticDataset(X, y, _split(len(y), n_workers, rng))

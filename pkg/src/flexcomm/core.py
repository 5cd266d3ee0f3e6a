"""Numeric containers shared by every other module.

Gradients live in one fused float64 buffer. Wire sizes are accounted
separately (4 bytes per value or index) by the cost model.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

LayerSpan = tuple[str, int, int]


def _readonly(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class DenseGrad:
    """Flat gradient of length G plus the (name, offset, length) of each layer."""

    values: np.ndarray
    layer_map: tuple[LayerSpan, ...] = ()

    def __post_init__(self) -> None:
        v = np.array(self.values, dtype=np.float64, copy=True).ravel()
        if v.size == 0:
            raise ValueError("empty gradient (G=0) is not supported")
        if not np.all(np.isfinite(v)):
            raise ValueError("gradient contains non-finite values")
        lm = tuple(self.layer_map) or (("L0", 0, v.size),)
        offset = 0
        for _, off, length in lm:
            if off != offset or length < 0:
                raise ValueError("layer_map must be contiguous and ascending")
            offset += length
        if offset != v.size:
            raise ValueError(f"layer lengths sum to {offset}, expected {v.size}")
        object.__setattr__(self, "values", _readonly(v))
        object.__setattr__(self, "layer_map", lm)

    @property
    def size(self) -> int:
        return int(self.values.size)

    def layer(self, name: str) -> np.ndarray:
        for n, off, length in self.layer_map:
            if n == name:
                return self.values[off : off + length]
        raise KeyError(name)


@dataclass(frozen=True)
class SparseGrad:
    """Compressed gradient: ascending unique indices and their values."""

    indices: np.ndarray
    values: np.ndarray
    total_len: int

    def __post_init__(self) -> None:
        idx = np.array(self.indices, dtype=np.int64, copy=True).ravel()
        val = np.array(self.values, dtype=np.float64, copy=True).ravel()
        if self.total_len < 1:
            raise ValueError("total_len must be >= 1")
        if idx.size != val.size:
            raise ValueError("indices and values differ in length")
        if idx.size == 0:
            raise ValueError("sparse gradient must keep at least one element")
        if idx[0] < 0 or idx[-1] >= self.total_len:
            raise ValueError("index out of range")
        if idx.size > 1 and np.any(np.diff(idx) <= 0):
            raise ValueError("indices must be strictly ascending")
        object.__setattr__(self, "indices", _readonly(idx))
        object.__setattr__(self, "values", _readonly(val))

    @property
    def k(self) -> int:
        return int(self.indices.size)


def flatten(layer_grads: Sequence[Sequence[float]], names: Sequence[str] | None = None) -> DenseGrad:
    """Fuse per-layer gradients into one buffer, recording each layer's span."""
    if len(layer_grads) == 0:
        raise ValueError("no layers")
    arrays = [np.asarray(g, dtype=np.float64).ravel() for g in layer_grads]
    if names is None:
        names = [f"L{i}" for i in range(len(arrays))]
    layer_map = []
    offset = 0
    for name, a in zip(names, arrays):
        layer_map.append((name, offset, a.size))
        offset += a.size
    return DenseGrad(np.concatenate(arrays), tuple(layer_map))


def densify(s: SparseGrad) -> DenseGrad:
    out = np.zeros(s.total_len)
    out[s.indices] = s.values
    return DenseGrad(out)


def gather(g: DenseGrad | np.ndarray, indices: np.ndarray) -> SparseGrad:
    """Values of ``g`` at ``indices`` as a SparseGrad over the same length."""
    v = g.values if isinstance(g, DenseGrad) else np.asarray(g, dtype=np.float64)
    idx = np.asarray(indices, dtype=np.int64)
    return SparseGrad(idx, v[idx], v.size)


@dataclass
class ModelState:
    params: np.ndarray
    step: int = 0
    rng_state: dict = field(default_factory=dict)

    def advance(self) -> None:
        self.step += 1


class ResidualStore:
    """Per-worker error-feedback residuals, zero at step 0."""

    def __init__(self, n_workers: int, length: int) -> None:
        if length < 1:
            raise ValueError("residual length must be >= 1")
        self.length = length
        self._res = [np.zeros(length) for _ in range(n_workers)]

    def __len__(self) -> int:
        return len(self._res)

    def get(self, rank: int) -> np.ndarray:
        return self._res[rank]

    def set(self, rank: int, residual: np.ndarray) -> None:
        residual = np.asarray(residual, dtype=np.float64)
        if residual.shape != (self.length,):
            raise ValueError(f"residual length {residual.size} != {self.length}")
        self._res[rank] = residual.copy()

    def reset(self) -> None:
        for r in range(len(self._res)):
            self._res[r] = np.zeros(self.length)

    def copy(self) -> "ResidualStore":
        out = ResidualStore(len(self._res), self.length)
        out._res = [r.copy() for r in self._res]
        return out

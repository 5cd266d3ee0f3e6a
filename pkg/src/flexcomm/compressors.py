"""Top-k sparsifiers, error feedback and the compression-gain statistic."""

from __future__ import annotations

import math
from collections import deque
from typing import Sequence

import numpy as np

from flexcomm.core import DenseGrad, ResidualStore, SparseGrad, densify

DEFAULT_ROUNDS = 25


def check_ratio(c: float) -> float:
    c = float(c)
    if not (0.0 < c <= 1.0) or math.isnan(c):
        raise ValueError(f"compression ratio must lie in (0, 1], got {c}")
    return c


def k_for(c: float, length: int) -> int:
    """Number of kept elements, ceil(c * length), never below one."""
    check_ratio(c)
    # guard against 0.1*30 = 3.0000000000000004 style round-up
    k = math.ceil(round(c * length, 9))
    return max(1, min(length, k))


def _topk_indices(v: np.ndarray, k: int) -> np.ndarray:
    """Ascending indices of the k largest |v|; ties keep the lower index."""
    n = v.size
    if k >= n:
        return np.arange(n, dtype=np.int64)
    a = np.abs(v)
    kth = np.partition(a, n - k)[n - k]
    above = np.flatnonzero(a > kth)
    ties = np.flatnonzero(a == kth)[: k - above.size]
    return np.sort(np.concatenate([above, ties]))


def topk_exact(g: DenseGrad, c: float) -> SparseGrad:
    k = k_for(c, g.size)
    idx = _topk_indices(g.values, k)
    return SparseGrad(idx, g.values[idx], g.size)


def topk_layerwise(g: DenseGrad, c: float) -> SparseGrad:
    """Per-layer top-k with k_l = ceil(c * len_l), merged into global indices."""
    check_ratio(c)
    parts = []
    for _, off, length in g.layer_map:
        if length == 0:
            continue
        local = _topk_indices(g.values[off : off + length], k_for(c, length))
        parts.append(local + off)
    idx = np.concatenate(parts)
    return SparseGrad(idx, g.values[idx], g.size)


def topk_threshold(g: DenseGrad, c: float, rounds: int = DEFAULT_ROUNDS) -> SparseGrad:
    """Bisect a magnitude threshold in [0, max|g|] for ``rounds`` iterations.

    The lower bracket always keeps at least k elements, and the final
    selection is every element with ``|g_i| >= lo``. With well separated
    magnitudes and enough rounds this is exactly the top-k set; with one
    round it is everything at or above ``max|g| / 2`` (when that holds at
    least k elements).
    """
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    k = k_for(c, g.size)
    a = np.abs(g.values)
    lo, hi = 0.0, float(a.max())
    for _ in range(rounds):
        mid = 0.5 * (lo + hi)
        if np.count_nonzero(a >= mid) >= k:
            lo = mid
        else:
            hi = mid
    idx = np.flatnonzero(a >= lo)
    return SparseGrad(idx, g.values[idx], g.size)


COMPRESSORS = {
    "exact": topk_exact,
    "layerwise": topk_layerwise,
    "threshold": topk_threshold,
}


def compress(name: str, g: DenseGrad, c: float, rounds: int = DEFAULT_ROUNDS) -> SparseGrad:
    if name not in COMPRESSORS:
        raise ValueError(f"unknown compressor {name!r}; choose from {sorted(COMPRESSORS)}")
    if name == "threshold":
        return topk_threshold(g, c, rounds)
    return COMPRESSORS[name](g, c)


def error_feedback(g_o: DenseGrad, residual: ResidualStore, worker: int) -> DenseGrad:
    r = residual.get(worker)
    if r.size != g_o.size:
        raise ValueError(f"residual length {r.size} != gradient length {g_o.size}")
    return DenseGrad(g_o.values + r, g_o.layer_map)


def residual_update(g_e: DenseGrad, g_c: SparseGrad) -> np.ndarray:
    if g_c.total_len != g_e.size:
        raise ValueError(f"compressed length {g_c.total_len} != {g_e.size}")
    out = g_e.values.copy()
    # subset compressors: exact zeros at the kept positions
    out[g_c.indices] = g_e.values[g_c.indices] - g_c.values
    return out


def _sq(x: np.ndarray) -> float:
    # correctly rounded, so a subset's energy never exceeds the full vector's
    return math.fsum(np.square(x))


def compression_gain(g_e: DenseGrad, g_c: SparseGrad) -> float:
    """||g_c||^2 / ||g_e||^2 for one step."""
    denom = _sq(g_e.values)
    if denom == 0.0:
        raise ValueError("degenerate gradient")
    return _sq(g_c.values) / denom


def pooled_gain(g_es: Sequence[DenseGrad], g_cs: Sequence[SparseGrad]) -> float:
    """Gain over all workers: summed kept energy over summed error-fed energy."""
    denom = sum(_sq(g.values) for g in g_es)
    if denom == 0.0:
        raise ValueError("degenerate gradient")
    return sum(_sq(g.values) for g in g_cs) / denom


class GainTracker:
    """Rolling mean of per-step gains over the last ``window`` samples."""

    def __init__(self, window: int = 50) -> None:
        if window < 1:
            raise ValueError("window must be positive")
        self.window = window
        self._buf: deque[float] = deque(maxlen=window)

    def push(self, gain: float) -> None:
        self._buf.append(float(gain))

    @property
    def count(self) -> int:
        return len(self._buf)

    @property
    def mean(self) -> float:
        if not self._buf:
            return float("nan")
        return math.fsum(self._buf) / len(self._buf)

    @property
    def last(self) -> float:
        return self._buf[-1]

    def reset(self) -> None:
        self._buf.clear()

    def state(self) -> tuple[int, list[float]]:
        return self.window, list(self._buf)

    def load(self, state: tuple[int, list[float]]) -> None:
        self.window = state[0]
        self._buf = deque(state[1], maxlen=self.window)


def apply_compression(
    g_o: DenseGrad,
    residual: ResidualStore,
    worker: int,
    c: float,
    compressor: str = "exact",
    rounds: int = DEFAULT_ROUNDS,
) -> tuple[DenseGrad, SparseGrad]:
    """Error-feed, compress and store the new residual for one worker."""
    g_e = error_feedback(g_o, residual, worker)
    g_c = compress(compressor, g_e, c, rounds)
    residual.set(worker, residual_update(g_e, g_c))
    return g_e, g_c


__all__ = [
    "GainTracker",
    "apply_compression",
    "check_ratio",
    "compress",
    "compression_gain",
    "densify",
    "error_feedback",
    "k_for",
    "pooled_gain",
    "residual_update",
    "topk_exact",
    "topk_layerwise",
    "topk_threshold",
]

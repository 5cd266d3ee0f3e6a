"""AR-Top-k aggregation (broadcast one worker's indices, allreduce the values)
and the Allgather baseline it competes with."""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np

from flexcomm.collectives import Cluster
from flexcomm.compressors import (
    DEFAULT_ROUNDS,
    apply_compression,
    error_feedback,
    pooled_gain,
    residual_update,
    topk_exact,
)
from flexcomm.core import DenseGrad, ResidualStore, SparseGrad, gather

VAR_BYTES_PER_ENTRY = 4


class SelectionMode(str, Enum):
    STAR = "STAR"
    VAR = "VAR"


@dataclass
class SelectionLog:
    n_workers: int
    steps: list[int] = field(default_factory=list)
    ranks: list[int] = field(default_factory=list)

    def record(self, step: int, rank: int) -> None:
        self.steps.append(step)
        self.ranks.append(rank)

    @property
    def counts(self) -> np.ndarray:
        return np.bincount(np.asarray(self.ranks, dtype=np.int64), minlength=self.n_workers)

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "rank"])
            w.writerows(zip(self.steps, self.ranks))


@dataclass
class StepResult:
    """Outcome of one aggregation round.

    ``aggregates`` holds each worker's own copy of the averaged gradient.
    ``t_comp`` is measured wall time of the compress/decompress work (the
    slowest worker, since workers compress in parallel).
    """

    aggregates: list[DenseGrad]
    gain: float
    t_sync: float
    t_comp: float
    selected_rank: int = -1
    kept: list[SparseGrad] = field(default_factory=list)
    error_fed: list[DenseGrad] = field(default_factory=list)

    @property
    def aggregate(self) -> DenseGrad:
        return self.aggregates[0]


def select_star(i: int, n: int) -> int:
    if n < 1:
        raise ValueError("N must be >= 1")
    return i % n


def select_var(cluster: Cluster, local_sparse: Sequence[SparseGrad]) -> int:
    """Rank whose compressed gradient has the largest squared norm.

    Each worker fills its own slot of an N-entry array and the arrays are
    allgathered (4N bytes per worker). Ties go to the lowest rank.
    """
    n = cluster.n
    payloads = []
    for r, s in enumerate(local_sparse):
        var = np.zeros(n)
        var[r] = float(np.dot(s.values, s.values))
        payloads.append(var)
    gathered = cluster.allgather(payloads, VAR_BYTES_PER_ENTRY * n)
    var = np.sum(gathered[0], axis=0)
    return int(np.argmax(var))


def _sync_delta(cluster: Cluster, before: float) -> float:
    return cluster.clock.totals[cluster.category] - before


def artopk_step(
    cluster: Cluster,
    grads: Sequence[DenseGrad],
    residuals: ResidualStore,
    c: float,
    mode: SelectionMode | str = SelectionMode.STAR,
    algo: str = "ring",
    step: int = 0,
    reduce_op: str = "avg",
) -> StepResult:
    n = cluster.n
    if len(grads) != n:
        raise ValueError(f"expected {n} gradients, got {len(grads)}")
    mode = SelectionMode(mode)
    G = grads[0].size
    before = cluster.clock.totals[cluster.category]

    g_es, locals_, t_comp = [], [], 0.0
    for r, g_o in enumerate(grads):
        t0 = time.perf_counter()
        g_e = error_feedback(g_o, residuals, r)
        local = topk_exact(g_e, c)
        t_comp = max(t_comp, time.perf_counter() - t0)
        g_es.append(g_e)
        locals_.append(local)

    if mode is SelectionMode.STAR:
        chosen = select_star(step, n)
    else:
        chosen = select_var(cluster, locals_)

    k = locals_[chosen].k
    indices = cluster.broadcast(chosen, locals_[chosen].indices, cluster.wire_bytes(k))

    kept, worst = [], 0.0
    for r in range(n):
        t0 = time.perf_counter()
        own = gather(g_es[r], indices[r])
        residuals.set(r, residual_update(g_es[r], own))
        worst = max(worst, time.perf_counter() - t0)
        kept.append(own)

    reduced = cluster.allreduce([s.values for s in kept], cluster.wire_bytes(k), reduce_op, algo)

    aggregates, t_dec = [], 0.0
    for r in range(n):
        t0 = time.perf_counter()
        dense = np.zeros(G)
        dense[indices[r]] = reduced[r]
        aggregates.append(DenseGrad(dense, grads[r].layer_map))
        t_dec = max(t_dec, time.perf_counter() - t0)

    return StepResult(
        aggregates=aggregates,
        gain=pooled_gain(g_es, kept),
        t_sync=_sync_delta(cluster, before),
        t_comp=t_comp + worst + t_dec,
        selected_rank=chosen,
        kept=kept,
        error_fed=g_es,
    )


def ag_step(
    cluster: Cluster,
    grads: Sequence[DenseGrad],
    residuals: ResidualStore,
    c: float,
    compressor: str = "exact",
    rounds: int = DEFAULT_ROUNDS,
    reduce_op: str = "avg",
) -> StepResult:
    """Each worker sends its own (index, value) pairs to everyone.

    Every index is averaged over all N workers, whether or not they kept it;
    non-contributors' mass stays in their residuals.
    """
    n = cluster.n
    if len(grads) != n:
        raise ValueError(f"expected {n} gradients, got {len(grads)}")
    G = grads[0].size
    before = cluster.clock.totals[cluster.category]

    g_es, kept, t_comp = [], [], 0.0
    for r, g_o in enumerate(grads):
        t0 = time.perf_counter()
        g_e, g_c = apply_compression(g_o, residuals, r, c, compressor, rounds)
        t_comp = max(t_comp, time.perf_counter() - t0)
        g_es.append(g_e)
        kept.append(g_c)

    # allgather needs equal-length payloads; pad with index -1
    width = max(s.k for s in kept)
    payloads = []
    for s in kept:
        buf = np.zeros((2, width))
        buf[0, :] = -1
        buf[0, : s.k] = s.indices
        buf[1, : s.k] = s.values
        payloads.append(buf)
    gathered = cluster.allgather(payloads, 2 * cluster.wire_bytes(width))

    t0 = time.perf_counter()
    acc = np.zeros(G)
    for buf in gathered[0]:
        mask = buf[0] >= 0
        acc[buf[0, mask].astype(np.int64)] += buf[1, mask]
    if reduce_op == "avg":
        acc = acc / n
    elif reduce_op != "sum":
        raise ValueError(f"unknown reduce op {reduce_op!r}")
    t_dec = time.perf_counter() - t0
    aggregates = [DenseGrad(acc, grads[r].layer_map) for r in range(n)]

    return StepResult(
        aggregates=aggregates,
        gain=pooled_gain(g_es, kept),
        t_sync=_sync_delta(cluster, before),
        t_comp=t_comp + t_dec,
        kept=kept,
        error_fed=g_es,
    )


def dense_step(
    cluster: Cluster,
    grads: Sequence[DenseGrad],
    algo: str = "ring",
    reduce_op: str = "avg",
) -> StepResult:
    """Uncompressed allreduce of the full gradients."""
    before = cluster.clock.totals[cluster.category]
    G = grads[0].size
    reduced = cluster.allreduce([g.values for g in grads], cluster.wire_bytes(G), reduce_op, algo)
    aggregates = [DenseGrad(v, g.layer_map) for v, g in zip(reduced, grads)]
    return StepResult(aggregates=aggregates, gain=1.0, t_sync=_sync_delta(cluster, before), t_comp=0.0)


__all__ = [
    "SelectionLog",
    "SelectionMode",
    "StepResult",
    "ag_step",
    "artopk_step",
    "dense_step",
    "select_star",
    "select_var",
]

"""In-process Allgather / Broadcast / Allreduce over N logical workers.

One coordinator runs every collective. Results are computed once and handed
to each worker as its own copy. Each call charges the matching alpha-beta
cost to the simulated clock.
"""

from __future__ import annotations

from contextlib import contextmanager
from typing import Iterator, Sequence

import numpy as np

from flexcomm import costmodel as cm
from flexcomm.costmodel import NetParams
from flexcomm.netsched import SimClock


class Cluster:
    def __init__(
        self,
        n: int,
        net: NetParams,
        clock: SimClock | None = None,
        bytes_per_element: float = cm.BYTES_PER_VALUE,
    ) -> None:
        if n < 1:
            raise ValueError("cluster needs at least one worker")
        self.n = n
        self.net = net
        self.clock = clock if clock is not None else SimClock()
        self.bytes_per_element = bytes_per_element
        self.category = "sync"

    def wire_bytes(self, count: int) -> float:
        """Bytes on the wire for ``count`` gradient values (or indices)."""
        return count * self.bytes_per_element

    @contextmanager
    def charging(self, category: str) -> Iterator[None]:
        prev, self.category = self.category, category
        try:
            yield
        finally:
            self.category = prev

    def _charge(self, seconds: float) -> float:
        self.clock.charge(self.category, seconds)
        return seconds

    def _check_rank(self, rank: int) -> None:
        if not 0 <= rank < self.n:
            raise ValueError(f"rank {rank} outside [0, {self.n})")

    def allgather(self, payloads: Sequence[np.ndarray], nbytes: float) -> list[list[np.ndarray]]:
        """Every worker receives ``[payload_0, ..., payload_{N-1}]``.

        ``nbytes`` is the per-worker payload size used for charging.
        """
        if len(payloads) != self.n:
            raise ValueError(f"expected {self.n} payloads, got {len(payloads)}")
        arrays = [np.asarray(p) for p in payloads]
        if any(a.shape != arrays[0].shape for a in arrays):
            raise ValueError("allgather payload sizes differ across workers")
        self._charge(cm.allgather_time(self.net, nbytes, self.n))
        return [[a.copy() for a in arrays] for _ in range(self.n)]

    def broadcast(self, src: int, payload: np.ndarray, nbytes: float) -> list[np.ndarray]:
        self._check_rank(src)
        self._charge(cm.broadcast_time(self.net, nbytes, self.n))
        data = np.asarray(payload)
        return [data.copy() for _ in range(self.n)]

    def allreduce(
        self,
        vectors: Sequence[np.ndarray],
        nbytes: float,
        op: str = "avg",
        algo: str = "ring",
    ) -> list[np.ndarray]:
        """Rank-ordered sum (or average), identical on every worker.

        The arithmetic does not depend on ``algo``; only the charged time does.
        """
        if len(vectors) != self.n:
            raise ValueError(f"expected {self.n} vectors, got {len(vectors)}")
        if op not in ("sum", "avg"):
            raise ValueError(f"unknown reduce op {op!r}")
        vecs = [np.asarray(v, dtype=np.float64) for v in vectors]
        if any(v.shape != vecs[0].shape for v in vecs):
            raise ValueError("allreduce vector lengths differ across workers")
        seconds = cm.allreduce_time(self.net, nbytes, self.n, algo)
        acc = vecs[0].copy()
        for v in vecs[1:]:
            acc = acc + v
        if op == "avg":
            acc = acc / self.n
        self._charge(seconds)
        return [acc.copy() for _ in range(self.n)]

"""Alpha-beta communication costs and closed-form collective selection.

Units: latency ``alpha`` in seconds, bandwidth in bits/s, payload ``M`` in
bytes. ``beta`` is seconds per byte (8 / bandwidth). Logs are base 2, so a
single worker pays nothing for any ``log N`` or ``N - 1`` term.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from enum import Enum

from flexcomm.compressors import check_ratio

BYTES_PER_VALUE = 4
BYTES_PER_INDEX = 4


class Collective(str, Enum):
    AG = "AG"
    ART_RING = "ART_RING"
    ART_TREE = "ART_TREE"
    DENSE = "DENSE"

    def __str__(self) -> str:
        return self.value


# argmin scan order; on exact ties the earlier entry wins
SELECTABLE = (Collective.AG, Collective.ART_RING, Collective.ART_TREE)


@dataclass(frozen=True)
class NetParams:
    alpha: float
    bandwidth: float

    def __post_init__(self) -> None:
        if not self.alpha >= 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")
        if not self.bandwidth > 0 or math.isinf(self.bandwidth):
            raise ValueError(f"bandwidth must be positive and finite, got {self.bandwidth}")

    @property
    def beta(self) -> float:
        return 8.0 / self.bandwidth

    @classmethod
    def from_ms_gbps(cls, alpha_ms: float, bandwidth_gbps: float) -> "NetParams":
        return cls(alpha_ms * 1e-3, bandwidth_gbps * 1e9)


@dataclass(frozen=True)
class MessageSpec:
    M: float
    c: float
    N: int

    def __post_init__(self) -> None:
        if self.M < BYTES_PER_VALUE:
            raise ValueError(f"M must be >= {BYTES_PER_VALUE} bytes")
        if self.N < 1:
            raise ValueError("N must be >= 1")
        check_ratio(self.c)

    @property
    def ag_bytes(self) -> float:
        return 2.0 * self.M * self.c

    @property
    def art_value_bytes(self) -> float:
        return self.M * self.c

    @property
    def art_index_bytes(self) -> float:
        return self.M * self.c


@dataclass(frozen=True)
class CostBreakdown:
    ps: float
    ring_ar: float
    tree_ar: float
    broadcast: float
    allgather_dense: float
    ag_compressed: float
    art_ring: float
    art_tree: float

    def as_dict(self) -> dict[str, float]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def of(self, coll: Collective) -> float:
        return {
            Collective.AG: self.ag_compressed,
            Collective.ART_RING: self.art_ring,
            Collective.ART_TREE: self.art_tree,
            Collective.DENSE: self.ring_ar,
        }[Collective(coll)]


def log2n(N: int) -> float:
    return math.log2(N) if N > 1 else 0.0


# primitive costs for a payload of ``nbytes`` per worker

def ps_time(net: NetParams, nbytes: float, N: int) -> float:
    return 2 * net.alpha + 2 * (N - 1) * nbytes * net.beta


def ring_allreduce_time(net: NetParams, nbytes: float, N: int) -> float:
    return 2 * (N - 1) * net.alpha + 2 * ((N - 1) / N) * nbytes * net.beta


def tree_allreduce_time(net: NetParams, nbytes: float, N: int) -> float:
    L = log2n(N)
    return 2 * net.alpha * L + 2 * L * nbytes * net.beta


def broadcast_time(net: NetParams, nbytes: float, N: int) -> float:
    L = log2n(N)
    return net.alpha * L + L * nbytes * net.beta


def allgather_time(net: NetParams, nbytes: float, N: int) -> float:
    return net.alpha * log2n(N) + (N - 1) * nbytes * net.beta


def allreduce_time(net: NetParams, nbytes: float, N: int, algo: str) -> float:
    if algo == "ring":
        return ring_allreduce_time(net, nbytes, N)
    if algo == "tree":
        return tree_allreduce_time(net, nbytes, N)
    raise ValueError(f"unknown allreduce algorithm {algo!r}")


def cost_ag_compressed(net: NetParams, msg: MessageSpec) -> float:
    return net.alpha * log2n(msg.N) + 2 * msg.M * msg.c * net.beta * (msg.N - 1)


def cost_art_ring(net: NetParams, msg: MessageSpec) -> float:
    N, L = msg.N, log2n(msg.N)
    return net.alpha * (2 * (N - 1) + L) + msg.M * msg.c * net.beta * (2 * (N - 1) / N + L)


def cost_art_tree(net: NetParams, msg: MessageSpec) -> float:
    L = log2n(msg.N)
    return 3 * net.alpha * L + 3 * msg.M * msg.c * net.beta * L


def cost_primitives(net: NetParams, msg: MessageSpec) -> CostBreakdown:
    M, N = msg.M, msg.N
    return CostBreakdown(
        ps=ps_time(net, M, N),
        ring_ar=ring_allreduce_time(net, M, N),
        tree_ar=tree_allreduce_time(net, M, N),
        broadcast=broadcast_time(net, M, N),
        allgather_dense=allgather_time(net, M, N),
        ag_compressed=cost_ag_compressed(net, msg),
        art_ring=cost_art_ring(net, msg),
        art_tree=cost_art_tree(net, msg),
    )


def select_collective(net: NetParams, msg: MessageSpec) -> tuple[Collective, CostBreakdown]:
    """Cheapest of AG, ART-Ring and ART-Tree for this network and message."""
    if msg.N < 2:
        raise ValueError("selection undefined for single worker")
    costs = cost_primitives(net, msg)
    best = min(SELECTABLE, key=costs.of)
    return best, costs


# Closed-form latency/bandwidth conditions. Each coefficient k(N) defines the
# condition alpha/beta < k(N) * M * c; infinity means "always holds".

def ring_over_tree_coef(N: int) -> float:
    L = log2n(N)
    denom = N - 1 - L
    if denom == 0:
        return math.inf
    return (L - (N - 1) / N) / denom


def ring_over_ag_coef(N: int) -> float:
    return 1 - 1 / N - log2n(N) / (2 * (N - 1))


def tree_over_ag_coef(N: int) -> float:
    return (N - 1) / log2n(N) - 1.5


PAIR_COEFS = {
    (Collective.ART_RING, Collective.ART_TREE): ring_over_tree_coef,
    (Collective.ART_RING, Collective.AG): ring_over_ag_coef,
    (Collective.ART_TREE, Collective.AG): tree_over_ag_coef,
}


def prefers(net: NetParams, msg: MessageSpec, winner: Collective, loser: Collective) -> bool:
    """Closed-form test that ``winner`` is strictly cheaper than ``loser``."""
    if msg.N < 2:
        raise ValueError("selection undefined for single worker")
    coef = PAIR_COEFS[(Collective(winner), Collective(loser))](msg.N)
    return net.alpha / net.beta < coef * msg.M * msg.c


def select_closed_form(net: NetParams, msg: MessageSpec) -> Collective:
    """Collective choice from the three pairwise conditions alone."""
    if prefers(net, msg, Collective.ART_RING, Collective.ART_TREE):
        ar = Collective.ART_RING
    else:
        ar = Collective.ART_TREE
    return ar if prefers(net, msg, ar, Collective.AG) else Collective.AG


def crossover_cr(
    net: NetParams,
    M: float,
    N: int,
    between: tuple[Collective | str, Collective | str] = (Collective.ART_RING, Collective.AG),
) -> float | None:
    """CR at which the pairwise preference in ``between`` flips.

    For c above the returned value the first collective is cheaper. Returns
    0.0 when the first always wins and None when no flip exists in (0, 1].
    """
    if N < 2:
        raise ValueError("crossover undefined for single worker")
    pair = (Collective(between[0]), Collective(between[1]))
    if pair not in PAIR_COEFS:
        raise ValueError(f"no closed form for pair {pair}")
    coef = PAIR_COEFS[pair](N)
    ratio = net.alpha / net.beta
    if math.isinf(coef) or ratio == 0:
        return 0.0 if coef > 0 else None
    if coef <= 0:
        return None
    c_star = ratio / (M * coef)
    return c_star if c_star <= 1.0 else None

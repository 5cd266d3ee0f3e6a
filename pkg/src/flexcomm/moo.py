"""Adaptive compression-ratio controller.

Candidates from a geometric CR ladder are probed for a few real steps from
an in-memory checkpoint, then scored on (compression time, modeled sync
time, 1/gain). The knee of the non-dominated set is the new CR, and the
collective is whichever the cost model says is cheapest for it.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from flexcomm.compressors import GainTracker
from flexcomm.costmodel import Collective, MessageSpec, NetParams, select_collective
from flexcomm.netsched import network_changed


@dataclass(frozen=True)
class ControllerConfig:
    c_low: float = 0.001
    c_high: float = 0.1
    factor: float = 3.0
    probe_iters: int = 10
    gain_threshold: float = 0.10
    net_change_threshold: float = 0.0

    def __post_init__(self) -> None:
        if not 0 < self.c_low <= self.c_high <= 1:
            raise ValueError("need 0 < c_low <= c_high <= 1")
        if self.factor <= 1:
            raise ValueError("ladder factor must exceed 1")
        if self.probe_iters < 1:
            raise ValueError("probe_iters must be >= 1")
        if self.gain_threshold < 0:
            raise ValueError("gain_threshold must be >= 0")


@dataclass(frozen=True)
class CandidateCR:
    c: float
    gain_avg: float
    t_comp_avg: float
    t_sync_modeled: float = 0.0
    collective: Collective | None = None

    @property
    def objectives(self) -> tuple[float, float, float]:
        return (self.t_comp_avg, self.t_sync_modeled, 1.0 / self.gain_avg)


@dataclass
class Snapshot:
    """Deep copy of everything a probe can disturb."""

    replicas: list[np.ndarray]
    velocity: list[np.ndarray] | None
    residuals: Any
    rng_state: dict
    step: int
    cursor: int
    perms: list[np.ndarray] | None
    tracker_state: tuple


def _round_sig(x: float, digits: int = 3) -> float:
    if x == 0:
        return 0.0
    return round(x, digits - 1 - int(math.floor(math.log10(abs(x)))))


def candidate_ladder(cfg: ControllerConfig) -> list[float]:
    """Descending CRs c_high, c_high/f, ... ending exactly at c_low."""
    if cfg.c_low == cfg.c_high:
        return [cfg.c_high]
    rungs = int(round(math.log(cfg.c_high / cfg.c_low) / math.log(cfg.factor))) + 1
    out = []
    for i in range(max(rungs - 1, 1)):
        c = _round_sig(cfg.c_high / cfg.factor**i)
        if c > cfg.c_low and (not out or c < out[-1]):
            out.append(c)
    out.append(cfg.c_low)
    return out


def explore(trainer: Any, cfg: ControllerConfig, ladder: Sequence[float] | None = None) -> list[CandidateCR]:
    """Probe every candidate from the same checkpoint and restore afterwards.

    Probes run AR-Top-k with the trainer's selection mode; all simulated time
    lands in the "exploration" clock category.
    """
    ladder = candidate_ladder(cfg) if ladder is None else ladder
    out = []
    for c in ladder:
        snap = trainer.snapshot()
        try:
            with trainer.probing():
                ms = [trainer.step(c, Collective.ART_RING) for _ in range(cfg.probe_iters)]
        except FloatingPointError as exc:
            warnings.warn(f"probe at c={c} diverged ({exc}); candidate discarded")
            continue
        finally:
            trainer.restore(snap)
        gains = [m.gain for m in ms]
        times = [m.t_comp_decomp for m in ms]
        out.append(CandidateCR(c, math.fsum(gains) / len(gains), math.fsum(times) / len(times)))
    return out


def trigger_gain(tracker: GainTracker, cfg: ControllerConfig, gain_ref: float | None) -> bool:
    """True once the rolling gain drifts ``gain_threshold`` (relative) from the reference."""
    if gain_ref is None or tracker.count < 2:
        return False
    return abs(tracker.mean - gain_ref) / gain_ref >= cfg.gain_threshold


def refresh_sync(cands: Sequence[CandidateCR], net: NetParams, M: float, N: int) -> list[CandidateCR]:
    """Recompute only the modeled sync time (and best collective) per candidate."""
    out = []
    for cand in cands:
        coll, costs = select_collective(net, MessageSpec(M, cand.c, N))
        out.append(replace(cand, t_sync_modeled=costs.of(coll), collective=coll))
    return out


def dominates(a: Sequence[float], b: Sequence[float]) -> bool:
    return all(x <= y for x, y in zip(a, b)) and any(x < y for x, y in zip(a, b))


def non_dominated_sort(points: Sequence[Sequence[float]]) -> list[list[int]]:
    """Fast non-dominated sorting; returns fronts of point indices, best first."""
    n = len(points)
    dominated_by: list[list[int]] = [[] for _ in range(n)]
    counts = [0] * n
    for i in range(n):
        for j in range(i + 1, n):
            if dominates(points[i], points[j]):
                dominated_by[i].append(j)
                counts[j] += 1
            elif dominates(points[j], points[i]):
                dominated_by[j].append(i)
                counts[i] += 1
    fronts = [[i for i in range(n) if counts[i] == 0]]
    while fronts[-1]:
        nxt = []
        for i in fronts[-1]:
            for j in dominated_by[i]:
                counts[j] -= 1
                if counts[j] == 0:
                    nxt.append(j)
        fronts.append(sorted(nxt))
    return fronts[:-1]


def pareto_front(
    cands: Sequence[CandidateCR],
    net: NetParams | None = None,
    M: float | None = None,
    N: int | None = None,
) -> list[CandidateCR]:
    if not cands:
        raise ValueError("no candidates")
    if net is not None:
        cands = refresh_sync(cands, net, M, N)
    first = non_dominated_sort([c.objectives for c in cands])[0]
    return [cands[i] for i in first]


def knee_distances(front: Sequence[CandidateCR]) -> list[float]:
    """Distance to the ideal point after min-max scaling each objective."""
    pts = np.array([c.objectives for c in front], dtype=np.float64)
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    scaled = np.where(hi > lo, (pts - lo) / span, 0.0)
    return [float(d) for d in np.sqrt((scaled**2).sum(axis=1))]


def choose_cr(front: Sequence[CandidateCR], net: NetParams, M: float, N: int) -> tuple[float, Collective]:
    if not front:
        raise ValueError("empty front")
    dist = knee_distances(front)
    best = min(range(len(front)), key=lambda i: (dist[i], -front[i].c))
    c = front[best].c
    coll, _ = select_collective(net, MessageSpec(M, c, N))
    return c, coll


@dataclass(frozen=True)
class ControllerEvent:
    step: int
    trigger: str
    chosen_c: float
    chosen_collective: str
    front_size: int


@dataclass
class Decision:
    step: int
    trigger: str
    c: float
    collective: Collective
    net: NetParams
    front: list[CandidateCR]
    candidates: list[CandidateCR]


@dataclass
class Controller:
    cfg: ControllerConfig
    M: float
    N: int
    c: float | None = None
    collective: Collective | None = None
    gain_ref: float | None = None
    prev_net: NetParams | None = None
    candidates: list[CandidateCR] = field(default_factory=list)
    events: list[ControllerEvent] = field(default_factory=list)
    decisions: list[Decision] = field(default_factory=list)

    def _explore(self, trainer: Any) -> None:
        self.candidates = explore(trainer, self.cfg)

    def _decide(self, trainer: Any, trigger: str, net: NetParams) -> tuple[float, Collective]:
        self.candidates = refresh_sync(self.candidates, net, self.M, self.N)
        front = pareto_front(self.candidates)
        c, coll = choose_cr(front, net, self.M, self.N)
        if (c, coll) != (self.c, self.collective):
            # gain samples from another CR or protocol are not comparable
            trainer.tracker.reset()
            self.gain_ref = None
        self.c, self.collective = c, coll
        step = trainer.step_idx
        self.decisions.append(Decision(step, trigger, c, coll, net, front, list(self.candidates)))
        self.events.append(ControllerEvent(step, trigger, c, str(coll), len(front)))
        return c, coll

    def on_step(self, trainer: Any, net: NetParams) -> tuple[float, Collective] | None:
        """Run before each training step; returns (c, collective) when a choice was made."""
        if self.c is None:
            self._explore(trainer)
            self.prev_net = net
            return self._decide(trainer, "init", net)

        tracker = trainer.tracker
        if self.gain_ref is None:
            if tracker.count >= tracker.window:
                self.gain_ref = tracker.mean
        elif trigger_gain(tracker, self.cfg, self.gain_ref):
            self._explore(trainer)
            self.gain_ref = tracker.mean
            front = pareto_front(refresh_sync(self.candidates, net, self.M, self.N))
            self.events.append(
                ControllerEvent(trainer.step_idx, "gain", self.c, str(self.collective), len(front))
            )

        if network_changed(self.prev_net, net, self.cfg.net_change_threshold):
            self.prev_net = net
            return self._decide(trainer, "network", net)
        return None

    def write_events(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "trigger", "chosen_c", "chosen_collective", "front_size"])
            for e in self.events:
                w.writerow([e.step, e.trigger, e.chosen_c, e.chosen_collective, e.front_size])

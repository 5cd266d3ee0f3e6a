"""Epoch-indexed network schedules, trace files and the simulated clock."""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from flexcomm.costmodel import NetParams

CATEGORIES = ("compute", "sync", "compression", "io", "exploration")

LOW_ALPHA_MS, HIGH_ALPHA_MS = 1.0, 50.0
HIGH_BW_GBPS, LOW_BW_GBPS = 25.0, 1.0
# placeholder "moderate" setting for the c2 preset
MODERATE = (10.0, 10.0)

# (start epoch for a 50-epoch run, alpha_ms, bandwidth_gbps)
PRESETS: dict[str, tuple[tuple[int, float, float], ...]] = {
    "c1": (
        (0, LOW_ALPHA_MS, HIGH_BW_GBPS),
        (13, LOW_ALPHA_MS, LOW_BW_GBPS),
        (25, HIGH_ALPHA_MS, LOW_BW_GBPS),
        (37, HIGH_ALPHA_MS, HIGH_BW_GBPS),
    ),
    "c2": (
        (0, LOW_ALPHA_MS, HIGH_BW_GBPS),
        (12, *MODERATE),
        (20, HIGH_ALPHA_MS, LOW_BW_GBPS),
        (28, *MODERATE),
        (36, LOW_ALPHA_MS, HIGH_BW_GBPS),
    ),
}
PRESET_EPOCHS = 50


@dataclass(frozen=True)
class Segment:
    start_epoch: int
    net: NetParams


@dataclass(frozen=True)
class NetworkSchedule:
    segments: tuple[Segment, ...]

    def __post_init__(self) -> None:
        if not self.segments:
            raise ValueError("schedule needs at least one segment")
        starts = [s.start_epoch for s in self.segments]
        if starts[0] != 0:
            raise ValueError("first segment must start at epoch 0")
        if any(b <= a for a, b in zip(starts, starts[1:])):
            raise ValueError("segment start epochs must be strictly ascending")

    @property
    def starts(self) -> list[int]:
        return [s.start_epoch for s in self.segments]

    @classmethod
    def constant(cls, net: NetParams) -> "NetworkSchedule":
        return cls((Segment(0, net),))

    @classmethod
    def from_rows(cls, rows: Iterable[tuple[int, float, float]]) -> "NetworkSchedule":
        """Build from (start_epoch, alpha_ms, bandwidth_gbps) rows."""
        return cls(tuple(Segment(int(e), NetParams.from_ms_gbps(a, b)) for e, a, b in rows))

    def rows(self) -> list[tuple[int, float, float]]:
        return [(s.start_epoch, s.net.alpha * 1e3, s.net.bandwidth / 1e9) for s in self.segments]


def params_at(sched: NetworkSchedule, epoch: int) -> NetParams:
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    i = bisect.bisect_right(sched.starts, epoch) - 1
    return sched.segments[i].net


def network_changed(prev: NetParams | None, cur: NetParams, threshold: float = 0.0) -> bool:
    """True when latency or bandwidth moved; ``threshold`` is a relative tolerance."""
    if prev is None:
        return False
    if threshold <= 0:
        return prev.alpha != cur.alpha or prev.bandwidth != cur.bandwidth

    def rel(a: float, b: float) -> float:
        if a == b:
            return 0.0
        return abs(b - a) / max(abs(a), 1e-300)

    return rel(prev.alpha, cur.alpha) > threshold or rel(prev.bandwidth, cur.bandwidth) > threshold


def preset(name: str, epochs: int = PRESET_EPOCHS) -> NetworkSchedule:
    """Preset schedule with its 50-epoch boundaries rescaled to ``epochs``."""
    if name not in PRESETS:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    if epochs < 1:
        raise ValueError("epochs must be >= 1")
    rows = []
    for start, a, b in PRESETS[name]:
        scaled = math.floor(start * epochs / PRESET_EPOCHS + 0.5)
        if rows and scaled <= rows[-1][0]:
            raise ValueError(f"{epochs} epochs is too short for preset {name!r}")
        rows.append((scaled, a, b))
    return NetworkSchedule.from_rows(rows)


def _fmt(x: float) -> str:
    return format(x, ".12g")


def write_trace(sched: NetworkSchedule, path: str | Path, header: str | None = None) -> None:
    lines = [f"# {header}"] if header else []
    lines.append("# start_epoch,alpha_ms,bandwidth_gbps")
    lines += [f"{e},{_fmt(a)},{_fmt(b)}" for e, a, b in sched.rows()]
    Path(path).write_text("\n".join(lines) + "\n")


def parse_trace(text: str) -> NetworkSchedule:
    rows = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 3:
            raise ValueError(f"line {lineno}: expected start_epoch,alpha_ms,bandwidth_gbps")
        try:
            rows.append((int(parts[0]), float(parts[1]), float(parts[2])))
        except ValueError as exc:
            raise ValueError(f"line {lineno}: {exc}") from None
    return NetworkSchedule.from_rows(rows)


def read_trace(path: str | Path) -> NetworkSchedule:
    return parse_trace(Path(path).read_text())


@dataclass
class SimClock:
    """Simulated time; ``now`` is always the sum of the per-category totals."""

    totals: dict[str, float] = field(default_factory=lambda: {c: 0.0 for c in CATEGORIES})

    @property
    def now(self) -> float:
        return math.fsum(self.totals.values())

    def charge(self, category: str, seconds: float) -> None:
        if category not in self.totals:
            raise ValueError(f"unknown clock category {category!r}")
        if not seconds >= 0:
            raise ValueError(f"negative duration {seconds}")
        self.totals[category] += seconds


def charge(clock: SimClock, category: str, seconds: float) -> None:
    clock.charge(category, seconds)

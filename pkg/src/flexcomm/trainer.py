"""Synchronous data-parallel SGD on desk-scale models with simulated communication.

Gradients, compression and aggregation are real; network time comes from
the alpha-beta model. Step time is the plain sum
compute + sync + io + compress/decompress (no overlap).
"""

from __future__ import annotations

import copy
import csv
import math
import time
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from flexcomm.artopk import SelectionLog, SelectionMode, ag_step, artopk_step, dense_step
from flexcomm.collectives import Cluster
from flexcomm.compressors import DEFAULT_ROUNDS, GainTracker, k_for
from flexcomm.core import DenseGrad, ResidualStore
from flexcomm.costmodel import Collective, MessageSpec, NetParams, select_collective
from flexcomm.data import SyntheticDataset, make_blobs
from flexcomm.models import SmallModel
from flexcomm.moo import ControllerConfig, Snapshot
from flexcomm.netsched import NetworkSchedule, SimClock, params_at


class TrainingDiverged(FloatingPointError):
    pass


@dataclass
class TrainConfig:
    n_workers: int = 4
    # model
    kind: str = "softmax_regression"
    features: int = 20
    hidden: int = 32
    classes: int = 2
    model_bytes: float | None = None
    # data
    samples_per_worker: int = 500
    separation: float = 3.0
    dataset_path: str | None = None
    # optimisation
    eta: float = 0.1
    batch_size: int = 16
    epochs: int = 5
    decay: tuple[tuple[int, float], ...] = ()
    momentum: float = 0.0
    seed: int = 0
    # compression
    method: str = "artopk"  # dense | artopk | ag
    cr: float | str = 0.01  # float or "adaptive"
    mode: str = "STAR"
    compressor: str = "exact"
    rounds: int = DEFAULT_ROUNDS
    reduce_algo: str = "ring"  # ring | tree | auto
    reduce_op: str = "avg"
    error_feedback: bool = True
    gain_window: int = 50
    # timing
    timing: str = "modeled"  # modeled | measured
    compute_ms: float = 10.0
    op_ns: float = 1.0
    t_io: float = 0.0
    threads: int = 1
    controller: ControllerConfig = field(default_factory=ControllerConfig)

    def __post_init__(self) -> None:
        if self.eta <= 0:
            raise ValueError("eta must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.n_workers < 1:
            raise ValueError("n_workers must be >= 1")
        if self.method not in ("dense", "artopk", "ag"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.reduce_algo not in ("ring", "tree", "auto"):
            raise ValueError(f"unknown reduce_algo {self.reduce_algo!r}")
        if self.reduce_op not in ("sum", "avg"):
            raise ValueError(f"unknown reduce_op {self.reduce_op!r}")
        if self.timing not in ("modeled", "measured"):
            raise ValueError(f"unknown timing {self.timing!r}")
        if self.t_io < 0:
            raise ValueError("t_io must be >= 0")
        SelectionMode(self.mode)
        if self.adaptive and self.method == "dense":
            raise ValueError("adaptive CR needs a compressing method")
        if not self.adaptive and not 0 < float(self.cr) <= 1:
            raise ValueError("cr must lie in (0, 1]")

    @property
    def adaptive(self) -> bool:
        return isinstance(self.cr, str) and self.cr == "adaptive"

    def eta_at(self, epoch: int) -> float:
        eta = self.eta
        for e, factor in self.decay:
            if epoch >= e:
                eta *= factor
        return eta


@dataclass(frozen=True)
class StepMetrics:
    step: int
    loss: float
    t_compute: float
    t_comp_decomp: float
    t_sync: float
    t_io: float
    t_step: float
    gain: float
    cr_used: float
    collective_used: str
    selected_rank: int


METRIC_FIELDS = [f.name for f in fields(StepMetrics)]


def sgd_update(
    params: np.ndarray,
    aggregated: DenseGrad,
    eta: float,
    velocity: np.ndarray | None = None,
    momentum: float = 0.0,
) -> np.ndarray:
    """w - eta * g (or heavy-ball with ``momentum``); updates ``velocity`` in place."""
    g = aggregated.values
    if g.shape != params.shape:
        raise ValueError(f"gradient length {g.size} != parameter length {params.size}")
    if velocity is not None and momentum:
        velocity *= momentum
        velocity += g
        g = velocity
    return params - eta * g


def write_metrics_csv(rows: Sequence[StepMetrics], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(METRIC_FIELDS)
        for m in rows:
            w.writerow([getattr(m, f) for f in METRIC_FIELDS])


class Trainer:
    def __init__(
        self,
        cfg: TrainConfig,
        dataset: SyntheticDataset | None = None,
        net: NetParams | None = None,
    ) -> None:
        self.cfg = cfg
        self.model = SmallModel(cfg.kind, cfg.features, cfg.classes, cfg.hidden)
        if dataset is None:
            dataset = make_blobs(
                cfg.n_workers, cfg.samples_per_worker, cfg.features, cfg.classes, cfg.seed, cfg.separation
            )
        if dataset.n_workers != cfg.n_workers:
            raise ValueError("dataset shard count != n_workers")
        if dataset.X.shape[1] != cfg.features:
            raise ValueError("dataset feature count != model features")
        self.data = dataset
        self.G = self.model.n_params
        self.model_bytes = float(cfg.model_bytes) if cfg.model_bytes else 4.0 * self.G
        self.clock = SimClock()
        self.cluster = Cluster(
            cfg.n_workers,
            net or NetParams(0.0, 1e12),
            self.clock,
            bytes_per_element=self.model_bytes / self.G,
        )
        self.residuals = ResidualStore(cfg.n_workers, self.G)
        self.rng = np.random.default_rng(cfg.seed)
        init = self.model.init_params(np.random.default_rng([cfg.seed, 1]))
        self.replicas = [init.copy() for _ in range(cfg.n_workers)]
        self.velocity = [np.zeros(self.G) for _ in range(cfg.n_workers)] if cfg.momentum else None
        self.tracker = GainTracker(cfg.gain_window)
        self.selection = SelectionLog(cfg.n_workers)
        self.metrics: list[StepMetrics] = []
        self.step_idx = 0
        self.cursor = 0
        self.perms: list[np.ndarray] | None = None
        self.eta = cfg.eta
        self.probe_steps = 0
        self._probing = False
        self._pool = ThreadPoolExecutor(cfg.threads) if cfg.threads > 1 else None

    @property
    def steps_per_epoch(self) -> int:
        spe = self.data.shard_size // self.cfg.batch_size
        if spe < 1:
            raise ValueError("shard smaller than one batch")
        return spe

    # ---- checkpoint / probing ----

    def snapshot(self) -> Snapshot:
        return Snapshot(
            replicas=[p.copy() for p in self.replicas],
            velocity=None if self.velocity is None else [v.copy() for v in self.velocity],
            residuals=self.residuals.copy(),
            rng_state=copy.deepcopy(self.rng.bit_generator.state),
            step=self.step_idx,
            cursor=self.cursor,
            perms=None if self.perms is None else [p.copy() for p in self.perms],
            tracker_state=self.tracker.state(),
        )

    def restore(self, snap: Snapshot) -> None:
        self.replicas = [p.copy() for p in snap.replicas]
        self.velocity = None if snap.velocity is None else [v.copy() for v in snap.velocity]
        self.residuals = snap.residuals.copy()
        self.rng.bit_generator.state = copy.deepcopy(snap.rng_state)
        self.step_idx = snap.step
        self.cursor = snap.cursor
        self.perms = None if snap.perms is None else [p.copy() for p in snap.perms]
        self.tracker.load(snap.tracker_state)

    @contextmanager
    def probing(self) -> Iterator[None]:
        prev = self._probing
        self._probing = True
        try:
            with self.cluster.charging("exploration"):
                yield
        finally:
            self._probing = prev

    def _charge(self, category: str, seconds: float) -> None:
        self.clock.charge("exploration" if self._probing else category, seconds)

    # ---- one step ----

    def _next_batches(self) -> list[tuple[np.ndarray, np.ndarray]]:
        b = self.cfg.batch_size
        if self.perms is None or self.cursor >= self.steps_per_epoch:
            self.perms = [self.rng.permutation(len(s)) for s in self.data.shards]
            self.cursor = 0
        out = []
        for r, perm in enumerate(self.perms):
            rows = self.data.shards[r][perm[self.cursor * b : (self.cursor + 1) * b]]
            out.append((self.data.X[rows], self.data.y[rows]))
        self.cursor += 1
        return out

    def _grad(self, rank: int, batch: tuple[np.ndarray, np.ndarray]) -> tuple[float, np.ndarray, float]:
        t0 = time.perf_counter()
        # overflow is reported as TrainingDiverged by the caller
        with np.errstate(over="ignore", invalid="ignore"):
            loss, grad = self.model.loss_and_grad(self.replicas[rank], *batch)
        return loss, grad, time.perf_counter() - t0

    def modeled_comp_time(self, c: float, collective: Collective) -> float:
        """Heap top-k cost O(G + k log G) over the accounted model size."""
        if collective is Collective.DENSE:
            return 0.0
        g_eff = self.model_bytes / 4.0
        if collective is Collective.AG and self.cfg.compressor == "threshold":
            ops = self.cfg.rounds * g_eff
        else:
            ops = g_eff + k_for(c, max(1, int(round(g_eff)))) * math.log2(max(g_eff, 2.0))
        return ops * self.cfg.op_ns * 1e-9

    def step(self, c: float, collective: Collective | str) -> StepMetrics:
        cfg = self.cfg
        collective = Collective(collective)
        batches = self._next_batches()
        if self._pool is not None:
            results = list(self._pool.map(self._grad, range(cfg.n_workers), batches))
        else:
            results = [self._grad(r, b) for r, b in enumerate(batches)]
        losses = [r[0] for r in results]
        loss = math.fsum(losses) / len(losses)
        if not math.isfinite(loss) or not all(np.all(np.isfinite(r[1])) for r in results):
            raise TrainingDiverged(f"non-finite loss/gradient at step {self.step_idx} (c={c}, eta={self.eta})")
        grads = [DenseGrad(r[1], self.model.layer_map) for r in results]

        if collective is Collective.DENSE:
            res = dense_step(self.cluster, grads, "tree" if cfg.reduce_algo == "tree" else "ring", cfg.reduce_op)
        elif collective is Collective.AG:
            res = ag_step(self.cluster, grads, self.residuals, c, cfg.compressor, cfg.rounds, cfg.reduce_op)
        else:
            algo = "ring" if collective is Collective.ART_RING else "tree"
            res = artopk_step(self.cluster, grads, self.residuals, c, cfg.mode, algo, self.step_idx, cfg.reduce_op)
        if not cfg.error_feedback:
            self.residuals.reset()

        if cfg.timing == "modeled":
            t_compute = cfg.compute_ms * 1e-3
            t_comp = self.modeled_comp_time(c, collective)
        else:
            t_compute = max(r[2] for r in results)
            t_comp = res.t_comp
        self._charge("compute", t_compute)
        self._charge("compression", t_comp)
        self._charge("io", cfg.t_io)

        for r in range(cfg.n_workers):
            v = None if self.velocity is None else self.velocity[r]
            self.replicas[r] = sgd_update(self.replicas[r], res.aggregates[r], self.eta, v, cfg.momentum)
        ref = self.replicas[0]
        if any(not np.array_equal(ref, p) for p in self.replicas[1:]):
            raise RuntimeError(f"worker replicas diverged at step {self.step_idx}")

        m = StepMetrics(
            step=self.step_idx,
            loss=loss,
            t_compute=t_compute,
            t_comp_decomp=t_comp,
            t_sync=res.t_sync,
            t_io=cfg.t_io,
            t_step=t_compute + res.t_sync + cfg.t_io + t_comp,
            gain=res.gain,
            cr_used=1.0 if collective is Collective.DENSE else float(c),
            collective_used=str(collective),
            selected_rank=res.selected_rank,
        )
        self.step_idx += 1
        if self._probing:
            self.probe_steps += 1
        return m

    # ---- full run ----

    def fixed_choice(self, net: NetParams) -> tuple[float, Collective]:
        cfg = self.cfg
        if cfg.method == "dense":
            return 1.0, Collective.DENSE
        c = float(cfg.cr)
        if cfg.method == "ag":
            return c, Collective.AG
        if cfg.reduce_algo == "auto":
            if cfg.n_workers < 2:
                return c, Collective.ART_RING
            return c, select_collective(net, MessageSpec(self.model_bytes, c, cfg.n_workers))[0]
        return c, Collective.ART_RING if cfg.reduce_algo == "ring" else Collective.ART_TREE

    def run(self, schedule: NetworkSchedule | None = None, controller=None) -> list[StepMetrics]:
        """Train for ``cfg.epochs`` epochs; the network follows ``schedule`` per epoch."""
        cfg = self.cfg
        if cfg.adaptive and controller is None:
            raise ValueError("adaptive CR needs a controller")
        schedule = schedule or NetworkSchedule.constant(self.cluster.net)
        for epoch in range(cfg.epochs):
            net = params_at(schedule, epoch)
            self.cluster.net = net
            self.eta = cfg.eta_at(epoch)
            choice = None if controller else self.fixed_choice(net)
            for _ in range(self.steps_per_epoch):
                if controller is not None:
                    controller.on_step(self, net)
                    choice = (controller.c, controller.collective)
                m = self.step(*choice)
                self.metrics.append(m)
                self.tracker.push(m.gain)
                if m.selected_rank >= 0:
                    self.selection.record(m.step, m.selected_rank)
        return self.metrics

    def accuracy(self) -> float:
        return self.model.accuracy(self.replicas[0], self.data.X, self.data.y)

    def full_loss(self) -> float:
        return self.model.loss(self.replicas[0], self.data.X, self.data.y)

    def close(self) -> None:
        if self._pool is not None:
            self._pool.shutdown()


def summarize(trainer: Trainer, controller=None) -> dict:
    ms = trainer.metrics
    cr_counts: dict[str, int] = {}
    coll_counts: dict[str, int] = {}
    for m in ms:
        cr_counts[repr(m.cr_used)] = cr_counts.get(repr(m.cr_used), 0) + 1
        coll_counts[m.collective_used] = coll_counts.get(m.collective_used, 0) + 1
    out = {
        "steps": len(ms),
        "final_step_loss": ms[-1].loss if ms else None,
        "final_loss": trainer.full_loss(),
        "final_accuracy": trainer.accuracy(),
        "simulated_time_s": dict(trainer.clock.totals),
        "simulated_total_s": trainer.clock.now,
        "iterations_per_cr": cr_counts,
        "iterations_per_collective": coll_counts,
        "selection_counts": trainer.selection.counts.tolist(),
        "probe_steps": trainer.probe_steps,
    }
    if controller is not None:
        out["controller_events"] = [asdict(e) for e in controller.events]
    return out

"""Command-line entry point: plan, simulate, sweep and trace-gen.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import json
import os
import sys
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

from flexcomm.costmodel import Collective, MessageSpec, NetParams, crossover_cr, select_collective
from flexcomm.data import load_csv
from flexcomm.moo import Controller, ControllerConfig
from flexcomm.netsched import NetworkSchedule, parse_trace, preset, read_trace, write_trace
from flexcomm.trainer import TrainConfig, Trainer, summarize, write_metrics_csv
from flexcomm.validation import TABLES, write_sweep

SEED_ENV = "FLEXCOMM_SEED"


class ConfigError(ValueError):
    """Bad or inconsistent run configuration (exit code 2)."""


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _decay(s: str) -> tuple[tuple[int, float], ...]:
    """``"15:0.1, 30:0.1"`` -> ((15, 0.1), (30, 0.1))."""
    out = []
    for part in s.split(","):
        part = part.strip()
        if not part:
            continue
        epoch, factor = part.split(":")
        out.append((int(epoch), float(factor)))
    return tuple(sorted(out))


def _cr(s: str) -> float | str:
    s = s.strip().lower()
    return "adaptive" if s == "adaptive" else float(s)


# section -> key -> (target field, parser); "@" targets configure the network
SCHEMA: dict[str, dict[str, tuple[str, object]]] = {
    "cluster": {"n": ("n_workers", int)},
    "model": {
        "kind": ("kind", str),
        "features": ("features", int),
        "hidden": ("hidden", int),
        "classes": ("classes", int),
        "size_bytes_override": ("model_bytes", float),
    },
    "data": {
        "samples_per_worker": ("samples_per_worker", int),
        "separation": ("separation", float),
        "path": ("dataset_path", str),
    },
    "train": {
        "eta": ("eta", float),
        "batch": ("batch_size", int),
        "epochs": ("epochs", int),
        "seed": ("seed", int),
        "decay": ("decay", _decay),
        "momentum": ("momentum", float),
        "timing": ("timing", str),
        "compute_ms": ("compute_ms", float),
        "op_ns": ("op_ns", float),
        "threads": ("threads", int),
    },
    "compression": {
        "method": ("method", str),
        "c": ("cr", _cr),
        "mode": ("mode", str.upper),
        "compressor": ("compressor", str),
        "rounds": ("rounds", int),
        "reduce_algo": ("reduce_algo", str),
        "reduce_op": ("reduce_op", str),
        "error_feedback": ("error_feedback", _bool),
        "gain_window": ("gain_window", int),
    },
    "network": {
        "trace_path": ("@trace_path", str),
        "segments": ("@segments", str),
        "preset": ("@preset", str),
        "alpha_ms": ("@alpha_ms", float),
        "bandwidth_gbps": ("@bandwidth_gbps", float),
        "t_io_ms": ("@t_io_ms", float),
    },
    "controller": {
        "c_low": ("c_low", float),
        "c_high": ("c_high", float),
        "factor": ("factor", float),
        "probe_iters": ("probe_iters", int),
        "gain_threshold": ("gain_threshold", float),
        "net_change_threshold": ("net_change_threshold", float),
    },
}


@dataclass
class RunSpec:
    train: TrainConfig
    schedule: NetworkSchedule


def load_run_config(path: str | Path, seed_override: str | None = None) -> RunSpec:
    """Parse and validate an INI run config; raises ConfigError on any problem."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None

    train_kw: dict[str, object] = {}
    ctl_kw: dict[str, object] = {}
    net_kw: dict[str, object] = {}
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]; expected one of {sorted(SCHEMA)}")
        for key, raw in parser.items(section):
            if key not in SCHEMA[section]:
                raise ConfigError(f"unknown key {key!r} in [{section}]; expected one of {sorted(SCHEMA[section])}")
            target, conv = SCHEMA[section][key]
            try:
                value = conv(raw)
            except ValueError as exc:
                raise ConfigError(f"[{section}] {key}: {exc}") from None
            if target.startswith("@"):
                net_kw[target[1:]] = value
            elif section == "controller":
                ctl_kw[target] = value
            else:
                train_kw[target] = value

    if seed_override is not None:
        try:
            train_kw["seed"] = int(seed_override)
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer, got {seed_override!r}") from None

    base = path.parent
    if "dataset_path" in train_kw:
        ds = base / str(train_kw["dataset_path"])
        if not ds.is_file():
            raise ConfigError(f"dataset file not found: {ds}")
        train_kw["dataset_path"] = str(ds)
    if "t_io_ms" in net_kw:
        train_kw["t_io"] = float(net_kw["t_io_ms"]) * 1e-3

    try:
        train_kw["controller"] = ControllerConfig(**ctl_kw)
        cfg = TrainConfig(**train_kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None

    sources = [k for k in ("trace_path", "segments", "preset", "alpha_ms") if k in net_kw]
    if len(sources) > 1:
        raise ConfigError(f"[network] takes one of trace_path, segments, preset or alpha_ms; got {sources}")
    try:
        if "trace_path" in net_kw:
            trace = base / str(net_kw["trace_path"])
            if not trace.is_file():
                raise ConfigError(f"trace file not found: {trace}")
            schedule = read_trace(trace)
        elif "segments" in net_kw:
            schedule = parse_trace(str(net_kw["segments"]).replace(";", "\n"))
        elif "preset" in net_kw:
            schedule = preset(str(net_kw["preset"]).lower(), cfg.epochs)
        else:
            net = NetParams.from_ms_gbps(float(net_kw.get("alpha_ms", 1.0)), float(net_kw.get("bandwidth_gbps", 10.0)))
            schedule = NetworkSchedule.constant(net)
    except ValueError as exc:
        raise ConfigError(f"[network]: {exc}") from None
    return RunSpec(cfg, schedule)


def run_simulation(spec: RunSpec, out: str | Path) -> dict:
    """Train per ``spec`` and write metrics, selection, controller and summary files."""
    cfg = spec.train
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    dataset = load_csv(cfg.dataset_path, cfg.n_workers, cfg.seed) if cfg.dataset_path else None
    trainer = Trainer(cfg, dataset)
    controller = Controller(cfg.controller, trainer.model_bytes, cfg.n_workers) if cfg.adaptive else None
    try:
        trainer.run(spec.schedule, controller)
    finally:
        trainer.close()
    write_metrics_csv(trainer.metrics, out / "metrics.csv")
    trainer.selection.to_csv(out / "selection.csv")
    if controller is not None:
        controller.write_events(out / "controller.csv")
    else:
        with open(out / "controller.csv", "w", newline="") as fh:
            csv.writer(fh).writerow(["step", "trigger", "chosen_c", "chosen_collective", "front_size"])
    summary = summarize(trainer, controller)
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return summary


# ---- commands ----


def cmd_plan(args: argparse.Namespace) -> int:
    net = NetParams.from_ms_gbps(args.alpha_ms, args.bandwidth_gbps)
    msg = MessageSpec(args.model_bytes, args.cr, args.workers)
    best, costs = select_collective(net, msg)
    rows = [(name, t * 1e3) for name, t in costs.as_dict().items()]
    width = max(len(n) for n, _ in rows)
    print(f"alpha={args.alpha_ms} ms  bandwidth={args.bandwidth_gbps} Gbps  M={args.model_bytes:.6g} B  "
          f"N={args.workers}  c={args.cr}")
    for name, ms in rows:
        print(f"  {name:<{width}}  {ms:12.4f} ms")
    print(f"selected: {best}  ({costs.of(best) * 1e3:.4f} ms)")
    crossovers = []
    for pair in ((Collective.ART_RING, Collective.AG), (Collective.ART_TREE, Collective.AG),
                 (Collective.ART_RING, Collective.ART_TREE)):
        x = crossover_cr(net, args.model_bytes, args.workers, pair)
        crossovers.append((pair, x))
        shown = "never" if x is None else f"{x:.6g}"
        print(f"  {pair[0]} beats {pair[1]} for c > {shown}")
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["quantity", "value"])
            for name, ms in rows:
                w.writerow([f"{name}_ms", ms])
            w.writerow(["selected", str(best)])
            for (a, b), x in crossovers:
                w.writerow([f"crossover_{a.value.lower()}_vs_{b.value.lower()}", "" if x is None else x])
    return 0


def cmd_simulate(args: argparse.Namespace) -> int:
    spec = load_run_config(args.config, os.environ.get(SEED_ENV))
    if args.threads is not None:
        spec.train.threads = args.threads
    if args.net_change_threshold is not None:
        try:
            ctl = replace(spec.train.controller, net_change_threshold=args.net_change_threshold)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        spec.train.controller = ctl
    summary = run_simulation(spec, args.out)
    print(f"steps={summary['steps']}  final_loss={summary['final_loss']:.6g}  "
          f"accuracy={summary['final_accuracy']:.4f}  simulated={summary['simulated_total_s']:.6g} s")
    print(f"wrote {args.out}/metrics.csv, selection.csv, controller.csv, summary.json")
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    n = write_sweep(args.table, args.out)
    print(f"wrote {n} rows to {args.out}")
    return 0


def cmd_trace_gen(args: argparse.Namespace) -> int:
    if args.epochs < 1:
        raise ConfigError("--epochs must be >= 1")
    try:
        sched = preset(args.preset, args.epochs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    write_trace(sched, args.out, header=f"preset {args.preset}, {args.epochs} epochs")
    print(f"wrote {len(sched.segments)} segments to {args.out}")
    return 0


def _workers(s: str) -> int:
    n = int(s)
    if n < 2:
        raise argparse.ArgumentTypeError("need at least 2 workers (selection is undefined for a single worker)")
    return n


def _positive(s: str) -> float:
    x = float(s)
    if not x > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {s}")
    return x


def _ratio(s: str) -> float:
    x = float(s)
    if not 0 < x <= 1:
        raise argparse.ArgumentTypeError(f"CR must lie in (0, 1], got {s}")
    return x


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="flexcomm", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    plan = sub.add_parser("plan", help="cost of every collective for one network and message")
    plan.add_argument("--alpha-ms", type=float, required=True)
    plan.add_argument("--bandwidth-gbps", type=_positive, required=True)
    plan.add_argument("--model-bytes", type=_positive, required=True)
    plan.add_argument("--workers", type=_workers, required=True)
    plan.add_argument("--cr", type=_ratio, required=True)
    plan.add_argument("--csv", help="also write the table to this CSV file")
    plan.set_defaults(func=cmd_plan)

    sim = sub.add_parser("simulate", help="run a training simulation from an INI config")
    sim.add_argument("--config", required=True)
    sim.add_argument("--out", required=True, help="output directory")
    sim.add_argument("--threads", type=int, help="worker threads for gradient computation")
    sim.add_argument("--net-change-threshold", type=float,
                     help="relative alpha/bandwidth change that counts as a network change (default 0: any)")
    sim.set_defaults(func=cmd_simulate)

    sweep = sub.add_parser("sweep", help="compare predictions with a bundled measurement table")
    sweep.add_argument("--table", choices=TABLES, required=True)
    sweep.add_argument("--out", required=True)
    sweep.set_defaults(func=cmd_sweep)

    tg = sub.add_parser("trace-gen", help="write a preset network trace")
    tg.add_argument("--preset", choices=("c1", "c2"), required=True)
    tg.add_argument("--epochs", type=int, required=True)
    tg.add_argument("--out", required=True)
    tg.set_defaults(func=cmd_trace_gen)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"flexcomm {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - any runtime failure maps to exit 1
        print(f"flexcomm {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

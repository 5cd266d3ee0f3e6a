"""Compare cost-model predictions against the bundled measurement tables."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from importlib import resources

from flexcomm.costmodel import (
    SELECTABLE,
    Collective,
    MessageSpec,
    NetParams,
    cost_primitives,
    log2n,
    ring_allreduce_time,
)

TABLE_WORKERS = 8
BYTES_PER_PARAM = 4
# grid row used to back out each model's byte size
REFERENCE_ROW = (1.0, 10.0, 0.1)

TABLES = ("ring-ar-validation", "collective-grid")
_FILES = {"ring-ar-validation": "ring_ar_validation.csv", "collective-grid": "collective_grid.csv"}


def load_fixture(table: str) -> list[dict[str, str]]:
    if table not in _FILES:
        raise ValueError(f"unknown table {table!r}; choose from {', '.join(TABLES)}")
    text = resources.files("flexcomm").joinpath("fixtures", _FILES[table]).read_text()
    body = [line for line in text.splitlines() if line and not line.startswith("#")]
    return list(csv.DictReader(io.StringIO("\n".join(body))))


def rel_err(pred: float, ref: float) -> float:
    return abs(pred - ref) / abs(ref)


@dataclass(frozen=True)
class RingRow:
    tensor_params: int
    alpha_ms: float
    bandwidth_gbps: float
    model_bytes: float
    predicted_ms: float
    measured_ms: float

    @property
    def rel_err(self) -> float:
        return rel_err(self.predicted_ms, self.measured_ms)


def ring_ar_rows() -> list[RingRow]:
    out = []
    for r in load_fixture("ring-ar-validation"):
        params = int(r["tensor_params"])
        a, b = float(r["alpha_ms"]), float(r["bandwidth_gbps"])
        M = BYTES_PER_PARAM * params
        pred = ring_allreduce_time(NetParams.from_ms_gbps(a, b), M, TABLE_WORKERS) * 1e3
        out.append(RingRow(params, a, b, M, pred, float(r["ring_ar_ms"])))
    return out


def derive_model_bytes(rows: list[dict[str, str]] | None = None, N: int = TABLE_WORKERS) -> dict[str, float]:
    """Invert the compressed-allgather cost on each model's reference row."""
    rows = load_fixture("collective-grid") if rows is None else rows
    a_ref, b_ref, c_ref = REFERENCE_ROW
    net = NetParams.from_ms_gbps(a_ref, b_ref)
    out = {}
    for r in rows:
        key = (float(r["alpha_ms"]), float(r["bandwidth_gbps"]), float(r["cr"]))
        if key != REFERENCE_ROW:
            continue
        t = float(r["ag_ms"]) * 1e-3
        out[r["model"]] = (t - net.alpha * log2n(N)) / (2 * c_ref * net.beta * (N - 1))
    return out


_COLUMN = {Collective.AG: "ag_ms", Collective.ART_RING: "art_ring_ms", Collective.ART_TREE: "art_tree_ms"}


@dataclass(frozen=True)
class GridRow:
    model: str
    alpha_ms: float
    bandwidth_gbps: float
    cr: float
    model_bytes: float
    predicted_ms: dict[Collective, float]
    measured_ms: dict[Collective, float]
    measured_winner: Collective

    @property
    def predicted_winner(self) -> Collective:
        return min(SELECTABLE, key=self.predicted_ms.__getitem__)

    @property
    def rel_errs(self) -> dict[Collective, float]:
        return {k: rel_err(self.predicted_ms[k], self.measured_ms[k]) for k in SELECTABLE}

    @property
    def measured_margin(self) -> float:
        """Relative gap between the two fastest measured collectives."""
        first, second = sorted(self.measured_ms.values())[:2]
        return (second - first) / first


def collective_grid_rows() -> list[GridRow]:
    rows = load_fixture("collective-grid")
    sizes = derive_model_bytes(rows)
    out = []
    for r in rows:
        a, b, c = float(r["alpha_ms"]), float(r["bandwidth_gbps"]), float(r["cr"])
        M = sizes[r["model"]]
        costs = cost_primitives(NetParams.from_ms_gbps(a, b), MessageSpec(M, c, TABLE_WORKERS))
        pred = {k: costs.of(k) * 1e3 for k in SELECTABLE}
        meas = {k: float(r[_COLUMN[k]]) for k in SELECTABLE}
        out.append(GridRow(r["model"], a, b, c, M, pred, meas, Collective(r["winner"])))
    return out


def write_sweep(table: str, path: str) -> int:
    """Write the comparison CSV for ``table``; returns the number of data rows."""
    if table == "ring-ar-validation":
        rows = ring_ar_rows()
        header = ["tensor_params", "alpha_ms", "bandwidth_gbps", "model_bytes", "predicted_ms", "measured_ms", "rel_err"]
        data = [
            [r.tensor_params, r.alpha_ms, r.bandwidth_gbps, r.model_bytes, r.predicted_ms, r.measured_ms, r.rel_err]
            for r in rows
        ]
    elif table == "collective-grid":
        rows = collective_grid_rows()
        header = ["model", "alpha_ms", "bandwidth_gbps", "cr", "model_bytes"]
        for k in SELECTABLE:
            name = k.value.lower()
            header += [f"{name}_predicted_ms", f"{name}_measured_ms", f"{name}_rel_err"]
        header += ["predicted_winner", "measured_winner", "measured_margin"]
        data = []
        for r in rows:
            line = [r.model, r.alpha_ms, r.bandwidth_gbps, r.cr, r.model_bytes]
            for k in SELECTABLE:
                line += [r.predicted_ms[k], r.measured_ms[k], r.rel_errs[k]]
            line += [str(r.predicted_winner), str(r.measured_winner), r.measured_margin]
            data.append(line)
    else:
        raise ValueError(f"unknown table {table!r}; choose from {', '.join(TABLES)}")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(data)
    return len(data)

"""Modeled AG vs AR-Top-k communication time as the worker count grows.

Prints one row per N with the three compressed-collective costs and the
cost model's pick, for a fixed model size, ratio and network.
"""

import argparse
import csv
import sys

from flexcomm.costmodel import SELECTABLE, MessageSpec, NetParams, select_collective


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--alpha-ms", type=float, default=1.0)
    ap.add_argument("--bandwidth-gbps", type=float, default=10.0)
    ap.add_argument("--model-bytes", type=float, default=4.55e7)
    ap.add_argument("--cr", type=float, default=0.01)
    ap.add_argument("--workers", type=int, nargs="+", default=[2, 4, 8, 16, 32, 64, 128, 256])
    args = ap.parse_args()

    net = NetParams.from_ms_gbps(args.alpha_ms, args.bandwidth_gbps)
    w = csv.writer(sys.stdout)
    w.writerow(["workers"] + [f"{k.value.lower()}_ms" for k in SELECTABLE] + ["selected"])
    for n in args.workers:
        best, costs = select_collective(net, MessageSpec(args.model_bytes, args.cr, n))
        w.writerow([n] + [f"{costs.of(k) * 1e3:.4f}" for k in SELECTABLE] + [str(best)])


if __name__ == "__main__":
    main()

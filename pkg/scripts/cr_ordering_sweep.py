"""Final loss and mean gain per compression ratio across step sizes and seeds.

Shows where the "higher c, lower loss" ordering holds on the blob task and
where error feedback's delayed updates let a smaller c overtake a larger one.
"""

import argparse
import csv
import math
import sys

from flexcomm.costmodel import NetParams
from flexcomm.trainer import TrainConfig, Trainer


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--etas", type=float, nargs="+", default=[0.05, 0.1, 0.2, 0.5, 1.0])
    ap.add_argument("--ratios", type=float, nargs="+", default=[1.0, 0.1, 0.01, 0.001])
    ap.add_argument("--seeds", type=int, default=3)
    ap.add_argument("--epochs", type=int, default=5)
    ap.add_argument("--out", help="CSV path (default stdout)")
    args = ap.parse_args()

    net = NetParams.from_ms_gbps(1, 10)
    w = csv.writer(open(args.out, "w", newline="") if args.out else sys.stdout)
    w.writerow(["eta", "seed", "cr", "final_loss", "mean_gain"])
    for eta in args.etas:
        for seed in range(args.seeds):
            for c in args.ratios:
                cfg = TrainConfig(n_workers=4, features=100, classes=10, samples_per_worker=500, epochs=args.epochs,
                                  eta=eta, seed=seed, method="dense" if c == 1.0 else "artopk", cr=c)
                tr = Trainer(cfg, net=net)
                tr.run()
                gain = math.fsum(m.gain for m in tr.metrics) / len(tr.metrics)
                w.writerow([eta, seed, c, f"{tr.full_loss():.6f}", f"{gain:.6f}"])


if __name__ == "__main__":
    main()

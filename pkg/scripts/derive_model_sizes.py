"""Back out each benchmark model's gradient size from its compressed-allgather timing.

Inverts T = alpha*log2(N) + 2*M*c*beta*(N-1) on the (1 ms, 10 Gbps, c=0.1)
row of the bundled collective grid and prints M in bytes and fp32 parameters.
"""

import argparse

from flexcomm.validation import REFERENCE_ROW, TABLE_WORKERS, derive_model_bytes


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--workers", type=int, default=TABLE_WORKERS)
    args = ap.parse_args()
    a, b, c = REFERENCE_ROW
    print(f"reference row: alpha={a} ms, bandwidth={b} Gbps, c={c}, N={args.workers}")
    print(f"{'model':<10} {'bytes':>14} {'params (M)':>11}")
    for name, M in derive_model_bytes(N=args.workers).items():
        print(f"{name:<10} {M:14.6g} {M / 4e6:11.2f}")


if __name__ == "__main__":
    main()

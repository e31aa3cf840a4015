#!/usr/bin/env python3
"""TQ average completion when an LQ's bursts are scaled past its fair share."""
import argparse

from bopf.engine import run
from bopf.metrics import avg_completion
from bopf.scenarios import tq_protection


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--scales", type=float, nargs="+", default=[1, 2, 4, 8])
    ap.add_argument("--mode", choices=("fluid", "task"), default="task")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    print(f"{'scale':>5}  {'drf':>8}  {'bopf':>8}  {'sp':>8}  sp/drf")
    for s in args.scales:
        w = tq_protection(scale=s, seed=args.seed)
        tq = {p: avg_completion(run(w.config(p, mode=args.mode)), "TQ") for p in ("drf", "bopf", "sp")}
        print(f"{s:5.1f}  {tq['drf']:8.1f}  {tq['bopf']:8.1f}  {tq['sp']:8.1f}  {tq['sp'] / tq['drf']:.2f}x")


if __name__ == "__main__":
    main()

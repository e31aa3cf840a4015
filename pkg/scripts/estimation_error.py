#!/usr/bin/env python3
"""LQ average completion as per-task estimation error grows, against DRF."""
import argparse

from bopf.engine import run
from bopf.metrics import avg_completion
from bopf.scenarios import estimation_error_workload


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--stds", type=float, nargs="+", default=[0, 5, 10, 20, 50])
    ap.add_argument("--mode", choices=("fluid", "task"), default="task")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    base = None
    print(f"{'std%':>5}  {'bopf':>7}  {'drf':>7}  vs std0")
    for s in args.stds:
        w = estimation_error_workload(s, seed=args.seed)
        b = avg_completion(run(w.config("bopf", mode=args.mode)), "LQ")
        d = avg_completion(run(w.config("drf", mode=args.mode)), "LQ")
        base = b if base is None else base
        print(f"{s:5.0f}  {b:7.1f}  {d:7.1f}  {b / base - 1:+.1%}", flush=True)


if __name__ == "__main__":
    main()

#!/usr/bin/env python3
"""Motivating example: one LQ with two small and two oversized bursts next to one TQ.

Prints each burst's response time under DRF, SP and BoPF, plus the TQ's
average job completion time.
"""
import argparse

from bopf.engine import run
from bopf.metrics import avg_completion, burst_records
from bopf.scenarios import motivational

POLICIES = ("drf", "sp", "bopf")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--mode", choices=("fluid", "task"), default="task")
    ap.add_argument("--tq-jobs", type=int, default=400)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    w = motivational(args.seed, args.tq_jobs)
    print(f"{'policy':<6} " + " ".join(f"burst{n:<3}" for n in range(4)) + "  tq_avg")
    for p in POLICIES:
        log = run(w.config(p, mode=args.mode))
        resp = [b.response for b in burst_records(log, "lq")]
        cells = " ".join(f"{r:8.1f}" if r is not None else "     n/a" for r in resp)
        print(f"{p:<6} {cells}  {avg_completion(log, 'TQ'):.1f}")


if __name__ == "__main__":
    main()

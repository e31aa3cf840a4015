#!/usr/bin/env python3
"""Factor of improvement of BoPF over DRF for one bursty LQ as the TQ count grows."""
import argparse
import csv
import sys
import time

from bopf.engine import run
from bopf.metrics import avg_completion, factor_of_improvement
from bopf.scenarios import tq_sweep


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--tqs", type=int, nargs="+", default=[1, 2, 4, 8, 16, 32])
    ap.add_argument("--profile", choices=("bb", "tpcds", "tpch"), default="bb")
    ap.add_argument("--mode", choices=("fluid", "task"), default="fluid")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--csv", help="also write the table here")
    args = ap.parse_args()

    rows = []
    for n in args.tqs:
        t0 = time.perf_counter()
        w = tq_sweep(n, seed=args.seed, profile=args.profile)
        drf = run(w.config("drf", mode=args.mode))
        bopf = run(w.config("bopf", mode=args.mode))
        rows.append({
            "n_tq": n,
            "drf_lq_avg": avg_completion(drf, "LQ"),
            "bopf_lq_avg": avg_completion(bopf, "LQ"),
            "factor": factor_of_improvement(drf, bopf),
            "seconds": time.perf_counter() - t0,
        })
        r = rows[-1]
        print(f"{n:>3} TQs  DRF {r['drf_lq_avg']:8.1f}s  BoPF {r['bopf_lq_avg']:6.1f}s  "
              f"factor {r['factor']:6.2f}  ({r['seconds']:.1f}s)", flush=True)
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]))
            w.writeheader()
            w.writerows(rows)
    factors = [r["factor"] for r in rows]
    return 0 if all(b > a for a, b in zip(factors, factors[1:])) else 1


if __name__ == "__main__":
    sys.exit(main())

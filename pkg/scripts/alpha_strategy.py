#!/usr/bin/env python3
"""Deadline hit rate of vanilla BoPF and the alpha-strategy under Normal burst demand."""
import argparse

import numpy as np

from bopf.core import DemandDistribution
from bopf.engine import run
from bopf.metrics import consumed, deadline_fraction
from bopf.scenarios import alpha_workload
from bopf.workload import alpha_strategy_demand, fit_probability


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--cvs", type=float, nargs="+", default=[0.05, 0.1, 0.2])
    ap.add_argument("--alpha", type=float, default=0.95)
    ap.add_argument("--bursts", type=int, default=20)
    ap.add_argument("--mode", choices=("fluid", "task"), default="task")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    print(f"{'cv':>5}  {'vanilla':>7}  {'alpha':>7}  {'mc_fit':>7}  consumption alpha/vanilla")
    for cv in args.cvs:
        logs = {}
        for name, a in (("vanilla", None), ("alpha", args.alpha)):
            w = alpha_workload(cv, a, seed=args.seed, n_bursts=args.bursts)
            logs[name] = run(w.config("bopf", mode=args.mode))
        k = 3
        dist = DemandDistribution(np.full(k, 500.0), np.full(k, 500.0 * cv))
        mc = fit_probability(dist, alpha_strategy_demand(dist, args.alpha, k))
        ratio = consumed(logs["alpha"], "lq").mean() / consumed(logs["vanilla"], "lq").mean()
        print(f"{cv:5.2f}  {deadline_fraction(logs['vanilla'], 'lq'):7.2f}  "
              f"{deadline_fraction(logs['alpha'], 'lq'):7.2f}  {mc:7.4f}  {ratio:.3f}")


if __name__ == "__main__":
    main()

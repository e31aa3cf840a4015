"""Command-line entry point: ``bopf run|sweep|bench-admission|proptest|replay``."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

from .allocation import POLICIES
from .core import InvalidConfigError, MalformedSpecError, StructuralError

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2


def _cmd_run(args: argparse.Namespace) -> int:
    from .experiment import ExperimentConfig, run_experiment

    cfg = ExperimentConfig.load(args.config)
    if args.policies:
        cfg = cfg.with_policies(args.policies)
    run_experiment(cfg, workers=args.workers, echo=print)
    return EXIT_OK


def _cmd_bench(args: argparse.Namespace) -> int:
    from .bench import bench_admission, per_queue_us, scaling, scaling_exponent

    if args.scaling:
        rs = scaling(cycles=args.cycles, repeats=args.repeats)
        for r, us in zip(rs, per_queue_us(rs)):
            print(f"{r.line()} ({us:.2f} us/queue)")
        print(f"scaling exponent: {scaling_exponent(rs):.3f}")
        return EXIT_OK
    r = bench_admission(args.lq, args.tq, args.cycles, repeats=args.repeats)
    print(r.line())
    if args.budget_ms is not None and r.ms > args.budget_ms:
        print(f"over budget: {r.ms:.2f} ms > {args.budget_ms} ms")
        return EXIT_FAILED
    return EXIT_OK


def _cmd_proptest(args: argparse.Namespace) -> int:
    from .proptest import property_suite, strategy_suite

    rep = property_suite(args.seeds, seed0=args.seed0, task_mode=not args.fluid_only)
    print(rep.summary())
    ok = rep.passed
    payload = json.loads(rep.to_json())
    if args.grid:
        grid = strategy_suite(args.grid, seed0=args.seed0)
        print(grid.summary())
        ok = ok and grid.passed
        payload["strategyproofness"] = {
            "passed": grid.passed,
            "runs": grid.runs,
            "failures": [
                {"seed": v.seed, "counterexamples": v.counterexamples, "dominance": v.dominance_failures}
                for v in grid.verdicts if not v.passed
            ],
        }
    if args.json:
        Path(args.json).write_text(json.dumps(payload, indent=2, sort_keys=True, default=float) + "\n")
    return EXIT_OK if ok else EXIT_FAILED


def _cmd_replay(args: argparse.Namespace) -> int:
    from .experiment import replay

    text = replay(args.events).to_json()
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    if args.check:
        original = Path(args.events).with_name("summary.json")
        same = original.is_file() and original.read_text(encoding="utf-8") == text
        print(f"replay {'matches' if same else 'DIFFERS FROM'} {original}")
        return EXIT_OK if same else EXIT_FAILED
    if not args.out:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bopf", description="BoPF scheduler simulator and baselines.")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment config")
    run.add_argument("config", help="TOML experiment config")
    run.add_argument("--workers", type=int, default=None, help="process pool size (default: config value)")
    run.set_defaults(func=_cmd_run, policies=None)

    sweep = sub.add_parser("sweep", help="run a config under several policies and write comparison.csv")
    sweep.add_argument("config")
    sweep.add_argument("--policies", nargs="+", choices=POLICIES, default=["drf", "sp", "bopf"])
    sweep.add_argument("--workers", type=int, default=None)
    sweep.set_defaults(func=_cmd_run)

    bench = sub.add_parser("bench-admission", help="time admission control")
    bench.add_argument("--lq", type=int, default=10_000)
    bench.add_argument("--tq", type=int, default=10_000)
    bench.add_argument("--cycles", type=int, default=500)
    bench.add_argument("--repeats", type=int, default=3)
    bench.add_argument("--budget-ms", type=float, default=None, help="exit nonzero above this time")
    bench.add_argument("--scaling", action="store_true", help="sweep 10^2, 10^3, 10^4 queues of each kind")
    bench.set_defaults(func=_cmd_bench)

    prop = sub.add_parser("proptest", help="run the randomized property suite")
    prop.add_argument("--seeds", type=int, default=100)
    prop.add_argument("--seed0", type=int, default=0)
    prop.add_argument("--grid", type=int, default=0, metavar="N", help="also run the strategyproofness grid on N scenarios")
    prop.add_argument("--fluid-only", action="store_true", help="skip the task-mode burst-guarantee runs")
    prop.add_argument("--json", default=None, help="write the report as JSON")
    prop.set_defaults(func=_cmd_proptest)

    rp = sub.add_parser("replay", help="recompute summary.json from an events.jsonl")
    rp.add_argument("events")
    rp.add_argument("--out", default=None)
    rp.add_argument("--check", action="store_true", help="compare with the summary.json next to the log")
    rp.set_defaults(func=_cmd_replay)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (InvalidConfigError, MalformedSpecError, StructuralError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

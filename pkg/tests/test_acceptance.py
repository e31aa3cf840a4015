"""Acceptance criteria, one test each.

Every test prints a single ``PASS``/``FAIL`` line with the measured values
(to the terminal, bypassing capture) and then asserts.  Tolerances are the
published ones and live in the constants below.
"""
import time

import numpy as np
import pytest

from bopf.allocation import drf_fill
from bopf.bench import bench_admission, scaling, scaling_exponent
from bopf.engine import run
from bopf.experiment import OUTPUT_ROOT_ENV, ExperimentConfig, run_experiment
from bopf.metrics import avg_completion, consumed, deadline_fraction, factor_of_improvement, fairness_report
from bopf.proptest import drf_oracle_check, property_suite, strategy_suite
from bopf.scenarios import alpha_workload, estimation_error_workload, oversized_sp, tq_protection, tq_sweep
from bopf.core import DemandDistribution
from bopf.workload import alpha_strategy_demand, fit_probability

# 1. DRF oracle
ORACLE_INSTANCES, ORACLE_TOL, ORACLE_EPS, ORACLE_BUDGET_S = 200, 1e-3, 1e-4, 10.0
# 2 / 3. property suite
SUITE_SEEDS, SUITE_BUDGET_S, FAIR_TOL = 100, 60.0, 1e-6
# 4. TQ-count sweep
SWEEP_TQS = (1, 2, 4, 8, 16, 32)
FACTOR_AT_8, FACTOR_AT_32, SWEEP_BUDGET_S = 3.0, 8.0, 300.0
# 5 / 6. BoPF against SP and DRF
LQ_VS_SP_TOL, TQ_VS_DRF_TOL, SP_TQ_PENALTY, OVERSIZE = 0.10, 0.15, 2.0, 8.0
# 7. strategyproofness grid
GRID_SCENARIOS, GRID_BUDGET_S = 20, 120.0
# 8. alpha-strategy
ALPHA, ALPHA_CVS, VANILLA_CV, VANILLA_CEILING, CONSUMPTION_TOL, MC_SAMPLES = 0.95, (0.05, 0.10, 0.20), 0.10, 0.5, 0.10, 100_000
# 9. estimation error
ERROR_DEGRADE, ERROR_LOW, ERROR_HIGH = 0.25, 20.0, 50.0
# 10. admission overhead
BENCH_QUEUES, BENCH_CYCLES, BENCH_BUDGET_MS, SCALING_BAND = 10_000, 500, 50.0, (0.8, 1.2)


def verdict(capsys, number, ok, detail):
    with capsys.disabled():
        print(f"\n{'PASS' if ok else 'FAIL'} criterion {number}: {detail}")
    assert ok, detail


@pytest.fixture(scope="module")
def suite():
    t0 = time.perf_counter()
    rep = property_suite(SUITE_SEEDS)
    return rep, time.perf_counter() - t0


def test_c01_drf_oracle(capsys):
    t0 = time.perf_counter()
    bad = drf_oracle_check(ORACLE_INSTANCES, seed=0, tol=ORACLE_TOL, eps=ORACLE_EPS)
    cap = np.array([9.0, 18.0])
    out = drf_fill({}, cap, profiles={"a": np.array([1.0, 4.0]), "b": np.array([3.0, 1.0])})
    doms = [float(np.max(out[q] / cap)) for q in ("a", "b")]
    dt = time.perf_counter() - t0
    ok = not bad and np.allclose(doms, 2 / 3) and dt < ORACLE_BUDGET_S
    verdict(capsys, 1, ok, f"{len(bad)} oracle mismatches on {ORACLE_INSTANCES} instances, "
                           f"classic dominant shares {doms[0]:.4f}/{doms[1]:.4f}, {dt:.1f}s")


def test_c02_burst_guarantee(capsys, suite):
    rep, dt = suite
    names = ("burst_guarantee", "burst_guarantee_task", "sla_fraction")
    counts = {n: len(rep.violations[n]) for n in names}
    ok = not any(counts.values()) and all(rep.checked[n] == SUITE_SEEDS for n in names) and dt < SUITE_BUDGET_S
    verdict(capsys, 2, ok, f"violations {counts} over {SUITE_SEEDS} scenarios, suite {dt:.1f}s")


def test_c03_long_term_fairness(capsys, suite):
    rep, _ = suite
    sp = run(oversized_sp().config("sp", mode="fluid"))
    worst_sp = min(w.min_margin for w in fairness_report(sp))
    n_bad = len(rep.violations["fairness"])
    ok = n_bad == 0 and worst_sp < -FAIR_TOL
    verdict(capsys, 3, ok, f"BoPF fairness violations {n_bad}/{SUITE_SEEDS}; SP oversized worst margin {worst_sp:.3f}")


@pytest.mark.slow
def test_c04_performance_trend(capsys):
    t0 = time.perf_counter()
    factors = []
    for n in SWEEP_TQS:
        w = tq_sweep(n)
        drf = run(w.config("drf", mode="fluid"))
        bopf = run(w.config("bopf", mode="fluid"))
        factors.append(factor_of_improvement(drf, bopf))
    dt = time.perf_counter() - t0
    f = dict(zip(SWEEP_TQS, factors))
    increasing = all(b > a for a, b in zip(factors, factors[1:]))
    ok = increasing and f[8] > FACTOR_AT_8 and f[32] > FACTOR_AT_32 and dt < SWEEP_BUDGET_S
    shown = ", ".join(f"{n}:{x:.2f}" for n, x in f.items())
    verdict(capsys, 4, ok, f"factor by TQ count {{{shown}}}, {dt:.0f}s")


def test_c05_bopf_matches_sp_for_lq(capsys):
    w = tq_sweep(8)
    bopf = run(w.config("bopf", mode="task"))
    sp = run(w.config("sp", mode="task"))
    b, s = avg_completion(bopf, "LQ"), avg_completion(sp, "LQ")
    hard = all(e.payload["cls"] == "Hard" for e in bopf.of_kind("AdmissionDecision") if e.payload["queue"] == "lq")
    rel = abs(b - s) / s
    verdict(capsys, 5, hard and rel <= LQ_VS_SP_TOL, f"LQ avg BoPF {b:.2f}s vs SP {s:.2f}s ({rel:.1%}), hard={hard}")


def test_c06_bopf_protects_tqs(capsys):
    w = tq_protection(scale=OVERSIZE)
    res = {p: avg_completion(run(w.config(p, mode="task")), "TQ") for p in ("drf", "bopf", "sp")}
    rel = abs(res["bopf"] - res["drf"]) / res["drf"]
    penalty = res["sp"] / res["drf"]
    ok = rel <= TQ_VS_DRF_TOL and penalty >= SP_TQ_PENALTY
    verdict(capsys, 6, ok, f"TQ avg DRF {res['drf']:.1f}s BoPF {res['bopf']:.1f}s ({rel:.1%}) "
                           f"SP {res['sp']:.1f}s ({penalty:.2f}x DRF)")


def test_c07_strategyproofness(capsys):
    rep = strategy_suite(GRID_SCENARIOS)
    ok = rep.passed and rep.elapsed < GRID_BUDGET_S
    n_counter = sum(len(v.counterexamples) for v in rep.verdicts)
    n_dom = sum(len(v.dominance_failures) for v in rep.verdicts)
    verdict(capsys, 7, ok, f"{rep.runs} runs on {GRID_SCENARIOS} scenarios: {n_counter} improving misreports, "
                           f"{n_dom} dominance failures, {rep.elapsed:.1f}s")


def test_c08_alpha_strategy(capsys):
    fractions = {}
    for cv in ALPHA_CVS:
        fractions[cv] = deadline_fraction(run(alpha_workload(cv, ALPHA).config("bopf", mode="task")), "lq")
    alpha_log = run(alpha_workload(VANILLA_CV, ALPHA).config("bopf", mode="task"))
    vanilla_log = run(alpha_workload(VANILLA_CV, None).config("bopf", mode="task"))
    vanilla = deadline_fraction(vanilla_log, "lq")
    ca, cv_ = consumed(alpha_log, "lq").mean(), consumed(vanilla_log, "lq").mean()
    drift = abs(ca - cv_) / cv_
    fits = {}
    for cv in ALPHA_CVS:
        dist = DemandDistribution(np.full(3, 500.0), np.full(3, 500.0 * cv))
        fits[cv] = fit_probability(dist, alpha_strategy_demand(dist, ALPHA, 3), n=MC_SAMPLES, seed=0)
    ok = (all(f >= ALPHA for f in fractions.values()) and vanilla < VANILLA_CEILING
          and drift <= CONSUMPTION_TOL and all(p >= ALPHA - 0.01 for p in fits.values()))
    shown = ", ".join(f"{cv:.0%}:{f:.2f}" for cv, f in fractions.items())
    mc = ", ".join(f"{cv:.0%}:{p:.4f}" for cv, p in fits.items())
    verdict(capsys, 8, ok, f"alpha deadline fraction {{{shown}}}; vanilla@{VANILLA_CV:.0%} {vanilla:.2f}; "
                           f"consumption drift {drift:.1%}; Monte Carlo fit {{{mc}}}")


@pytest.mark.slow
def test_c09_estimation_error(capsys):
    lq = {s: avg_completion(run(estimation_error_workload(s).config("bopf", mode="task")), "LQ")
          for s in (0.0, ERROR_LOW, ERROR_HIGH)}
    drf = avg_completion(run(estimation_error_workload(ERROR_HIGH).config("drf", mode="task")), "LQ")
    degrade = lq[ERROR_LOW] / lq[0.0] - 1
    ok = degrade <= ERROR_DEGRADE and lq[ERROR_HIGH] < drf
    verdict(capsys, 9, ok, f"LQ avg std0 {lq[0.0]:.1f}s, std{ERROR_LOW:.0f} {lq[ERROR_LOW]:.1f}s ({degrade:+.1%}), "
                           f"std{ERROR_HIGH:.0f} {lq[ERROR_HIGH]:.1f}s vs DRF {drf:.1f}s")


def test_c10_admission_overhead(capsys):
    full = bench_admission(BENCH_QUEUES, BENCH_QUEUES, BENCH_CYCLES)
    rs = scaling((100, 1000, 10_000), cycles=BENCH_CYCLES)
    slope = scaling_exponent(rs)
    lo, hi = SCALING_BAND
    ok = full.ms < BENCH_BUDGET_MS and lo <= slope <= hi
    verdict(capsys, 10, ok, f"{full.n_lq} LQs x {full.cycles} cycles + {full.n_tq} TQs in {full.ms:.1f} ms; "
                            f"log-log exponent {slope:.2f}")


def test_c11_determinism(capsys, tmp_path, monkeypatch):
    data = {
        "name": "det", "seed": [0, 1], "policies": ["drf", "sp", "bopf", "mbvt", "nbopf"], "mode": "task",
        "workload": {"scenario": "motivational", "params": {"tq_jobs": 60}},
    }
    cfg = ExperimentConfig.from_dict(data)
    blobs = []
    for i in range(2):
        monkeypatch.setenv(OUTPUT_ROOT_ENV, str(tmp_path / f"r{i}"))
        results = run_experiment(cfg, workers=1 + i)
        blobs.append([(tmp_path / f"r{i}" / "det" / f"{r.policy}-seed{r.seed}" / "events.jsonl").read_bytes()
                      for r in results])
    same = sum(a == b for a, b in zip(*blobs))
    verdict(capsys, 11, same == len(blobs[0]), f"{same}/{len(blobs[0])} events.jsonl byte-identical across re-runs")

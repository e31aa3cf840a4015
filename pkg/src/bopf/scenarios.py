"""Named workloads used by the experiment scripts and the acceptance suite.

Each builder returns a ``Workload`` (cluster plus queues plus a horizon)
from a handful of knobs and a seed.  Sizes are desk scale: capacities are
abstract units and only ratios between policies matter.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import ClusterConfig, DemandDistribution, JobSpec, QueueKind, QueueSpec, StageSpec
from .engine import SimConfig
from .workload import (
    PROFILES,
    StageShape,
    alpha_strategy_demand,
    inject_estimation_error,
    synth_lq,
    synth_tq,
)


@dataclass(frozen=True)
class Workload:
    cluster: ClusterConfig
    queues: tuple[QueueSpec, ...]
    horizon: Optional[float] = None
    notes: dict = field(default_factory=dict)

    def config(self, policy: str = "bopf", mode: str = "task", **kw) -> SimConfig:
        meta = dict(self.notes)
        meta.update(kw.pop("meta", {}))
        return SimConfig(self.cluster, self.queues, policy=policy, mode=mode, horizon=self.horizon, meta=meta, **kw)

    def queue(self, qid: str) -> QueueSpec:
        return next(q for q in self.queues if q.id == qid)


def _expected_job_work(profile: str, task_demand: np.ndarray) -> np.ndarray:
    p = PROFILES[profile]
    stages = (p.stages[0] + p.stages[1]) / 2
    tasks = (p.tasks[0] + p.tasks[1]) / 2
    dur = p.short_fraction * sum(p.short) / 2 + (1 - p.short_fraction) * sum(p.long) / 2
    return stages * tasks * dur * task_demand


def backlog_jobs(capacity: np.ndarray, span: float, n_tq: int, profile: str, task_demand, margin: float = 1.5) -> int:
    """Jobs per TQ so that ``n_tq`` TQs stay backlogged for ``span`` seconds."""
    work = _expected_job_work(profile, np.asarray(task_demand, dtype=np.float64))
    per_queue = np.max(np.asarray(capacity) * span / n_tq / np.where(work > 0, work, np.inf))
    return max(1, int(math.ceil(margin * per_queue)))


# -------------------------------------------------------------- motivating


def motivational(seed: int = 0, tq_jobs: int = 400) -> Workload:
    """One LQ with two small bursts followed by two oversized ones, plus one TQ.

    Memory-bound jobs on a two-resource cluster.  The small bursts fit the
    whole cluster for 60 s; the large ones declare a fair-share-sized demand
    over a 335 s window but actually carry 35 000 memory-seconds, so the
    excess runs without guarantee.
    """
    cap = np.array([100.0, 100.0])
    cluster = ClusterConfig(cap, ("cpu", "mem"), n_min=2)
    r = np.array([0.2, 1.0])
    small = StageShape.lanes(100, (1,), (60.0,))
    large = StageShape.lanes(100, (7,), (50.0,))
    bursts_jobs = (
        (small.job("j0", r * small.task_seconds),),
        (small.job("j0", r * small.task_seconds),),
        (large.job("j0", r * large.task_seconds),),
        (large.job("j0", r * large.task_seconds),),
    )
    lq = QueueSpec(
        id="lq",
        kind=QueueKind.LQ,
        arrivals=np.array([0.0, 600.0, 1400.0, 2000.0]),
        windows=np.array([60.0, 60.0, 335.0, 335.0]),
        demands=np.array([r * 6000.0, r * 6000.0, r * 25000.0, r * 25000.0]),
        burst_jobs=bursts_jobs,
        period=600.0,
    )
    tq = synth_tq("tq", tq_jobs, "bb", task_demand=(0.4, 2.0), seed=seed)
    return Workload(cluster, (lq, tq), horizon=2600.0, notes={"scenario": "motivational", "seed": seed})


# ---------------------------------------------------------- TQ-count sweep


SWEEP_CAPACITY = (100.0, 100.0)


def bursty_lq(
    period: float = 1000.0,
    n_bursts: int = 5,
    on_seconds: float = 20.0,
    lanes: int = 20,
    capacity: Sequence[float] = SWEEP_CAPACITY,
    qid: str = "lq",
    start: float = 0.0,
) -> QueueSpec:
    """Periodic LQ whose burst keeps the whole cluster busy for ``on_seconds``."""
    cap = np.asarray(capacity, dtype=np.float64)
    waves = (2, 2)
    dur = on_seconds / sum(waves)
    shape = StageShape.lanes(lanes, waves, (dur, dur))
    demand = cap / lanes * shape.task_seconds
    return synth_lq(period, demand, on_seconds, n_bursts, shape, qid=qid, start=start)


def tq_sweep(n_tq: int, seed: int = 0, n_bursts: int = 5, period: float = 1000.0, profile: str = "bb") -> Workload:
    """One bursty LQ against ``n_tq`` backlogged benchmark-shaped TQs."""
    cap = np.array(SWEEP_CAPACITY)
    cluster = ClusterConfig(cap, ("cpu", "mem"), n_min=1)
    lq = bursty_lq(period, n_bursts, capacity=cap)
    span = period * n_bursts
    task_demand = (1.0, 2.0)
    jobs = backlog_jobs(cap, span, n_tq + 1, profile, task_demand) if n_tq else 0
    tqs = tuple(synth_tq(f"tq{j}", jobs, profile, task_demand, seed=seed * 1000 + j) for j in range(n_tq))
    return Workload(cluster, (lq,) + tqs, horizon=span,
                    notes={"scenario": "tq_sweep", "n_tq": n_tq, "seed": seed, "profile": profile})


def tq_protection(scale: float = 8.0, n_tq: int = 4, seed: int = 0, n_bursts: int = 4, period: float = 600.0) -> Workload:
    """An LQ whose bursts are ``scale`` times its fair share, against finite TQs.

    The unscaled burst equals the fair-share bound ``C * period / D`` with
    ``D = n_tq + 1``; the TQs hold a fixed amount of work and the run lasts
    until everything completes.
    """
    cap = np.array(SWEEP_CAPACITY)
    cluster = ClusterConfig(cap, ("cpu", "mem"), n_min=1)
    fair_seconds = period / (n_tq + 1)
    lanes, dur = 20, 10.0
    waves = max(1, int(round(fair_seconds * scale / dur)))
    window = min(period, fair_seconds)
    shape = StageShape.lanes(lanes, (waves,), (dur,))
    lq = synth_lq(period, cap / lanes * shape.task_seconds, window, n_bursts, shape, qid="lq")
    span = period * n_bursts
    jobs = backlog_jobs(cap, span, n_tq + 1, "bb", (1.0, 2.0), margin=1.0)
    tqs = tuple(synth_tq(f"tq{j}", jobs, "bb", (1.0, 2.0), seed=seed * 1000 + j) for j in range(n_tq))
    return Workload(cluster, (lq,) + tqs, horizon=None,
                    notes={"scenario": "tq_protection", "scale": scale, "n_tq": n_tq, "seed": seed})


# -------------------------------------------------------------- fairness


def oversized_sp(seed: int = 0) -> Workload:
    """An LQ that is busy most of every period, next to one backlogged TQ.

    Under strict priority the LQ's long-term dominant share exceeds the TQ's,
    which the fairness check must flag.
    """
    cap = np.array([10.0, 10.0])
    cluster = ClusterConfig(cap, ("cpu", "mem"), n_min=1)
    shape = StageShape.lanes(10, (8,), (10.0,))
    lq = synth_lq(100.0, cap / 10 * shape.task_seconds, 100.0, 4, shape, qid="lq")
    tq = QueueSpec.tq("tq", [JobSpec("j0", (StageSpec(400, np.array([1.0, 1.0]), 10.0),))], arrival=0.0)
    return Workload(cluster, (lq, tq), horizon=400.0, notes={"scenario": "oversized_sp", "seed": seed})


# ------------------------------------------------------------ uncertainty


def alpha_workload(
    cv: float,
    alpha: Optional[float] = 0.95,
    seed: int = 0,
    n_bursts: int = 20,
    mean: float = 500.0,
    window: float = 10.0,
    period: float = 100.0,
    n_tq: int = 2,
) -> Workload:
    """LQ with Normal(mean, cv*mean) per-resource burst demand against backlogged TQs.

    ``alpha=None`` declares the mean (vanilla BoPF); otherwise the declared
    demand comes from the alpha-strategy.  Realized demands are drawn from
    the same truncated Normal, seeded.
    """
    k = 3
    cap = np.full(k, 100.0)
    cluster = ClusterConfig(cap, ("cpu", "mem", "disk"), n_min=1)
    mu = np.full(k, mean)
    sd = mu * cv
    dist = DemandDistribution(mean=mu, std=sd)
    declared = mu if alpha is None else alpha_strategy_demand(dist, alpha, k)
    shape = StageShape.lanes(10, (1,), (window,))
    lq = synth_lq(period, mu, window, n_bursts, shape, seed=seed, qid="lq", demand_std=sd, declared=declared)
    span = period * n_bursts
    tqs = []
    for j in range(n_tq):
        r = cap / 10.0
        count = int(math.ceil(10 * span / 5.0 * 2))
        tqs.append(QueueSpec.tq(f"tq{j}", [JobSpec("j0", (StageSpec(count, r, 5.0),))], arrival=0.0))
    return Workload(cluster, (lq,) + tuple(tqs), horizon=span,
                    notes={"scenario": "alpha", "cv": cv, "alpha": alpha, "seed": seed})


def estimation_error_workload(std_pct: float, seed: int = 0, n_tq: int = 8, n_bursts: int = 5, period: float = 350.0) -> Workload:
    """One LQ (every 350 s) plus backlogged TQs; LQ tasks carry estimation error."""
    cap = np.array(SWEEP_CAPACITY)
    cluster = ClusterConfig(cap, ("cpu", "mem"), n_min=1)
    lanes, waves, dur = 10, 8, 5.0
    shape = StageShape.lanes(lanes, (waves,), (dur,))
    per_task = cap / 20.0
    window = waves * dur
    lq = synth_lq(period, per_task * shape.task_seconds, window, n_bursts, shape, qid="lq", jobs_per_burst=4)
    lq = inject_estimation_error(lq, std_pct, seed)
    span = period * n_bursts
    jobs = backlog_jobs(cap, span, n_tq + 1, "bb", (1.0, 2.0))
    tqs = tuple(synth_tq(f"tq{j}", jobs, "bb", (1.0, 2.0), seed=seed * 1000 + j) for j in range(n_tq))
    return Workload(cluster, (lq,) + tqs, horizon=span,
                    notes={"scenario": "estimation_error", "std_pct": std_pct, "seed": seed})


BUILDERS = {
    "motivational": motivational,
    "tq_sweep": tq_sweep,
    "tq_protection": tq_protection,
    "oversized_sp": oversized_sp,
    "alpha": alpha_workload,
    "estimation_error": estimation_error_workload,
}

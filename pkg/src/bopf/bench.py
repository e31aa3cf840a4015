"""Admission-control overhead benchmark.

Queue specs are built before the clock starts; only the admission loop
(one ``admit`` call per queue against a fresh state) is timed.
"""
from __future__ import annotations

import gc
import time
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .admission import AdmissionState, admit
from .core import ClusterConfig, JobSpec, QueueKind, QueueSpec, StageSpec


@dataclass(frozen=True)
class AdmissionBench:
    n_lq: int
    n_tq: int
    cycles: int
    ms: float
    build_ms: float
    classes: dict = field(default_factory=dict)

    @property
    def queues(self) -> int:
        return self.n_lq + self.n_tq

    def line(self) -> str:
        return (f"admission: {self.n_lq} LQs x {self.cycles} cycles + {self.n_tq} TQs "
                f"in {self.ms:.2f} ms (build {self.build_ms:.0f} ms) classes={dict(sorted(self.classes.items()))}")


def bench_queues(n_lq: int, n_tq: int, cycles: int, k: int = 2, seed: int = 0,
                 capacity: float = 100.0) -> tuple[ClusterConfig, list[QueueSpec]]:
    """Periodic LQs with random per-resource demand, then single-job TQs.

    Bursts arrive every 100 s with a 10 s window; a burst's demand is drawn
    so that it sits between 1% and 50% of the whole-period capacity.
    """
    cluster = ClusterConfig(np.full(k, capacity), n_min=1)
    rng = np.random.default_rng(seed)
    period, window = 100.0, 10.0
    arrivals = np.arange(cycles, dtype=np.float64) * period
    windows = np.full(cycles, window)
    scale = rng.uniform(0.01, 0.5, size=(n_lq, k)) * capacity * period
    queues: list[QueueSpec] = []
    for i in range(n_lq):
        spec = QueueSpec(f"lq{i}", QueueKind.LQ, arrivals, windows, np.tile(scale[i], (cycles, 1)), period=period)
        spec.admission_peak  # cached on the QueueSpec before timing starts
        spec.is_lq
        queues.append(spec)
    job = JobSpec("j0", (StageSpec(1, np.ones(k), 1.0),))
    for i in range(n_tq):
        spec = QueueSpec.tq(f"tq{i}", [job])
        spec.is_lq
        queues.append(spec)
    return cluster, queues


def time_admission(cluster: ClusterConfig, queues: list[QueueSpec], repeats: int = 3,
                   warmup: int = 1) -> tuple[float, Counter]:
    """Best-of-``repeats`` wall time (ms) of admitting ``queues`` in order.

    ``warmup`` untimed passes run first; GC is off while timing.
    """
    for _ in range(warmup):
        state = AdmissionState(cluster)
        for q in queues:
            admit(q, state)
    best = float("inf")
    counts: Counter = Counter()
    for _ in range(max(1, repeats)):
        state = AdmissionState(cluster)
        was = gc.isenabled()
        gc.disable()
        try:
            t0 = time.perf_counter()
            for q in queues:
                admit(q, state)
            dt = time.perf_counter() - t0
        finally:
            if was:
                gc.enable()
        best = min(best, dt)
        counts = Counter(c.label for c in state.classes.values())
    return best * 1e3, counts


def bench_admission(n_lq: int, n_tq: int, cycles: int = 500, k: int = 2, seed: int = 0,
                    repeats: int = 3) -> AdmissionBench:
    t0 = time.perf_counter()
    cluster, queues = bench_queues(n_lq, n_tq, cycles, k, seed)
    build = (time.perf_counter() - t0) * 1e3
    ms, counts = time_admission(cluster, queues, repeats)
    return AdmissionBench(n_lq, n_tq, cycles, ms, build, dict(counts))


def scaling(sizes=(100, 1000, 10000), cycles: int = 500, repeats: int = 3) -> list[AdmissionBench]:
    """``bench_admission`` with ``n`` LQs and ``n`` TQs for each size ``n``."""
    return [bench_admission(n, n, cycles, repeats=repeats) for n in sizes]


def per_queue_us(results: list[AdmissionBench]) -> list[float]:
    return [r.ms * 1e3 / max(1, r.queues) for r in results]


def scaling_exponent(results: list[AdmissionBench]) -> float:
    """Least-squares slope of log(time) against log(queue count); 1.0 is linear."""
    x = np.log([r.queues for r in results])
    y = np.log([max(r.ms, 1e-6) for r in results])
    return float(np.polyfit(x, y, 1)[0])

"""Workload sources: trace files, synthetic generators, demand uncertainty.

Everything here returns ``QueueSpec`` or ``JobSpec`` values and is a pure
function of its parameters and seed.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
from scipy import stats

from .core import (
    DemandDistribution,
    DimensionError,
    JobSpec,
    MalformedSpecError,
    QueueKind,
    QueueSpec,
    StageSpec,
)

# ----------------------------------------------------------------- traces


def _job_from_record(rec: dict, where: str, k: Optional[int]) -> JobSpec:
    try:
        stages = []
        for s in rec["stages"]:
            demand = np.asarray(s["demand"], dtype=np.float64)
            if k is not None and demand.shape[0] != k:
                raise DimensionError(f"{where}: stage demand has {demand.shape[0]} resources, expected {k}")
            stages.append(StageSpec(int(s["tasks"]), demand, float(s["duration"])))
        deps = tuple(tuple(e) for e in rec.get("deps", ()))
        return JobSpec(str(rec["job_id"]), tuple(stages), deps, queue=rec.get("queue_id"))
    except KeyError as exc:
        raise MalformedSpecError(f"{where}: missing field {exc.args[0]!r}") from None
    except DimensionError:
        raise
    except (MalformedSpecError, TypeError, ValueError) as exc:
        raise type(exc)(f"{where}: {exc}") from None


def load_trace(path: Union[str, Path], k: Optional[int] = None) -> list[JobSpec]:
    """Parse a JSON-lines trace; diagnostics carry ``path:line``."""
    path = Path(path)
    jobs: list[JobSpec] = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            where = f"{path}:{lineno}"
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedSpecError(f"{where}: invalid JSON ({exc.msg})") from None
            job = _job_from_record(rec, where, k)
            if k is None:
                k = job.k
            jobs.append(job)
    return jobs


def dump_trace(jobs: Sequence[JobSpec], path: Union[str, Path]) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for j in jobs:
            rec = {
                "job_id": j.id,
                "queue_id": j.queue,
                "stages": [
                    {"tasks": s.task_count, "demand": s.task_demand.tolist(), "duration": s.task_duration}
                    for s in j.stages
                ],
                "deps": [list(e) for e in j.stage_dependencies],
            }
            fh.write(json.dumps(rec) + "\n")


def queues_from_trace(jobs: Sequence[JobSpec]) -> list[QueueSpec]:
    """Group trace jobs into TQs by their ``queue_id`` field."""
    groups: dict[str, list[JobSpec]] = {}
    for j in jobs:
        groups.setdefault(j.queue or "trace", []).append(j)
    return [QueueSpec.tq(q, js) for q, js in sorted(groups.items())]


# ------------------------------------------------------------- LQ bursts


@dataclass(frozen=True)
class StageShape:
    """A chain of stages; stage s has ``tasks[s]`` tasks of ``durations[s]`` seconds.

    All stages share one per-task demand vector, scaled so that the chain's
    total work equals the burst demand.
    """

    tasks: tuple[int, ...] = (10,)
    durations: tuple[float, ...] = (1.0,)

    def __post_init__(self):
        if len(self.tasks) != len(self.durations) or not self.tasks:
            raise MalformedSpecError("stage shape needs matching, nonempty tasks and durations")
        if any(int(n) < 1 for n in self.tasks) or any(not d > 0 for d in self.durations):
            raise MalformedSpecError("stage tasks must be >= 1 and durations > 0")

    @classmethod
    def lanes(cls, parallelism: int, waves: Sequence[int], durations: Sequence[float]) -> "StageShape":
        """Stage s runs ``parallelism * waves[s]`` tasks.

        With per-task demand r the burst's hard rate ``d / t`` is exactly
        ``parallelism * r`` when ``t = sum(waves[s] * durations[s])``, so the
        guaranteed share keeps ``parallelism`` lanes busy for the whole window.
        """
        return cls(tuple(int(parallelism * w) for w in waves), tuple(float(d) for d in durations))

    @property
    def task_seconds(self) -> float:
        return float(sum(n * d for n, d in zip(self.tasks, self.durations)))

    @property
    def critical_path(self) -> float:
        return float(sum(self.durations))

    def job(self, job_id: str, demand: np.ndarray) -> JobSpec:
        r = np.asarray(demand, dtype=np.float64) / self.task_seconds
        stages = tuple(StageSpec(n, r, d) for n, d in zip(self.tasks, self.durations))
        deps = tuple((i, i + 1) for i in range(len(stages) - 1))
        return JobSpec(job_id, stages, deps)


def synth_lq(
    period: float,
    burst_demand: Sequence[float],
    deadline_window: float,
    n_bursts: int,
    stage_shape: Optional[StageShape] = None,
    seed: int = 0,
    *,
    qid: str = "lq0",
    start: float = 0.0,
    jobs_per_burst: int = 1,
    sla_fraction: float = 1.0,
    demand_std: Optional[Sequence[float]] = None,
    declared: Optional[Sequence[float]] = None,
) -> QueueSpec:
    """Periodic LQ whose burst jobs realize ``burst_demand`` exactly.

    With ``demand_std`` the realized per-burst demand is drawn per resource
    from a Normal truncated at zero (seeded) while the declared demand stays
    at ``declared`` (default: ``burst_demand``, the mean).
    """
    if n_bursts < 1:
        raise MalformedSpecError("n_bursts must be >= 1")
    if not deadline_window <= period:
        raise MalformedSpecError("deadline window longer than the period")
    shape = stage_shape or StageShape((10,), (float(deadline_window),))
    mean = np.asarray(burst_demand, dtype=np.float64)
    decl = mean if declared is None else np.asarray(declared, dtype=np.float64)
    arrivals = start + period * np.arange(n_bursts, dtype=np.float64)
    dist = None
    if demand_std is not None:
        dist = DemandDistribution(mean=mean, std=np.asarray(demand_std, dtype=np.float64))
        actual = sample_demands(dist, n_bursts, seed)
    else:
        actual = np.tile(mean, (n_bursts, 1))
    burst_jobs = []
    for n in range(n_bursts):
        share = actual[n] / jobs_per_burst
        burst_jobs.append(tuple(shape.job(f"j{i}", share) for i in range(jobs_per_burst)))
    return QueueSpec(
        id=qid,
        kind=QueueKind.LQ,
        arrivals=arrivals,
        windows=np.full(n_bursts, float(deadline_window)),
        demands=np.tile(decl, (n_bursts, 1)),
        burst_jobs=tuple(burst_jobs),
        sla_fraction=sla_fraction,
        period=float(period),
        demand_distribution=dist,
    )


# -------------------------------------------------------------- TQ jobs


@dataclass(frozen=True)
class BenchmarkProfile:
    """Task-duration mixture approximating a benchmark's shape.

    ``short_fraction`` of stages draw durations from ``short`` (uniform
    range), the rest from ``long``.
    """

    name: str
    short_fraction: float
    short: tuple[float, float]
    long: tuple[float, float]
    stages: tuple[int, int] = (2, 4)
    tasks: tuple[int, int] = (4, 20)


PROFILES = {
    # 70% of tasks are very short in BigBench-like workloads.
    "bb": BenchmarkProfile("bb", 0.7, (1.0, 4.0), (10.0, 30.0)),
    "tpcds": BenchmarkProfile("tpcds", 0.5, (2.0, 6.0), (10.0, 40.0), stages=(3, 6)),
    "tpch": BenchmarkProfile("tpch", 0.3, (2.0, 6.0), (15.0, 45.0), stages=(2, 5)),
}


def synth_job(
    rng: np.random.Generator,
    job_id: str,
    profile: BenchmarkProfile,
    task_demand: Sequence[float],
    demand_jitter: float = 0.25,
    duration_quantum: float = 1.0,
) -> JobSpec:
    """A random chain-shaped DAG job with benchmark-shaped task durations."""
    base = np.asarray(task_demand, dtype=np.float64)
    n_stages = int(rng.integers(profile.stages[0], profile.stages[1] + 1))
    stages = []
    for _ in range(n_stages):
        lo, hi = profile.short if rng.random() < profile.short_fraction else profile.long
        dur = float(rng.uniform(lo, hi))
        if duration_quantum:
            dur = max(duration_quantum, round(dur / duration_quantum) * duration_quantum)
        count = int(rng.integers(profile.tasks[0], profile.tasks[1] + 1))
        jitter = 1.0 + demand_jitter * (rng.random(base.shape[0]) - 0.5) * 2
        stages.append(StageSpec(count, base * jitter, dur))
    deps = tuple((i, i + 1) for i in range(n_stages - 1))
    return JobSpec(job_id, tuple(stages), deps)


def synth_tq(
    qid: str,
    n_jobs: int,
    profile: Union[str, BenchmarkProfile] = "bb",
    task_demand: Sequence[float] = (1.0, 2.0),
    seed: int = 0,
    *,
    arrival: Optional[float] = None,
    duration_quantum: float = 1.0,
) -> QueueSpec:
    """A TQ backlog of ``n_jobs`` benchmark-shaped jobs, all queued at once."""
    if n_jobs < 1:
        raise MalformedSpecError("n_jobs must be >= 1")
    prof = PROFILES[profile] if isinstance(profile, str) else profile
    rng = np.random.default_rng(seed)
    jobs = [synth_job(rng, f"j{i}", prof, task_demand, duration_quantum=duration_quantum) for i in range(n_jobs)]
    return QueueSpec.tq(qid, jobs, arrival=arrival)


# ---------------------------------------------------------- uncertainty


def inject_estimation_error(spec: QueueSpec, std_pct: float, seed: int) -> QueueSpec:
    """Perturb every task's demand and duration by ``1 + e/100``, e ~ N(0, std_pct).

    The factor is clamped below at 0.01.  Because tasks of one stage must
    stay identical, a perturbed stage becomes parallel single-task stages
    with the original predecessors and successors, which leaves the DAG
    semantics unchanged.  Declared burst demands are not touched.
    """
    if not 0 <= std_pct <= 50:
        raise MalformedSpecError("std_pct must lie in [0, 50]")
    if std_pct == 0:
        return spec
    rng = np.random.default_rng(seed)

    def perturb(job: JobSpec) -> JobSpec:
        new_stages: list[StageSpec] = []
        groups: list[list[int]] = []
        for s in job.stages:
            e = rng.normal(0.0, std_pct, size=s.task_count)
            f = np.maximum(1.0 + e / 100.0, 0.01)
            ids = []
            for fi in f:
                ids.append(len(new_stages))
                new_stages.append(StageSpec(1, s.task_demand * fi, s.task_duration * fi))
            groups.append(ids)
        deps = tuple((a, b) for u, v in job.stage_dependencies for a in groups[u] for b in groups[v])
        return JobSpec(job.id, tuple(new_stages), deps, queue=job.queue)

    if spec.is_lq:
        bj = tuple(tuple(perturb(j) for j in b) for b in spec.burst_jobs)
        return spec.with_bursts(burst_jobs=bj)
    return QueueSpec.tq(spec.id, [perturb(j) for j in spec.jobs], arrival=spec.arrival)


def _marginal(dist: DemandDistribution, k: int):
    mu, sd = float(dist.mean[k]), float(dist.std[k])
    return stats.truncnorm(-mu / sd, np.inf, loc=mu, scale=sd)


def demand_quantile(dist: DemandDistribution, q: float) -> np.ndarray:
    """Per-resource quantile of the (truncated) marginals at probability ``q``."""
    if dist.samples is not None:
        return np.quantile(dist.samples, q, axis=0, method="inverted_cdf")
    out = dist.mean.copy()
    for k in range(dist.k):
        if dist.std[k] > 0:
            out[k] = float(_marginal(dist, k).ppf(q))
    return out


def alpha_strategy_demand(dist: DemandDistribution, alpha: float, k: Optional[int] = None) -> np.ndarray:
    """Demand to declare so that a burst fits with probability at least ``alpha``.

    Independent marginals need each resource to fit with ``alpha ** (1/K)``;
    perfectly correlated ones need only ``alpha``.
    """
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie strictly between 0 and 1")
    k = dist.k if k is None else int(k)
    if k < 1:
        raise ValueError("K must be >= 1")
    q = alpha if dist.correlation == "perfect" else alpha ** (1.0 / k)
    return demand_quantile(dist, q)


def sample_demands(dist: DemandDistribution, n: int, seed: int) -> np.ndarray:
    """``n`` burst demands drawn from ``dist`` (rows), reproducible by seed."""
    rng = np.random.default_rng(seed)
    if dist.samples is not None:
        idx = rng.integers(0, dist.samples.shape[0], size=n)
        return dist.samples[idx]
    out = np.empty((n, dist.k))
    if dist.correlation == "perfect":
        u = rng.random(n)
        for k in range(dist.k):
            out[:, k] = dist.mean[k] if dist.std[k] == 0 else _marginal(dist, k).ppf(u)
        return out
    for k in range(dist.k):
        if dist.std[k] == 0:
            out[:, k] = dist.mean[k]
        else:
            out[:, k] = _marginal(dist, k).rvs(size=n, random_state=rng)
    return out


def fit_probability(dist: DemandDistribution, declared: np.ndarray, n: int = 100_000, seed: int = 0) -> float:
    """Monte Carlo probability that a sampled burst fits ``declared`` componentwise."""
    s = sample_demands(dist, n, seed)
    return float(np.mean(np.all(s <= declared, axis=1)))

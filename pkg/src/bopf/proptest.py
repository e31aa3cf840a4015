"""Randomized property suites for the allocators and the simulator.

Every check returns plain data (violation lists) so that pytest, the CLI
and the experiment scripts can share it.  Scenarios are generated from a
seed alone, so any counterexample is reproducible from its seed.
"""
from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .admission import QueueClass
from .allocation import ShareLevels, drf_fill
from .core import SLACK, ClusterConfig, JobSpec, QueueSpec, StageSpec
from .engine import DEADLINE_SLACK, EventLog, SimConfig, run
from .metrics import burst_records, fairness_report, queue_classes
from .workload import StageShape, synth_lq

RESOURCE_NAMES = ("cpu", "mem", "disk")


# ------------------------------------------------------------ DRF oracle


def water_fill_oracle(
    demands: dict[str, np.ndarray], capacity: np.ndarray, eps: float = 1e-4
) -> dict[str, np.ndarray]:
    """Max-min dominant-share allocation by an ``eps`` grid scan.

    All unfrozen queues grow along their demand direction at a common
    dominant share ``s``.  Between freezes the scan is vectorized over the
    whole grid: it finds the last grid level at which every resource still
    fits, then freezes the queues that reached their demand or that use a
    resource the next level would overflow.  The result is a lower
    approximation within ``eps`` dominant share of the exact fill.
    """
    capacity = np.asarray(capacity, dtype=np.float64)
    ids = sorted(demands)
    if not ids:
        return {}
    d = np.array([np.asarray(demands[q], dtype=np.float64) for q in ids])
    ds = (d / capacity).max(axis=1)
    live = ds > 0
    dirs = np.zeros_like(d)
    dirs[live] = d[live] / ds[live, None]
    level = np.zeros(len(ids))
    frozen = ~live
    s = 0.0
    while not frozen.all():
        grid = s + eps * np.arange(1, int(math.ceil((ds[~frozen].max() - s) / eps)) + 2)
        grow = np.minimum(grid[:, None], ds[None, :]) * (~frozen)[None, :]
        fixed = (level * frozen) @ dirs
        usage = fixed[None, :] + grow @ dirs
        ok = np.all(usage <= capacity * (1 + 1e-12), axis=1)
        n_ok = int(np.argmin(ok)) if not ok.all() else grid.size
        if n_ok == grid.size:
            level[~frozen] = ds[~frozen]
            break
        s = float(grid[n_ok - 1]) if n_ok > 0 else s
        level[~frozen] = np.minimum(s, ds[~frozen])
        over = usage[n_ok] > capacity * (1 + 1e-12)
        hits = (~frozen) & ((ds <= s + 1e-15) | np.any(dirs[:, over] > 0, axis=1))
        if not hits.any():
            hits = (~frozen) & (ds <= grid[n_ok])
        frozen |= hits
    return {q: level[i] * dirs[i] for i, q in enumerate(ids)}


def random_instance(rng: np.random.Generator, max_queues: int = 4, max_k: int = 3):
    """Random DRF instance with some sparse demand vectors."""
    k = int(rng.integers(1, max_k + 1))
    n = int(rng.integers(1, max_queues + 1))
    capacity = rng.uniform(1.0, 100.0, k)
    demands = {}
    for i in range(n):
        v = rng.uniform(0.0, 1.5, k) * capacity
        v[rng.random(k) < 0.25] = 0.0
        if not v.any():
            v[int(rng.integers(k))] = rng.uniform(0.1, 1.5) * capacity[0 if k == 1 else 0]
        demands[f"q{i}"] = v
    return demands, capacity


def drf_oracle_check(n_instances: int = 200, seed: int = 0, tol: float = 1e-3, eps: float = 1e-4) -> list[dict]:
    """Violations of ``drf_fill`` against the grid oracle (empty list = pass)."""
    rng = np.random.default_rng(seed)
    bad = []
    for i in range(n_instances):
        demands, cap = random_instance(rng)
        fast = drf_fill(demands, cap).shares
        slow = water_fill_oracle(demands, cap, eps)
        for q in demands:
            a = float(np.max(fast[q] / cap))
            b = float(np.max(slow[q] / cap))
            if abs(a - b) > tol:
                bad.append({"instance": i, "queue": q, "drf_fill": a, "oracle": b})
    return bad


# ------------------------------------------------------------- scenarios


@dataclass(frozen=True)
class Scenario:
    seed: int
    cluster: ClusterConfig
    queues: tuple[QueueSpec, ...]
    horizon: float

    def config(self, policy: str = "bopf", mode: str = "fluid", **kw) -> SimConfig:
        kw.setdefault("horizon", self.horizon)
        return SimConfig(self.cluster, self.queues, policy=policy, mode=mode, **kw)


def _lane_demand(rng: np.random.Generator, capacity: np.ndarray, lanes: int, frac: float) -> np.ndarray:
    """Per-task demand such that ``lanes`` tasks use about ``frac`` of capacity."""
    shape = rng.uniform(0.2, 1.0, capacity.size)
    shape[int(rng.integers(capacity.size))] = 1.0
    return capacity * shape * frac / lanes


def backlogged_tq(qid: str, rng: np.random.Generator, capacity: np.ndarray, span: float) -> QueueSpec:
    """A TQ whose single job keeps more than the whole cluster busy past ``span``."""
    r = capacity * rng.uniform(0.05, 1.0, capacity.size) / int(rng.integers(4, 12))
    dur = float(rng.integers(2, 8))
    per_wave = float(np.min(capacity / r))
    count = int(math.ceil(2 * per_wave * span / dur)) + 1
    return QueueSpec.tq(qid, [JobSpec("j0", (StageSpec(count, r, dur),))], arrival=0.0)


def random_scenario(seed: int, max_lq: int = 3, max_tq: int = 4, max_k: int = 3) -> Scenario:
    """LQs and backlogged TQs that all live on the common span ``[0, T]``.

    Each LQ has a whole number of periods inside ``T`` and bursts built from
    lane-shaped jobs (so its hard rate ``d/t`` is a whole number of task
    lanes).  The horizon is ``T``, the instant every LQ exits.
    """
    rng = np.random.default_rng(seed)
    k = int(rng.integers(1, max_k + 1))
    capacity = rng.choice([10.0, 20.0, 40.0, 100.0], k)
    n_lq = int(rng.integers(1, max_lq + 1))
    n_tq = int(rng.integers(0, max_tq + 1))
    span = float(rng.choice([120.0, 240.0, 360.0]))
    cluster = ClusterConfig(capacity, RESOURCE_NAMES[:k], n_min=int(rng.integers(1, 4)))
    queues = []
    for i in range(n_lq):
        n_bursts = int(rng.choice([1, 2, 3, 4]))
        period = span / n_bursts
        base = rng.integers(1, 6, int(rng.integers(1, 4)))
        waves = tuple(int(x) for x in rng.integers(1, 3, base.size))
        # Stretch the window to between a tenth of the period and all of it.
        unit = max(1, int(period * rng.uniform(0.1, 1.0) / float(np.dot(waves, base))))
        durs = tuple(float(x * unit) for x in base)
        window = float(sum(w * d for w, d in zip(waves, durs)))
        if window > period:
            waves = (1,) * len(durs)
            window = float(sum(durs))
        lanes = int(rng.integers(1, 5))
        r = _lane_demand(rng, capacity, lanes, float(rng.uniform(0.1, 1.0)))
        shape = StageShape.lanes(lanes, waves, durs)
        demand = r * shape.task_seconds
        queues.append(synth_lq(period, demand, window, n_bursts, shape, qid=f"lq{i}"))
    for j in range(n_tq):
        queues.append(backlogged_tq(f"tq{j}", rng, capacity, span))
    return Scenario(seed, cluster, tuple(queues), span)


def isolated_scenario(seed: int, max_k: int = 3) -> Scenario:
    """One LQ alone on a cluster that fits a whole number of its tasks."""
    rng = np.random.default_rng(seed)
    k = int(rng.integers(1, max_k + 1))
    capacity = rng.choice([10.0, 20.0, 40.0], k)
    m = int(rng.integers(1, 6))
    r = capacity / m * (rng.random(k) < 0.7)
    if not r.any():
        r[0] = capacity[0] / m
    durs = tuple(float(x) for x in rng.integers(1, 8, int(rng.integers(1, 4))))
    lanes = int(rng.integers(1, m + 1))
    waves = tuple(int(x) for x in rng.integers(1, 4, len(durs)))
    shape = StageShape.lanes(lanes, waves, durs)
    window = float(sum(w * d for w, d in zip(waves, durs)))
    n_bursts = int(rng.integers(1, 4))
    period = 2 * window
    lq = synth_lq(period, r * shape.task_seconds, window, n_bursts, shape, qid="lq0")
    cluster = ClusterConfig(capacity, RESOURCE_NAMES[:k])
    return Scenario(seed, cluster, (lq,), period * n_bursts)


def max_task_duration(queues: Sequence[QueueSpec]) -> float:
    out = 0.0
    for q in queues:
        jobs = [j for b in q.burst_jobs for j in b] if q.is_lq else list(q.jobs)
        for j in jobs:
            for s in j.stages:
                out = max(out, s.task_duration)
    return out


# ------------------------------------------------------------ properties


def hard_lqs(log: EventLog) -> list[str]:
    return sorted(q for q, c in queue_classes(log).items() if c == QueueClass.HARD.label)


def burst_guarantee_violations(log: EventLog, slack: float = 0.0) -> list[dict]:
    """Hard-class bursts that finish later than ``deadline + slack`` (or never)."""
    bad = []
    for q in hard_lqs(log):
        for b in burst_records(log, q):
            if b.completed is None or b.completed > b.deadline + slack + DEADLINE_SLACK:
                bad.append({"queue": q, "burst": b.index, "deadline": b.deadline, "completed": b.completed})
    return bad


def sla_violations(log: EventLog) -> list[dict]:
    """Hard LQs whose deadline-hit fraction is below their SLA fraction."""
    sla = {q["id"]: q.get("sla") or 0.0 for q in log.header["queues"]}
    bad = []
    for q in hard_lqs(log):
        recs = burst_records(log, q)
        frac = sum(b.met for b in recs) / len(recs) if recs else 0.0
        if frac < sla[q]:
            bad.append({"queue": q, "fraction": frac, "sla": sla[q]})
    return bad


def fairness_violations(log: EventLog, tol: float = 1e-6) -> list[dict]:
    return [
        {"start": w.start, "end": w.end, "margin": w.min_margin, "pair": list(w.worst_pair)}
        for w in fairness_report(log)
        if w.min_margin < -tol
    ]


class ParetoProbe:
    """Observer that records epochs at which offered capacity sits idle.

    A queue is unsatisfied when its share does not cover its demand.  Since
    tasks need every resource of their demand vector at once, the queue can
    consume more only if residual capacity is positive in every resource it
    demands; such an epoch is a violation.
    """

    def __init__(self, capacity: np.ndarray, tol: float = 1e-7):
        self.capacity = np.asarray(capacity, dtype=np.float64)
        self.tol = tol
        self.violations: list[dict] = []
        self.epochs = 0

    def __call__(self, t: float, shares: ShareLevels, demands: dict) -> None:
        self.epochs += 1
        tol = self.tol * np.maximum(self.capacity, 1.0)
        total = np.zeros_like(self.capacity)
        for v in shares.shares.values():
            total = total + v
        residual = self.capacity - total
        for q, d in demands.items():
            s = shares.shares.get(q, np.zeros_like(d))
            pos = d > 0
            if not np.any(d[pos] - s[pos] > tol[pos]):
                continue
            if np.all(residual[pos] > tol[pos]):
                self.violations.append({"t": t, "queue": q, "residual": residual.tolist()})
                return


def sandwich_violations(scenario: Scenario, tick: Optional[float] = None) -> list[dict]:
    """Task-mode burst completion must lie in ``[fluid, fluid + stages*(max task + tick)]``."""
    fluid = burst_records(run(scenario.config(mode="fluid")))
    task = burst_records(run(scenario.config(mode="task")))
    tick = scenario.cluster.tick_seconds if tick is None else tick
    bad = []
    for q in scenario.queues:
        if not q.is_lq:
            continue
        f = {b.index: b.completed for b in fluid if b.queue == q.id}
        t = {b.index: b.completed for b in task if b.queue == q.id}
        for n, jobs in enumerate(q.burst_jobs):
            chain = max(len(j.stages) for j in jobs)
            longest = max(s.task_duration for j in jobs for s in j.stages)
            lo, got = f.get(n), t.get(n)
            if lo is None or got is None:
                if lo is not None or got is not None:
                    bad.append({"queue": q.id, "burst": n, "fluid": lo, "task": got})
                continue
            hi = lo + chain * (longest + tick)
            if got < lo - 1e-6 or got > hi + 1e-6:
                bad.append({"queue": q.id, "burst": n, "fluid": lo, "task": got, "bound": hi})
    return bad


# -------------------------------------------------------- strategyproofness


@dataclass(frozen=True)
class Outcome:
    """Ordered outcome of one LQ: better is larger, compared lexicographically."""

    admission_class: int
    met_fraction: float
    neg_mean_completion: float

    def beats(self, other: "Outcome", tol: float = 1e-6) -> bool:
        if self.admission_class != other.admission_class:
            return self.admission_class > other.admission_class
        if abs(self.met_fraction - other.met_fraction) > 1e-9:
            return self.met_fraction > other.met_fraction
        return self.neg_mean_completion > other.neg_mean_completion + tol

    def as_tuple(self) -> tuple:
        return (self.admission_class, self.met_fraction, self.neg_mean_completion)


def outcome_of(log: EventLog, truth: QueueSpec) -> Outcome:
    """Score ``truth``'s bursts in a run driven by some report of them.

    The admission class comes first, then the fraction of bursts that met
    their true deadline, then the mean response time.  Unfinished bursts
    count as misses and as finishing at the end of the run.
    """
    label = queue_classes(log).get(truth.id, QueueClass.REJECTED.label)
    cls = QueueClass.from_label(label)
    end = log.end.time
    done = {b.index: b.completed for b in burst_records(log, truth.id)}
    met, resp = 0, []
    for n in range(truth.n_bursts):
        a = float(truth.arrivals[n])
        c = done.get(n)
        if c is not None and c <= a + truth.windows[n] + DEADLINE_SLACK:
            met += 1
        resp.append((end if c is None else c) - a)
    return Outcome(int(cls), met / truth.n_bursts, -float(np.mean(resp)))


DEFAULT_BETAS = (0.25, 0.5, 0.8, 1.0, 1.25, 2.0, 4.0)
DEFAULT_GAMMAS = (0.5, 0.8, 1.0, 1.25, 2.0)


@dataclass
class GridVerdict:
    seed: int
    truthful: tuple
    runs: int
    counterexamples: list = field(default_factory=list)
    dominance_failures: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.counterexamples and not self.dominance_failures


def strategy_scenario(seed: int) -> tuple[Scenario, QueueSpec]:
    """A competing environment plus a truthful LQ that is admitted as Hard.

    The LQ's window equals its critical path, so no report can make its jobs
    run faster than the truthful guarantee already allows.  Attempts whose
    truthful LQ would land in a lower class are skipped deterministically:
    from a lower class, an under-report can buy a Hard label whose
    guarantee does not cover the real work, which the class-first ordering
    would wrongly score as a gain.
    """
    for attempt in range(1000):
        rng = np.random.default_rng([seed, attempt])
        k = int(rng.integers(1, 4))
        capacity = rng.choice([20.0, 40.0, 100.0], k)
        cluster = ClusterConfig(capacity, RESOURCE_NAMES[:k], n_min=int(rng.integers(1, 3)))
        durs = tuple(float(x) for x in rng.integers(2, 8, int(rng.integers(1, 3))))
        window = float(sum(durs))
        lanes = int(rng.integers(1, 5))
        r = _lane_demand(rng, capacity, lanes, float(rng.uniform(0.2, 0.9)))
        shape = StageShape.lanes(lanes, (1,) * len(durs), durs)
        n_bursts = int(rng.integers(1, 4))
        period = 4 * window
        # The liar arrives after its competitors are admitted, so its report
        # cannot change who it competes with.
        truth = synth_lq(period, r * shape.task_seconds, window, n_bursts, shape, qid="liar", start=1.0)
        others = []
        if rng.random() < 0.6:
            r2 = _lane_demand(rng, capacity, 2, float(rng.uniform(0.2, 0.9)))
            sh2 = StageShape.lanes(2, (1,), (window,))
            others.append(synth_lq(period, r2 * sh2.task_seconds, window, n_bursts, sh2, qid="rival"))
        for j in range(int(rng.integers(0, 3))):
            others.append(backlogged_tq(f"tq{j}", rng, capacity, period * n_bursts))
        scen = Scenario(seed, cluster, tuple(others) + (truth,), 1.0 + period * n_bursts)
        log = run(scen.config(mode="fluid"))
        if queue_classes(log).get("liar") == QueueClass.HARD.label:
            return scen, truth
    raise RuntimeError(f"no admissible strategy scenario for seed {seed}")


def _with_report(scen: Scenario, truth: QueueSpec, reported: QueueSpec) -> Scenario:
    return replace(scen, queues=tuple(reported if q.id == truth.id else q for q in scen.queues))


def _report(truth: QueueSpec, demand_scale, window_scale: float = 1.0) -> QueueSpec:
    scale = np.broadcast_to(np.asarray(demand_scale, dtype=np.float64), truth.demands.shape[1:])
    return truth.with_bursts(demands=truth.demands * scale, windows=truth.windows * window_scale)


def strategyproofness_grid(
    scenario: Scenario,
    truth: QueueSpec,
    betas: Sequence[float] = DEFAULT_BETAS,
    gammas: Sequence[float] = DEFAULT_GAMMAS,
    n_nonproportional: int = 6,
    seed: int = 0,
) -> GridVerdict:
    """Check that no single misreport of ``truth`` improves its outcome.

    Misreports scale the declared demand by ``beta`` and the declared window
    by ``gamma`` while the submitted jobs stay the true ones.  Random
    per-resource scalings are additionally compared against the proportional
    report ``z = p * d`` with ``p = min_k v_k / d_k``, which must do at least
    as well.
    """

    def score(rep: QueueSpec) -> Outcome:
        log = run(_with_report(scenario, truth, rep).config(mode="fluid"))
        return outcome_of(log, truth)

    base = score(truth)
    verdict = GridVerdict(scenario.seed, base.as_tuple(), 1)
    period = float(truth.intervals.min())
    for b in betas:
        for g in gammas:
            if b == 1.0 and g == 1.0:
                continue
            if float(truth.windows.max()) * g > period:
                continue
            o = score(_report(truth, b, g))
            verdict.runs += 1
            if o.beats(base):
                verdict.counterexamples.append({"beta": b, "gamma": g, "outcome": o.as_tuple()})
    rng = np.random.default_rng([scenario.seed, seed])
    k = truth.k
    for _ in range(n_nonproportional):
        v = rng.choice(np.asarray(betas), k) * rng.uniform(0.9, 1.1, k)
        p = float(v.min())
        ov, oz = score(_report(truth, v)), score(_report(truth, p))
        verdict.runs += 2
        if ov.beats(oz):
            verdict.dominance_failures.append({"v": v.tolist(), "p": p, "v_out": ov.as_tuple(), "z_out": oz.as_tuple()})
        if ov.beats(base):
            verdict.counterexamples.append({"v": v.tolist(), "outcome": ov.as_tuple()})
    return verdict


@dataclass
class StrategyReport:
    verdicts: list
    elapsed: float = 0.0

    @property
    def runs(self) -> int:
        return sum(v.runs for v in self.verdicts)

    @property
    def passed(self) -> bool:
        return all(v.passed for v in self.verdicts)

    def summary(self) -> str:
        bad = [v.seed for v in self.verdicts if not v.passed]
        status = "PASS" if not bad else f"FAIL (seeds {bad})"
        return (f"strategyproofness grid: {len(self.verdicts)} scenarios, {self.runs} runs "
                f"in {self.elapsed:.1f}s: {status}")


def strategy_suite(n_scenarios: int = 20, seed0: int = 0, **grid_kw) -> StrategyReport:
    t0 = time.perf_counter()
    verdicts = []
    for s in range(seed0, seed0 + n_scenarios):
        scen, truth = strategy_scenario(s)
        verdicts.append(strategyproofness_grid(scen, truth, **grid_kw))
    return StrategyReport(verdicts, time.perf_counter() - t0)


# ------------------------------------------------------------------ suite


@dataclass
class SuiteReport:
    seeds: int
    elapsed: float = 0.0
    checked: dict = field(default_factory=dict)
    violations: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return not any(self.violations.values())

    def to_json(self) -> str:
        return json.dumps(asdict(self) | {"passed": self.passed}, indent=2, sort_keys=True, default=float) + "\n"

    def summary(self) -> str:
        lines = [f"property suite: {self.seeds} seeds in {self.elapsed:.1f}s"]
        for name in sorted(self.checked):
            n = len(self.violations.get(name, []))
            lines.append(f"  {'PASS' if n == 0 else 'FAIL'} {name}: {self.checked[name]} checked, {n} violations")
        return "\n".join(lines)


def _record(report: SuiteReport, name: str, seed: int, found: list) -> None:
    report.checked[name] = report.checked.get(name, 0) + 1
    report.violations.setdefault(name, [])
    report.violations[name].extend({"seed": seed, **v} for v in found)


def property_suite(
    n_seeds: int = 100,
    seed0: int = 0,
    max_lq: int = 3,
    max_tq: int = 4,
    max_k: int = 3,
    spare: bool = True,
    task_mode: bool = True,
    progress: Optional[Callable[[int], None]] = None,
) -> SuiteReport:
    """Run the burst-guarantee, fairness, Pareto, DRF-oracle and sandwich checks.

    The burst guarantee is checked in fluid mode exactly and, with
    ``task_mode``, in task mode against deadline plus the longest task.

    ``spare=False`` disables the spare step, a deliberate mutation that the
    Pareto check is expected to catch.
    """
    t0 = time.perf_counter()
    report = SuiteReport(n_seeds)
    for i in range(n_seeds):
        seed = seed0 + i
        scen = random_scenario(seed, max_lq, max_tq, max_k)
        probe = ParetoProbe(scen.cluster.capacity)
        log = run(scen.config(mode="fluid", spare=spare, observer=probe))
        _record(report, "burst_guarantee", seed, burst_guarantee_violations(log))
        _record(report, "sla_fraction", seed, sla_violations(log))
        if task_mode:
            # The horizon grows by the slack so late-but-bounded bursts can finish.
            slack = max_task_duration(scen.queues)
            tlog = run(scen.config(mode="task", spare=spare, horizon=scen.horizon + slack))
            _record(report, "burst_guarantee_task", seed, burst_guarantee_violations(tlog, slack))
        _record(report, "fairness", seed, fairness_violations(log))
        _record(report, "pareto", seed, probe.violations[:1])
        _record(report, "sandwich", seed, sandwich_violations(isolated_scenario(seed, max_k)))
        if progress is not None:
            progress(i)
    bad = drf_oracle_check(n_seeds * 2, seed=seed0)
    report.checked["drf_oracle"] = n_seeds * 2
    report.violations["drf_oracle"] = bad
    report.elapsed = time.perf_counter() - t0
    return report

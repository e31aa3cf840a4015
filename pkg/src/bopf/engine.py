"""Deterministic discrete-event simulator.

Two execution modes share one event loop:

* ``task``: stages release identical, non-preemptible tasks.  Tasks finish at
  exactly ``start + duration``; new placements happen at scheduling epochs,
  which fall on arrivals, deadline-window ends and the first tick boundary
  at or after a finish.
* ``fluid``: every stage is an infinitely divisible flow whose rate is at
  most ``task_count * task_demand``; rates are integrated exactly between
  events.  This is the verification oracle for the task mode.

The cluster is one aggregate capacity pool.  Same-time processing order is:
task finishes, queue exits, queue arrivals and admission (LQs before TQs,
then by id), burst arrivals, allocation, task starts, snapshot.
"""
from __future__ import annotations

import bisect
import heapq
import io
import json
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Iterator, Mapping, Optional, Sequence

import numpy as np

from .admission import AdmissionState, QueueClass, admit
from .allocation import (
    POLICIES,
    TIER_ELASTIC,
    TIER_HARD,
    TIER_SOFT,
    ActiveBurst,
    MbvtState,
    ShareLevels,
    bopf_allocate,
    drf_fill,
    mbvt_allocate,
    strict_priority,
    usable,
)
from .core import (
    SLACK,
    ClusterConfig,
    InvalidConfigError,
    InvariantViolation,
    JobSpec,
    QueueSpec,
    StageSpec,
    StructuralError,
)

MODES = ("task", "fluid")

# Absolute slack on completion-versus-deadline comparisons (seconds).
DEADLINE_SLACK = 1e-6


def _vec(v: np.ndarray) -> list[float]:
    return [float(x) for x in v]


@dataclass(frozen=True)
class SimEvent:
    time: float
    kind: str
    payload: dict

    def to_json(self) -> str:
        return json.dumps({"t": self.time, "kind": self.kind, **self.payload}, separators=(",", ":"))

    @classmethod
    def from_json(cls, line: str) -> "SimEvent":
        d = json.loads(line)
        t = d.pop("t")
        kind = d.pop("kind")
        return cls(float(t), kind, d)


class EventLog:
    """Time-ordered list of ``SimEvent`` with JSON-lines (de)serialization."""

    def __init__(self, events: Optional[list[SimEvent]] = None):
        self.events: list[SimEvent] = events if events is not None else []

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self) -> Iterator[SimEvent]:
        return iter(self.events)

    def append(self, time: float, kind: str, **payload) -> None:
        self.events.append(SimEvent(float(time), kind, payload))

    def of_kind(self, *kinds: str) -> Iterator[SimEvent]:
        return (e for e in self.events if e.kind in kinds)

    @property
    def header(self) -> dict:
        for e in self.events:
            if e.kind == "RunStart":
                return e.payload
        raise StructuralError("log has no RunStart event")

    @property
    def end(self) -> SimEvent:
        for e in reversed(self.events):
            if e.kind == "RunEnd":
                return e
        raise StructuralError("log has no RunEnd event")

    @property
    def capacity(self) -> np.ndarray:
        return np.array(self.header["capacity"], dtype=np.float64)

    def to_jsonl(self) -> str:
        buf = io.StringIO()
        for e in self.events:
            buf.write(e.to_json())
            buf.write("\n")
        return buf.getvalue()

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_jsonl())

    @classmethod
    def read(cls, path) -> "EventLog":
        with open(path, encoding="utf-8") as fh:
            return cls([SimEvent.from_json(line) for line in fh if line.strip()])

    def usage_steps(self) -> tuple[np.ndarray, list[str], np.ndarray]:
        """Replay AllocationSnapshots into ``(times, queue ids, usage[t, q, k])``.

        ``usage[i]`` holds on ``[times[i], times[i+1])``; the last row covers
        ``[times[-1], end]``.
        """
        k = self.capacity.shape[0]
        queues: dict[str, int] = {}
        rows: list[tuple[float, dict]] = []
        for e in self.of_kind("AllocationSnapshot"):
            for q in e.payload["usage"]:
                queues.setdefault(q, len(queues))
            rows.append((e.time, e.payload["usage"]))
        ids = sorted(queues)
        col = {q: i for i, q in enumerate(ids)}
        times = []
        cur = np.zeros((len(ids), k))
        out = []
        for t, usage in rows:
            for q, v in usage.items():
                cur[col[q]] = v
            if times and times[-1] == t:
                out[-1] = cur.copy()
            else:
                times.append(t)
                out.append(cur.copy())
        arr = np.array(out) if out else np.zeros((0, len(ids), k))
        return np.array(times), ids, arr

    def to_alloc_csv(self) -> str:
        times, ids, usage = self.usage_steps()
        names = self.header.get("resources") or [f"r{i}" for i in range(self.capacity.size)]
        buf = io.StringIO()
        buf.write("time,queue," + ",".join(names) + "\n")
        prev = None
        for i, t in enumerate(times):
            for j, q in enumerate(ids):
                row = usage[i, j]
                if prev is not None and np.array_equal(prev[j], row):
                    continue
                buf.write(f"{t!r},{q}," + ",".join(repr(float(x)) for x in row) + "\n")
            prev = usage[i]
        return buf.getvalue()


@dataclass(frozen=True, eq=False)
class SimConfig:
    """Everything one simulation run depends on."""

    cluster: ClusterConfig
    queues: tuple[QueueSpec, ...]
    policy: str = "bopf"
    mode: str = "task"
    horizon: Optional[float] = None
    warps: Mapping[str, float] = field(default_factory=dict)
    spare: bool = True
    meta: Mapping[str, Any] = field(default_factory=dict)
    # Called as observer(time, shares, demands) after every allocation; used
    # by the property harness, never by the simulation itself.
    observer: Optional[Callable[[float, ShareLevels, dict], None]] = None

    def __post_init__(self):
        object.__setattr__(self, "queues", tuple(self.queues))
        if self.policy not in POLICIES:
            raise InvalidConfigError(f"unknown policy {self.policy!r}; choose from {POLICIES}")
        if self.mode not in MODES:
            raise InvalidConfigError(f"unknown mode {self.mode!r}; choose from {MODES}")
        ids = [q.id for q in self.queues]
        if len(set(ids)) != len(ids):
            raise StructuralError("duplicate queue ids")
        k = self.cluster.k
        for q in self.queues:
            if q.k != k:
                raise StructuralError(f"queue {q.id} has {q.k} resources, cluster has {k}")
            for job in self._jobs_of(q):
                for s in job.stages:
                    if np.any(s.task_demand > self.cluster.capacity + SLACK):
                        raise InvalidConfigError(f"queue {q.id} job {job.id}: task larger than the cluster")
        if self.horizon is not None and not self.horizon > 0:
            raise InvalidConfigError("horizon must be positive")

    @staticmethod
    def _jobs_of(q: QueueSpec) -> Iterable[JobSpec]:
        if not q.is_lq:
            return q.jobs
        return (j for b in q.burst_jobs for j in b)

    def effective_horizon(self) -> float:
        if self.horizon is not None:
            return float(self.horizon)
        last = 0.0
        for q in self.queues:
            last = max(last, q.admission_time)
            if q.is_lq:
                last = max(last, float(q.arrivals[-1]))
        return 10.0 * last if last > 0 else math.inf


class _Stage:
    __slots__ = (
        "job", "idx", "demand", "duration", "count", "unstarted", "running",
        "finished", "preds_left", "work", "lanes", "done", "key", "pos",
    )

    def __init__(self, job: "_Job", idx: int, spec: StageSpec):
        self.job = job
        self.idx = idx
        self.demand = spec.task_demand
        self.duration = spec.task_duration
        self.count = spec.task_count
        self.unstarted = spec.task_count
        self.running = 0
        self.finished = 0
        self.preds_left = len(job.spec.predecessors[idx])
        self.work = spec.task_count * spec.task_duration  # task-seconds, fluid mode
        self.lanes = 0.0
        self.done = False
        self.key = (job.seq, idx)
        # (resource, per-task demand) pairs with positive demand, as floats
        self.pos = tuple((i, float(v)) for i, v in enumerate(spec.task_demand) if v > 0)

    def __lt__(self, other: "_Stage") -> bool:
        return self.key < other.key


class _Job:
    __slots__ = ("spec", "uid", "seq", "queue", "burst", "submitted", "stages", "left", "completed")

    def __init__(self, spec: JobSpec, uid: str, seq: int, queue: "_Queue", burst, submitted: float):
        self.spec = spec
        self.uid = uid
        self.seq = seq
        self.queue = queue
        self.burst = burst
        self.submitted = submitted
        self.stages = [_Stage(self, i, s) for i, s in enumerate(spec.stages)]
        self.left = len(self.stages)
        self.completed: Optional[float] = None


class _Burst:
    __slots__ = ("index", "arrival", "window", "declared", "target", "delivered", "jobs_left", "completed")

    def __init__(self, index: int, arrival: float, window: float, declared: np.ndarray, k: int):
        self.index = index
        self.arrival = arrival
        self.window = window
        self.declared = declared
        # Part of the report the submitted jobs can actually use; set once the
        # jobs are known.  Only this part is ever provisioned.
        self.target = declared
        self.delivered = np.zeros(k)
        self.jobs_left = 0
        self.completed: Optional[float] = None

    @property
    def deadline(self) -> float:
        return self.arrival + self.window

    @property
    def rate(self) -> np.ndarray:
        return self.target / self.window

    def satisfied(self) -> bool:
        return bool(np.all(self.delivered >= self.target - SLACK))


class _Queue:
    def __init__(self, spec: QueueSpec, k: int):
        self.spec = spec
        self.id = spec.id
        self.is_lq = spec.is_lq
        self.cls: Optional[QueueClass] = None
        self.status = "pending"
        self.jobs_left = 0
        self.next_burst = 0
        self.bursts: list[_Burst] = []
        self.frontier: list[_Stage] = []
        self.running = np.zeros(k)
        self.n_running = 0
        self.pending = np.zeros(k)
        self.usage = np.zeros(k)  # fluid mode consumption rate
        self.lit: list[_Stage] = []  # fluid mode: stages currently holding lanes
        self.positive_tasks = True

    def current_burst(self) -> Optional[_Burst]:
        if self.bursts and self.bursts[-1].completed is None:
            return self.bursts[-1]
        return None


def _synthetic_job(burst_id: str, demand: np.ndarray, capacity: np.ndarray) -> JobSpec:
    """One fully parallel task carrying a burst that came without jobs."""
    ds = float(np.max(demand / capacity))
    if ds <= 0:
        return JobSpec(burst_id, (StageSpec(1, np.zeros_like(demand), 1e-9),))
    return JobSpec(burst_id, (StageSpec(1, demand / ds, ds),))


class Simulator:
    def __init__(self, config: SimConfig):
        self.cfg = config
        self.cluster = config.cluster
        self.cap = config.cluster.capacity
        self.k = config.cluster.k
        self.tick = config.cluster.tick_seconds
        self.task_mode = config.mode == "task"
        self.horizon = config.effective_horizon()
        self.log = EventLog()
        self.clock = 0.0
        self._last_advance = 0.0
        self.used = np.zeros(self.k)
        self.n_running = 0
        self.queues = {q.id: _Queue(q, self.k) for q in config.queues}
        for q in self.queues.values():
            for job in SimConfig._jobs_of(q.spec):
                if any(np.any(s.task_demand <= 0) for s in job.stages):
                    q.positive_tasks = False
        self.order = sorted(self.queues.values(), key=lambda q: (not q.is_lq, q.id))
        self.admission = AdmissionState(config.cluster, allow_soft=config.policy != "nbopf")
        self.mbvt = MbvtState()
        self._seq = 0
        self._finish_seq = 0
        self._inflight: list = []
        self._epochs: list[float] = []
        self._epoch_set: set[float] = set()
        self._last_usage: dict[str, tuple] = {}
        self._shares: Optional[ShareLevels] = None
        self._live = len(self.queues)

    # ----------------------------------------------------------------- utils
    def _schedule(self, t: float) -> None:
        if t not in self._epoch_set and t <= self.horizon:
            self._epoch_set.add(t)
            heapq.heappush(self._epochs, t)

    def _tick_ceil(self, t: float) -> float:
        return max(t, math.ceil(t / self.tick - 1e-9) * self.tick)

    def _emit(self, kind: str, **payload) -> None:
        self.log.append(self.clock, kind, **payload)

    def _snapshot(self) -> None:
        changed = {}
        for q in self.queues.values():
            u = q.running if self.task_mode else q.usage
            key = tuple(u.tolist())
            if self._last_usage.get(q.id, None) != key:
                if q.id in self._last_usage or any(key):
                    changed[q.id] = list(key)
                self._last_usage[q.id] = key
        if changed:
            self._emit("AllocationSnapshot", usage=changed)

    def _current_usage(self) -> dict[str, np.ndarray]:
        if self.task_mode:
            return {q.id: q.running for q in self.queues.values() if q.n_running}
        return {q.id: q.usage for q in self.queues.values() if q.usage.any()}

    def _advance_vt(self, t: float) -> None:
        if self.cfg.policy == "mbvt":
            self.mbvt.advance(self._current_usage(), self.cap, t - self._last_advance)
        self._last_advance = t

    # ------------------------------------------------------------ lifecycle
    def _submit(self, q: _Queue, spec: JobSpec, uid: str, burst: Optional[_Burst]) -> None:
        job = _Job(spec, uid, self._seq, q, burst, self.clock)
        self._seq += 1
        q.jobs_left += 1
        if burst is not None:
            burst.jobs_left += 1
        self._emit("JobSubmit", queue=q.id, job=uid, burst=None if burst is None else burst.index)
        for st in job.stages:
            if st.preds_left == 0:
                self._unlock(q, st)

    def _unlock(self, q: _Queue, st: _Stage) -> None:
        bisect.insort(q.frontier, st)
        if self.task_mode:
            q.pending = q.pending + st.demand * st.unstarted
        else:
            q.pending = q.pending + st.demand * st.count

    def _stage_done(self, q: _Queue, st: _Stage) -> None:
        st.done = True
        job = st.job
        for s in job.spec.successors[st.idx]:
            nxt = job.stages[s]
            nxt.preds_left -= 1
            if nxt.preds_left == 0:
                self._unlock(q, nxt)
        job.left -= 1
        if job.left == 0:
            job.completed = self.clock
            q.jobs_left -= 1
            self._emit("JobComplete", queue=q.id, job=job.uid, submitted=job.submitted)
            b = job.burst
            if b is not None:
                b.jobs_left -= 1
                if b.jobs_left == 0:
                    b.completed = self.clock
                    met = self.clock <= b.deadline + DEADLINE_SLACK
                    self._emit("BurstComplete", queue=q.id, burst=b.index, arrival=b.arrival,
                               deadline=b.deadline, met=met)
                    if self.cfg.policy == "mbvt":
                        self.mbvt.unwarp(q.id)
            self._maybe_exit(q)

    def _maybe_exit(self, q: _Queue) -> None:
        if q.status != "active" or q.jobs_left:
            return
        if q.is_lq:
            if q.next_burst < q.spec.n_bursts or self.clock < q.spec.exit_floor - SLACK:
                return
        q.status = "exited"
        self._live -= 1
        if self.cfg.policy in ("bopf", "nbopf"):
            self.admission.release(q.id)
        self.mbvt.deactivate(q.id)
        self._emit("QueueExit", queue=q.id, queue_kind=q.spec.kind.value, cls=q.cls.label)

    def _arrivals(self) -> None:
        t = self.clock
        for q in self.order:
            if q.status == "pending" and q.spec.admission_time <= t + SLACK:
                if self.cfg.policy in ("bopf", "nbopf"):
                    denom = self.admission.denominator()
                    cls, _ = admit(q.spec, self.admission)
                else:
                    denom = None
                    cls = QueueClass.ELASTIC
                q.cls = cls
                self._emit("AdmissionDecision", queue=q.id, queue_kind=q.spec.kind.value, cls=cls.label,
                           denominator=denom)
                if cls is QueueClass.REJECTED:
                    q.status = "rejected"
                    self._live -= 1
                    continue
                q.status = "active"
                if not q.is_lq:
                    for job in q.spec.jobs:
                        self._submit(q, job, f"{q.id}/{job.id}", None)
        for q in self.order:
            if not q.is_lq or q.status != "active":
                continue
            spec = q.spec
            while q.next_burst < spec.n_bursts and spec.arrivals[q.next_burst] <= t + SLACK:
                n = q.next_burst
                q.next_burst += 1
                b = _Burst(n, float(spec.arrivals[n]), float(spec.windows[n]), spec.demands[n], self.k)
                q.bursts.append(b)
                self._emit("BurstArrival", queue=q.id, burst=n, deadline=b.deadline, demand=_vec(b.declared))
                jobs = spec.burst_jobs[n] if spec.burst_jobs else ()
                if not jobs:
                    jobs = (_synthetic_job(f"b{n}", b.declared, self.cap),)
                b.target = usable(b.declared, np.sum([j.work for j in jobs], axis=0))
                for job in jobs:
                    self._submit(q, job, f"{q.id}/b{n}/{job.id}", b)
                if self.cfg.policy == "mbvt":
                    self.mbvt.activate(q.id, self.cfg.warps.get(q.id, b.window))
            self._maybe_exit(q)

    # ----------------------------------------------------------- allocation
    def _allocate(self) -> ShareLevels:
        t = self.clock
        policy = self.cfg.policy
        demands: dict[str, np.ndarray] = {}
        bursts: dict[str, ActiveBurst] = {}
        for q in self.queues.values():
            if q.status != "active":
                continue
            d = q.running + q.pending if self.task_mode else q.pending
            if policy in ("bopf", "nbopf") and q.cls in (QueueClass.HARD, QueueClass.SOFT):
                b = q.current_burst()
                if b is not None:
                    late = self.task_mode and q.cls is QueueClass.HARD
                    bursts[q.id] = ActiveBurst(q.id, b.arrival, b.window, b.target, b.delivered.copy(), late)
                    guarded = t < b.deadline - SLACK or (late and not b.satisfied())
                    if late and guarded:
                        # Keep the guaranteed share claimed between task waves so
                        # non-preemptible elastic tasks cannot fill it.
                        d = np.maximum(d, b.rate)
            if d.any():
                demands[q.id] = d
        self._demands = demands
        if policy in ("bopf", "nbopf"):
            return bopf_allocate(self.admission, bursts, demands, self.cap, t, spare=self.cfg.spare, policy=policy)
        if policy == "drf":
            return drf_fill(demands, self.cap, epoch=t)
        if policy == "sp":
            lq = {q: d for q, d in demands.items() if self.queues[q].is_lq}
            tq = {q: d for q, d in demands.items() if not self.queues[q].is_lq}
            return strict_priority(lq, tq, self.cap, epoch=t)
        for q in list(self.mbvt.active):
            if q not in demands:
                self.mbvt.deactivate(q)
        shares, self.mbvt = mbvt_allocate(self.mbvt, demands, self.cap, t)
        return shares

    # ------------------------------------------------------------ task mode
    def _start_tasks(self, shares: ShareLevels) -> None:
        cap = self.cap
        reserved = np.zeros(self.k)
        ranked = sorted(
            (q for q in self.queues.values() if q.id in shares.shares and q.frontier),
            key=lambda q: (-shares.tiers.get(q.id, TIER_ELASTIC), float(np.max(q.running / cap)), q.id),
        )
        for q in ranked:
            share = shares.shares[q.id]
            guaranteed = shares.tiers.get(q.id, TIER_ELASTIC) > TIER_ELASTIC
            k = self.k
            room = [float(x) for x in share - q.running]
            free = [float(x) for x in cap - self.used - reserved]
            avail = [min(room[i], free[i]) for i in range(k)]
            i = 0
            while i < len(q.frontier):
                if q.positive_tasks and min(avail) <= SLACK:
                    break
                st = q.frontier[i]
                m = st.unstarted
                for j, r in st.pos:
                    c = int(math.floor(avail[j] / r + 1e-9))
                    if c < m:
                        m = c
                        if m <= 0:
                            break
                if m <= 0:
                    i += 1
                    continue
                self._launch(q, st, m)
                for j, r in st.pos:
                    avail[j] -= r * m
                if st.unstarted == 0:
                    q.frontier.pop(i)
                    if not q.frontier:
                        q.pending = np.zeros(self.k)
                else:
                    i += 1
            if guaranteed:
                reserved = reserved + np.maximum(share - q.running, 0.0)

    def _launch(self, q: _Queue, st: _Stage, m: int) -> None:
        load = st.demand * m
        st.unstarted -= m
        st.running += m
        q.running = q.running + load
        q.n_running += m
        q.pending = np.maximum(q.pending - load, 0.0)
        self.used = self.used + load
        self.n_running += m
        b = st.job.burst
        if b is not None:
            b.delivered = b.delivered + load * st.duration
        finish = self.clock + st.duration
        self._finish_seq += 1
        heapq.heappush(self._inflight, (finish, self._finish_seq, st, m))
        self._emit("TaskStart", queue=q.id, job=st.job.uid, stage=st.idx, count=m,
                   demand=_vec(st.demand), duration=st.duration)
        if np.any(self.used > cap_slack(self.cap)):
            raise InvariantViolation(f"cluster usage {self.used.tolist()} exceeds capacity at t={self.clock}")

    def _process_finishes(self, t: float) -> None:
        self._advance_vt(t)
        self.clock = t
        while self._inflight and self._inflight[0][0] <= t:
            _, _, st, m = heapq.heappop(self._inflight)
            q = st.job.queue
            load = st.demand * m
            st.running -= m
            st.finished += m
            q.n_running -= m
            self.n_running -= m
            q.running = q.running - load if q.n_running else np.zeros(self.k)
            self.used = self.used - load if self.n_running else np.zeros(self.k)
            self._emit("TaskFinish", queue=q.id, job=st.job.uid, stage=st.idx, count=m)
            if st.finished == st.count:
                self._stage_done(q, st)
        self._snapshot()
        self._schedule(self._tick_ceil(t))

    # ----------------------------------------------------------- fluid mode
    def _assign_rates(self, shares: ShareLevels) -> None:
        # Plain floats: this runs once per epoch over every frontier stage.
        for q in self.queues.values():
            for st in q.lit:
                st.lanes = 0.0
            q.lit = []
            share = shares.shares.get(q.id)
            if share is None or q.status != "active":
                q.usage = np.zeros(self.k)
                continue
            left = [float(x) for x in share]
            used = [0.0] * self.k
            for st in q.frontier:
                lanes = float(st.count)
                for i, r in st.pos:
                    c = left[i] / r
                    if c < lanes:
                        lanes = c
                        if lanes <= 0:
                            break
                if lanes <= 0:
                    continue
                st.lanes = lanes
                q.lit.append(st)
                for i, r in st.pos:
                    u = r * lanes
                    used[i] += u
                    left[i] = max(left[i] - u, 0.0)
                if not any(v > 0 for v in left):
                    break
            q.usage = np.array(used)

    def _fluid_next(self, shares: ShareLevels) -> float:
        t = self.clock
        nxt = math.inf
        for q in self.queues.values():
            if q.status != "active":
                continue
            for st in q.lit:
                nxt = min(nxt, t + st.work / st.lanes)
            if self.cfg.policy in ("bopf", "nbopf") and shares.tiers.get(q.id) == TIER_SOFT:
                b = q.current_burst()
                if b is not None:
                    rem = b.target - b.delivered
                    need = rem > SLACK
                    if need.any() and np.all(q.usage[need] > 0):
                        nxt = min(nxt, t + float(np.max(rem[need] / q.usage[need])))
        if self.cfg.policy == "mbvt" and any(q.usage.any() for q in self.queues.values()):
            nxt = min(nxt, t + self.tick)
        return nxt

    def _fluid_advance(self, t_next: float) -> None:
        dt = t_next - self.clock
        self._advance_vt(t_next)
        tol = 1e-9 * max(1.0, t_next)
        finished = []
        for q in self.queues.values():
            if q.status != "active" or not q.usage.any():
                continue
            for st in q.lit:
                if self.clock + st.work / st.lanes <= t_next + tol:
                    st.work = 0.0
                    finished.append((q, st))
                else:
                    st.work -= st.lanes * dt
                jb = st.job.burst
                if jb is not None:
                    jb.delivered = jb.delivered + st.demand * st.lanes * dt
        self.clock = t_next
        for q, st in sorted(finished, key=lambda x: (x[0].id, x[1].key)):
            q.frontier.remove(st)
            q.pending = np.maximum(q.pending - st.demand * st.count, 0.0)
            if not q.frontier:
                q.pending = np.zeros(self.k)
            self._stage_done(q, st)

    # ----------------------------------------------------------------- run
    def _epoch(self) -> ShareLevels:
        for q in self.order:
            self._maybe_exit(q)
        self._arrivals()
        shares = self._allocate()
        self._shares = shares
        if self.cfg.observer is not None:
            self.cfg.observer(self.clock, shares, self._demands)
        if self.task_mode:
            self._start_tasks(shares)
        else:
            self._assign_rates(shares)
        self._snapshot()
        if self.task_mode and self.cfg.policy == "mbvt" and self.n_running:
            self._schedule(self.clock + self.tick)
        return shares

    def _header(self) -> dict:
        return dict(
            policy=self.cfg.policy,
            mode=self.cfg.mode,
            capacity=_vec(self.cap),
            resources=list(self.cluster.resource_names),
            n_min=self.cluster.n_min,
            tick=self.tick,
            horizon=None if math.isinf(self.horizon) else self.horizon,
            queues=[
                {"id": q.id, "kind": q.spec.kind.value,
                 "period": None if not q.is_lq else float(q.spec.intervals.max()),
                 "sla": q.spec.sla_fraction if q.is_lq else None}
                for q in self.order
            ],
            meta=dict(self.cfg.meta),
        )

    def _done(self) -> bool:
        return self._live == 0

    def run(self) -> EventLog:
        self.clock = 0.0
        self._emit("RunStart", **self._header())
        for q in self.queues.values():
            self._schedule(q.spec.admission_time)
            if q.is_lq:
                for a, w in zip(q.spec.arrivals, q.spec.windows):
                    self._schedule(float(a))
                    self._schedule(float(a + w))
                self._schedule(q.spec.exit_floor)
        if self.task_mode:
            self._run_task()
        else:
            self._run_fluid()
        pending = sum(q.jobs_left for q in self.queues.values() if q.status == "active")
        self._emit("RunEnd", truncated=self._live > 0, pending_jobs=pending)
        return self.log

    def _run_task(self) -> None:
        while not self._done():
            tf = self._inflight[0][0] if self._inflight else math.inf
            te = self._epochs[0] if self._epochs else math.inf
            t = min(tf, te)
            if math.isinf(t) or t > self.horizon:
                if not math.isinf(self.horizon) and self.horizon >= self.clock:
                    self.clock = self.horizon
                break
            if tf <= te:
                self._process_finishes(tf)
                continue
            heapq.heappop(self._epochs)
            self._epoch_set.discard(te)
            self._advance_vt(te)
            self.clock = te
            self._epoch()

    def _run_fluid(self) -> None:
        while True:
            while self._epochs and self._epochs[0] <= self.clock + SLACK:
                self._epoch_set.discard(heapq.heappop(self._epochs))
            shares = self._epoch()
            if self._done():
                break
            nxt = min(self._fluid_next(shares), self._epochs[0] if self._epochs else math.inf)
            if math.isinf(nxt) or nxt > self.horizon:
                if not math.isinf(self.horizon):
                    self._fluid_advance(self.horizon)
                    self._snapshot()
                break
            self._fluid_advance(nxt)


def cap_slack(cap: np.ndarray) -> np.ndarray:
    return cap * (1 + 1e-9) + SLACK


def run(config: SimConfig) -> EventLog:
    return Simulator(config).run()


@dataclass
class FluidResult:
    """Burst completion times and cumulative allocation curves of a fluid run."""

    log: EventLog
    burst_completion: dict[tuple[str, int], float]
    curves: dict[str, tuple[np.ndarray, np.ndarray]]


def fluid_oracle(config: SimConfig) -> FluidResult:
    """Exact-rate reference run used to bound task-granular results."""
    from dataclasses import replace

    log = run(replace(config, mode="fluid"))
    done = {(e.payload["queue"], e.payload["burst"]): e.time for e in log.of_kind("BurstComplete")}
    times, ids, usage = log.usage_steps()
    curves = {}
    if times.size:
        dt = np.diff(times)
        for j, q in enumerate(ids):
            cum = np.vstack([np.zeros(usage.shape[2]), np.cumsum(usage[:-1, j] * dt[:, None], axis=0)])
            curves[q] = (times, cum)
    return FluidResult(log, done, curves)

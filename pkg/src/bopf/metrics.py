"""Evaluation quantities computed from an ``EventLog``.

All functions are read-only and depend on event timestamps and payloads
only, never on the order of same-time events.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable, Optional, Union

import numpy as np

from .engine import DEADLINE_SLACK, EventLog

QueueFilter = Union[None, str, Iterable[str], Callable[[str], bool]]


@dataclass(frozen=True)
class JobRecord:
    queue: str
    job: str
    burst: Optional[int]
    submitted: float
    completed: Optional[float]

    @property
    def duration(self) -> Optional[float]:
        return None if self.completed is None else self.completed - self.submitted


@dataclass(frozen=True)
class BurstRecord:
    queue: str
    index: int
    arrival: float
    deadline: float
    completed: Optional[float]

    @property
    def met(self) -> bool:
        return self.completed is not None and self.completed <= self.deadline + DEADLINE_SLACK

    @property
    def response(self) -> Optional[float]:
        return None if self.completed is None else self.completed - self.arrival


def queue_kinds(log: EventLog) -> dict[str, str]:
    return {q["id"]: q["kind"] for q in log.header.get("queues", [])}


def queue_classes(log: EventLog) -> dict[str, str]:
    return {e.payload["queue"]: e.payload["cls"] for e in log.of_kind("AdmissionDecision")}


def _selector(log: EventLog, queues: QueueFilter) -> Callable[[str], bool]:
    if queues is None:
        return lambda q: True
    if callable(queues):
        return queues
    if isinstance(queues, str):
        if queues in ("LQ", "TQ"):
            kinds = queue_kinds(log)
            return lambda q: kinds.get(q) == queues
        return lambda q: q == queues
    ids = set(queues)
    return lambda q: q in ids


def job_records(log: EventLog, queues: QueueFilter = None) -> list[JobRecord]:
    keep = _selector(log, queues)
    submitted: dict[str, tuple[str, Optional[int], float]] = {}
    done: dict[str, float] = {}
    for e in log.of_kind("JobSubmit", "JobComplete"):
        p = e.payload
        if not keep(p["queue"]):
            continue
        if e.kind == "JobSubmit":
            submitted[p["job"]] = (p["queue"], p.get("burst"), e.time)
        else:
            done[p["job"]] = e.time
    return [JobRecord(q, j, b, t, done.get(j)) for j, (q, b, t) in submitted.items()]


def avg_completion(log: EventLog, queues: QueueFilter = None) -> float:
    """Mean job completion time over completed jobs; truncated jobs are excluded."""
    d = [r.duration for r in job_records(log, queues) if r.completed is not None]
    return float(np.mean(d)) if d else math.nan


def truncated_jobs(log: EventLog, queues: QueueFilter = None) -> list[str]:
    return [r.job for r in job_records(log, queues) if r.completed is None]


def burst_records(log: EventLog, queues: QueueFilter = None) -> list[BurstRecord]:
    keep = _selector(log, queues)
    arr: dict[tuple[str, int], tuple[float, float]] = {}
    done: dict[tuple[str, int], float] = {}
    for e in log.of_kind("BurstArrival", "BurstComplete"):
        p = e.payload
        if not keep(p["queue"]):
            continue
        key = (p["queue"], p["burst"])
        if e.kind == "BurstArrival":
            arr[key] = (e.time, p["deadline"])
        else:
            done[key] = e.time
    return [BurstRecord(q, n, a, d, done.get((q, n))) for (q, n), (a, d) in sorted(arr.items())]


def burst_completion(log: EventLog, queues: QueueFilter = None) -> dict[tuple[str, int], Optional[float]]:
    """R_i(n): completion instant of each burst (None if unfinished)."""
    return {(b.queue, b.index): b.completed for b in burst_records(log, queues)}


def deadline_fraction(log: EventLog, lq_id: str) -> float:
    """Fraction of arrived bursts finished by their deadline; unfinished count as misses."""
    recs = burst_records(log, lq_id)
    if not recs:
        return 0.0
    return sum(r.met for r in recs) / len(recs)


def factor_of_improvement(drf_log: EventLog, bopf_log: EventLog, queues: QueueFilter = "LQ") -> float:
    """Average completion under DRF divided by the same under BoPF."""
    return avg_completion(drf_log, queues) / avg_completion(bopf_log, queues)


# ---------------------------------------------------------------- fairness


@dataclass(frozen=True)
class Segment:
    start: float
    end: float
    members: frozenset

    @property
    def length(self) -> float:
        return self.end - self.start


def membership_segments(log: EventLog) -> list[Segment]:
    """Maximal intervals with no admission or exit."""
    end = log.end.time
    members: set[str] = set()
    changes: list[tuple[float, frozenset]] = []
    for e in log.of_kind("AdmissionDecision", "QueueExit"):
        q = e.payload["queue"]
        if e.kind == "AdmissionDecision":
            if e.payload["cls"] == "Rejected":
                continue
            members.add(q)
        else:
            members.discard(q)
        if changes and changes[-1][0] == e.time:
            changes[-1] = (e.time, frozenset(members))
        else:
            changes.append((e.time, frozenset(members)))
    segs = []
    for i, (t, m) in enumerate(changes):
        t1 = changes[i + 1][0] if i + 1 < len(changes) else end
        if t1 > t and m:
            segs.append(Segment(t, t1, m))
    return segs


def average_usage(log: EventLog, t0: float, t1: float) -> dict[str, np.ndarray]:
    """Time-averaged usage vector per queue over ``[t0, t1]`` (exact for step functions)."""
    if not t1 > t0:
        raise ValueError("empty window")
    times, ids, usage = log.usage_steps()
    out = {q: np.zeros(usage.shape[2] if usage.ndim == 3 else 0) for q in ids}
    if times.size == 0:
        return out
    edges = np.append(times, max(t1, times[-1]))
    lo = np.clip(edges[:-1], t0, t1)
    hi = np.clip(edges[1:], t0, t1)
    w = (hi - lo) / (t1 - t0)
    avg = np.einsum("t,tqk->qk", w, usage)
    return {q: avg[j] for j, q in enumerate(ids)}


def fairness_check(log: EventLog, window: tuple[float, float], strict: bool = True) -> dict[tuple[str, str], float]:
    """TQ-minus-LQ margins of time-averaged dominant share over ``window``.

    Dominant shares are taken relative to capacity.  With ``strict`` the
    window must sit inside one constant-membership segment.
    """
    t0, t1 = window
    seg = None
    for s in membership_segments(log):
        if s.start <= t0 + 1e-9 and t1 <= s.end + 1e-9:
            seg = s
            break
    if seg is None:
        if strict:
            raise ValueError(f"window {window} crosses an admission or exit")
        members = frozenset(queue_kinds(log))
    else:
        members = seg.members
    kinds = queue_kinds(log)
    cap = log.capacity
    avg = average_usage(log, t0, t1)
    zero = np.zeros_like(cap)
    dom = {q: float(np.max(avg.get(q, zero) / cap)) for q in members}
    lqs = sorted(q for q in members if kinds.get(q) == "LQ")
    tqs = sorted(q for q in members if kinds.get(q) == "TQ")
    return {(i, j): dom[j] - dom[i] for i in lqs for j in tqs}


@dataclass(frozen=True)
class FairnessWindow:
    start: float
    end: float
    min_margin: float
    worst_pair: Optional[tuple[str, str]]


def fairness_report(log: EventLog, min_length: Optional[float] = None) -> list[FairnessWindow]:
    """Fairness margins on every constant-membership segment with both LQs and TQs.

    Segments shorter than ``min_length`` (default: the longest LQ period
    among the members) are skipped, because a window that cuts a period
    short measures a burst, not a long-term average.
    """
    kinds = queue_kinds(log)
    periods = {q["id"]: q.get("period") or 0.0 for q in log.header.get("queues", [])}
    out = []
    for seg in membership_segments(log):
        lqs = [q for q in seg.members if kinds.get(q) == "LQ"]
        tqs = [q for q in seg.members if kinds.get(q) == "TQ"]
        if not lqs or not tqs:
            continue
        need = min_length if min_length is not None else max(periods.get(q, 0.0) for q in lqs)
        if seg.length < need - 1e-9:
            continue
        margins = fairness_check(log, (seg.start, seg.end))
        worst = min(margins, key=lambda p: (margins[p], p))
        out.append(FairnessWindow(seg.start, seg.end, margins[worst], worst))
    return out


def utilization(log: EventLog) -> np.ndarray:
    """Per-resource busy fraction over the whole run."""
    start = 0.0
    end = log.end.time
    if end <= start:
        return np.zeros_like(log.capacity)
    avg = average_usage(log, start, end)
    tot = np.sum(list(avg.values()), axis=0) if avg else np.zeros_like(log.capacity)
    return tot / log.capacity


def consumed(log: EventLog, queue: str) -> np.ndarray:
    """Resource-seconds used by one queue over the run."""
    end = log.end.time
    if end <= 0:
        return np.zeros_like(log.capacity)
    return average_usage(log, 0.0, end).get(queue, np.zeros_like(log.capacity)) * end


# ---------------------------------------------------------------- summary


@dataclass
class RunSummary:
    policy: str
    mode: str
    truncated: bool
    end_time: float
    classes: dict
    avg_completion: dict
    lq_avg_completion: float
    tq_avg_completion: float
    bursts: dict
    deadline_fraction: dict
    sla_fraction: dict
    fairness: list
    utilization: list
    truncated_jobs: int
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(_clean(self.to_dict()), indent=2, sort_keys=True) + "\n"


def _clean(x):
    if isinstance(x, float) and not math.isfinite(x):
        return None
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    return x


def summarize(log: EventLog) -> RunSummary:
    h = log.header
    kinds = queue_kinds(log)
    lqs = sorted(q for q, k in kinds.items() if k == "LQ")
    sla = {q["id"]: q.get("sla") for q in h.get("queues", []) if q["kind"] == "LQ"}
    return RunSummary(
        policy=h["policy"],
        mode=h["mode"],
        truncated=bool(log.end.payload.get("truncated")),
        end_time=log.end.time,
        classes=queue_classes(log),
        avg_completion={q: avg_completion(log, q) for q in sorted(kinds)},
        lq_avg_completion=avg_completion(log, "LQ"),
        tq_avg_completion=avg_completion(log, "TQ"),
        bursts={q: [[b.index, b.arrival, b.deadline, b.completed] for b in burst_records(log, q)] for q in lqs},
        deadline_fraction={q: deadline_fraction(log, q) for q in lqs},
        sla_fraction=sla,
        fairness=[[w.start, w.end, w.min_margin] for w in fairness_report(log)],
        utilization=utilization(log).tolist(),
        truncated_jobs=len(truncated_jobs(log)),
        config=h.get("meta", {}),
    )

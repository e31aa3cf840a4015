"""Admission control: classify arriving queues as Hard, Soft, Elastic or Rejected.

The safety and fairness conditions compare every burst demand against
``C * interval / D`` with ``D = max(|H| + |S| + |E| + 1, n_min)``.  Because the
bound is linear in ``1 / D``, each guaranteed queue is summarized by the
largest denominator it tolerates (its *limit*), and the admitted set by the
smallest such limit (the *guard*).  Both checks are then O(K) per arrival.
The resource condition needs the committed hard-rate timeline and is
evaluated exactly on the union of breakpoints.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import (
    SLACK,
    ClusterConfig,
    InvariantViolation,
    MalformedSpecError,
    QueueSpec,
    StructuralError,
)


class QueueClass(enum.IntEnum):
    """Admission classes, ordered from worst to best outcome."""

    REJECTED = 0
    ELASTIC = 1
    SOFT = 2
    HARD = 3

    @property
    def label(self) -> str:
        return self.name.capitalize()

    @classmethod
    def from_label(cls, label: str) -> "QueueClass":
        return cls[label.upper()]


# Module-level aliases: enum attribute lookups are slow on the admission hot path.
REJECTED, ELASTIC, SOFT, HARD = QueueClass.REJECTED, QueueClass.ELASTIC, QueueClass.SOFT, QueueClass.HARD


class CommittedTimeline:
    """Piecewise-constant sum of hard-class rates over half-open windows.

    Contributions are kept per queue so that a departing queue can release
    its commitments.  The merged step function is rebuilt lazily.
    """

    def __init__(self, k: int):
        self.k = k
        self._parts: dict[str, tuple[np.ndarray, np.ndarray, np.ndarray]] = {}
        self._steps: Optional[tuple[np.ndarray, np.ndarray]] = None

    def __len__(self) -> int:
        return len(self._parts)

    def __contains__(self, qid: str) -> bool:
        return qid in self._parts

    def add(self, qid: str, starts: np.ndarray, ends: np.ndarray, rates: np.ndarray) -> None:
        if qid in self._parts:
            raise StructuralError(f"queue {qid} already holds commitments")
        self._parts[qid] = (np.asarray(starts, float), np.asarray(ends, float), np.asarray(rates, float))
        self._steps = None

    def remove(self, qid: str) -> None:
        if self._parts.pop(qid, None) is not None:
            self._steps = None

    def steps(self) -> tuple[np.ndarray, np.ndarray]:
        """Breakpoints ``times`` and the committed rate on ``[times[i], times[i+1])``."""
        if self._steps is None:
            if not self._parts:
                self._steps = (np.zeros(0), np.zeros((0, self.k)))
            else:
                starts = np.concatenate([p[0] for p in self._parts.values()])
                ends = np.concatenate([p[1] for p in self._parts.values()])
                rates = np.concatenate([p[2] for p in self._parts.values()])
                times = np.concatenate([starts, ends])
                deltas = np.concatenate([rates, -rates])
                order = np.argsort(times, kind="stable")
                times = times[order]
                cum = np.cumsum(deltas[order], axis=0)
                last = np.append(np.nonzero(np.diff(times))[0], times.size - 1)
                values = np.maximum(cum[last], 0.0)
                self._steps = (times[last], values)
        return self._steps

    def value_at(self, t: float) -> np.ndarray:
        times, values = self.steps()
        i = np.searchsorted(times, t, side="right") - 1
        return values[i].copy() if i >= 0 else np.zeros(self.k)

    def peak(self) -> np.ndarray:
        _, values = self.steps()
        return values.max(axis=0) if values.size else np.zeros(self.k)

    def fits(self, starts: np.ndarray, ends: np.ndarray, rates: np.ndarray, capacity: np.ndarray) -> bool:
        """True iff adding ``rates`` over ``[starts, ends)`` stays within capacity.

        Candidate windows must be sorted and disjoint.  Both step functions are
        constant between consecutive points of the union of breakpoints, so
        evaluating at those points checks every instant.
        """
        times, values = self.steps()
        top = rates.max(axis=0) if rates.size else np.zeros(self.k)
        # Exact shortcuts: peak-plus-peak fitting bounds every instant.
        if not times.size or np.all(values.max(axis=0) + top <= capacity + SLACK):
            return bool(np.all(top <= capacity + SLACK))
        points = np.unique(np.concatenate([times, starts, ends]))
        if times.size:
            i = np.searchsorted(times, points, side="right") - 1
            committed = np.where((i >= 0)[:, None], values[np.maximum(i, 0)], 0.0)
        else:
            committed = 0.0
        j = np.searchsorted(starts, points, side="right") - 1
        inside = (j >= 0) & (points < ends[np.maximum(j, 0)])
        cand = np.where(inside[:, None], rates[np.maximum(j, 0)], 0.0)
        return bool(np.all(committed + cand <= capacity + SLACK))


def _limit(spec: QueueSpec, capacity: tuple[float, ...]) -> float:
    """Largest denominator under which every burst of ``spec`` fits its bound."""
    lim = math.inf
    for c, p in zip(capacity, spec.admission_peak):
        if p > 0.0:
            r = c / p
            if r < lim:
                lim = r
    return lim


@dataclass
class AdmissionState:
    """Class membership plus the commitments the admission checks depend on.

    The state is single-writer: the engine mutates it only at scheduling
    epochs.  ``allow_soft=False`` yields the no-soft-class variant, where
    queues that would be Soft are placed in Elastic instead.
    """

    cluster: ClusterConfig
    allow_soft: bool = True
    hard: set = field(default_factory=set)
    soft: set = field(default_factory=set)
    elastic: set = field(default_factory=set)
    rejected: set = field(default_factory=set)
    specs: dict = field(default_factory=dict)
    classes: dict = field(default_factory=dict)
    timeline: CommittedTimeline = None
    _limits: dict = field(default_factory=dict)
    _guard: float = math.inf
    _cap: tuple = ()
    _admitted: int = 0

    def __post_init__(self):
        if self.timeline is None:
            self.timeline = CommittedTimeline(self.cluster.k)
        self._cap = tuple(float(c) for c in self.cluster.capacity)

    @property
    def admitted_count(self) -> int:
        return self._admitted

    def denominator(self) -> int:
        """Queue count a newcomer would see: ``max(|H|+|S|+|E|+1, n_min)``."""
        n = self._admitted + 1
        return n if n > self.cluster.n_min else self.cluster.n_min

    @property
    def guard(self) -> float:
        return self._guard

    def limit_of(self, spec: QueueSpec) -> float:
        return _limit(spec, self._cap)

    def class_of(self, qid: str) -> Optional[QueueClass]:
        return self.classes.get(qid)

    def _reject(self, spec: QueueSpec) -> None:
        qid = spec.id
        self.specs[qid] = spec
        self.classes[qid] = REJECTED
        self.rejected.add(qid)

    def _record(self, spec: QueueSpec, cls: QueueClass, limit: float) -> None:
        if cls is REJECTED:
            self._reject(spec)
            return
        qid = spec.id
        self.specs[qid] = spec
        self.classes[qid] = cls
        if cls is HARD:
            self.hard.add(qid)
            self.timeline.add(
                qid, spec.arrivals, spec.arrivals + spec.windows, spec.demands / spec.windows[:, None]
            )
        elif cls is SOFT:
            self.soft.add(qid)
        else:
            self.elastic.add(qid)
        self._admitted += 1
        if cls >= SOFT:
            self._limits[qid] = limit
            if limit < self._guard:
                self._guard = limit

    def release(self, qid: str) -> Optional[QueueClass]:
        """Remove an exiting queue and free its commitments."""
        cls = self.classes.pop(qid, None)
        if cls is None:
            return None
        if cls is not REJECTED:
            self._admitted -= 1
        for s in (self.hard, self.soft, self.elastic, self.rejected):
            s.discard(qid)
        self.specs.pop(qid, None)
        self.timeline.remove(qid)
        if self._limits.pop(qid, None) is not None:
            self._guard = min(self._limits.values(), default=math.inf)
        return cls

    def check_invariants(self) -> None:
        sets = [self.hard, self.soft, self.elastic, self.rejected]
        total = sum(len(s) for s in sets)
        if len(set().union(*sets)) != total:
            raise InvariantViolation("admission classes overlap")
        if any(not self.specs[q].is_lq for q in self.hard | self.soft):
            raise InvariantViolation("a guaranteed class holds a TQ")
        if np.any(self.timeline.peak() > self.cluster.capacity + SLACK):
            raise InvariantViolation("committed hard rate exceeds capacity")


def _cluster(state: AdmissionState, cluster: Optional[ClusterConfig]) -> ClusterConfig:
    return state.cluster if cluster is None else cluster


def fair_share_bound(
    spec: QueueSpec, n: int, state: AdmissionState, cluster: Optional[ClusterConfig] = None
) -> np.ndarray:
    """Cumulative fair share ``C * interval_n / D`` of burst ``n`` (resource-seconds)."""
    cluster = _cluster(state, cluster)
    if not spec.is_lq:
        raise MalformedSpecError(f"{spec.id} is not an LQ")
    interval = float(spec.intervals[n])
    if not interval > 0:
        raise MalformedSpecError(f"{spec.id}: burst {n} has a nonpositive interval")
    return cluster.capacity * interval / state.denominator()


def check_safety(candidate: QueueSpec, state: AdmissionState, cluster: Optional[ClusterConfig] = None) -> bool:
    """Admitting one more queue keeps every Hard/Soft burst within its bound."""
    return state.denominator() <= state.guard


def check_fairness(candidate: QueueSpec, state: AdmissionState, cluster: Optional[ClusterConfig] = None) -> bool:
    """Every burst of the candidate fits its own fair-share bound."""
    return state.denominator() <= state.limit_of(candidate)


def check_resource(candidate: QueueSpec, state: AdmissionState, cluster: Optional[ClusterConfig] = None) -> bool:
    """The candidate's hard rates ``d/t`` fit beside existing commitments."""
    cluster = _cluster(state, cluster)
    rates = candidate.demands / candidate.windows[:, None]
    return state.timeline.fits(
        candidate.arrivals, candidate.arrivals + candidate.windows, rates, cluster.capacity
    )


def admit_lq(
    candidate: QueueSpec, state: AdmissionState, cluster: Optional[ClusterConfig] = None
) -> tuple[QueueClass, AdmissionState]:
    if not candidate.is_lq:
        raise MalformedSpecError(f"{candidate.id} is not an LQ")
    if candidate.id in state.classes:
        raise StructuralError(f"duplicate queue id {candidate.id}")
    d = state.denominator()
    if d > state._guard:
        state._reject(candidate)
        return REJECTED, state
    limit = state.limit_of(candidate)
    if d > limit:
        cls = ELASTIC
    elif check_resource(candidate, state, cluster):
        cls = HARD
    elif state.allow_soft:
        cls = SOFT
    else:
        cls = ELASTIC
    state._record(candidate, cls, limit)
    return cls, state


def admit_tq(
    candidate: QueueSpec, state: AdmissionState, cluster: Optional[ClusterConfig] = None
) -> tuple[QueueClass, AdmissionState]:
    if candidate.id in state.classes:
        raise StructuralError(f"duplicate queue id {candidate.id}")
    cls = ELASTIC if state.denominator() <= state._guard else REJECTED
    state._record(candidate, cls, math.inf)
    return cls, state


def admit(candidate: QueueSpec, state: AdmissionState, cluster: Optional[ClusterConfig] = None):
    # Once D exceeds the guard every newcomer, LQ or TQ, is rejected.
    if state._admitted >= state._guard and candidate.id not in state.classes:
        state._reject(candidate)
        return REJECTED, state
    if candidate.is_lq:
        return admit_lq(candidate, state, cluster)
    return admit_tq(candidate, state, cluster)


def resubmit(candidate: QueueSpec, state: AdmissionState, cluster: Optional[ClusterConfig] = None):
    """Retry a previously rejected queue against the current state."""
    if candidate.id in state.rejected:
        state.rejected.discard(candidate.id)
        state.classes.pop(candidate.id, None)
        state.specs.pop(candidate.id, None)
    return admit(candidate, state, cluster)

"""Domain types and resource-vector arithmetic.

Resource vectors are plain float64 numpy arrays of fixed length K.  Rates
(resource units per second) and cumulative demands (resource-seconds) share
the representation; which one a vector holds is fixed by context.
"""
from __future__ import annotations

import enum
import graphlib
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Optional, Sequence

import numpy as np

SLACK = 1e-9

ResourceVector = np.ndarray


class InvalidConfigError(ValueError):
    pass


class StructuralError(ValueError):
    """Shape or identity mismatch between otherwise valid objects."""


class DimensionError(StructuralError):
    pass


class MalformedSpecError(ValueError):
    pass


class InvariantViolation(RuntimeError):
    pass


def as_vector(values: Iterable[float], k: Optional[int] = None) -> ResourceVector:
    """Validate and freeze a resource vector."""
    v = np.array(values, dtype=np.float64).reshape(-1)
    if k is not None and v.shape[0] != k:
        raise DimensionError(f"expected {k} resources, got {v.shape[0]}")
    if not np.all(np.isfinite(v)):
        raise MalformedSpecError(f"non-finite resource vector {v.tolist()}")
    if np.any(v < 0):
        raise MalformedSpecError(f"negative resource vector {v.tolist()}")
    v.setflags(write=False)
    return v


def zeros(k: int) -> ResourceVector:
    return np.zeros(k, dtype=np.float64)


def _check_dims(a: ResourceVector, b: ResourceVector) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"dimension mismatch {a.shape} vs {b.shape}")


def dominant_share(v: ResourceVector, capacity: ResourceVector) -> float:
    """Largest per-resource fraction of capacity held by ``v``."""
    capacity = np.asarray(capacity, dtype=np.float64)
    if np.any(capacity <= 0):
        raise InvalidConfigError("capacity must be strictly positive")
    v = np.asarray(v, dtype=np.float64)
    _check_dims(v, capacity)
    if not v.any():
        return 0.0
    return float(np.max(v / capacity))


def vec_add(a: ResourceVector, b: ResourceVector) -> ResourceVector:
    _check_dims(a, b)
    return a + b


def vec_sub(a: ResourceVector, b: ResourceVector) -> tuple[ResourceVector, bool]:
    """Componentwise ``a - b`` floored at zero, plus an underflow flag."""
    _check_dims(a, b)
    diff = a - b
    underflow = bool(np.any(diff < -SLACK))
    return np.maximum(diff, 0.0), underflow


def vec_scale(a: ResourceVector, s: float) -> ResourceVector:
    if s < 0:
        raise ValueError("scale factor must be nonnegative")
    return a * s


def vec_leq(a: ResourceVector, b: ResourceVector, slack: float = 0.0) -> bool:
    """Componentwise partial order; incomparable pairs are not <=."""
    _check_dims(a, b)
    return bool(np.all(a <= b + slack))


@dataclass(frozen=True, eq=False)
class ClusterConfig:
    capacity: ResourceVector
    resource_names: tuple[str, ...] = ()
    n_min: int = 1
    tick_seconds: float = 1.0

    def __post_init__(self):
        cap = np.array(self.capacity, dtype=np.float64).reshape(-1)
        if cap.size == 0 or np.any(~np.isfinite(cap)) or np.any(cap <= 0):
            raise InvalidConfigError(f"capacity must be strictly positive, got {cap.tolist()}")
        cap.setflags(write=False)
        object.__setattr__(self, "capacity", cap)
        names = tuple(self.resource_names) or tuple(f"r{k}" for k in range(cap.size))
        if len(names) != cap.size:
            raise DimensionError("resource_names length does not match capacity")
        object.__setattr__(self, "resource_names", names)
        if int(self.n_min) < 1:
            raise InvalidConfigError("n_min must be >= 1")
        object.__setattr__(self, "n_min", int(self.n_min))
        if not self.tick_seconds > 0:
            raise InvalidConfigError("tick_seconds must be positive")

    @property
    def k(self) -> int:
        return self.capacity.shape[0]


@dataclass(frozen=True, eq=False)
class StageSpec:
    task_count: int
    task_demand: ResourceVector
    task_duration: float

    def __post_init__(self):
        if int(self.task_count) < 1:
            raise MalformedSpecError("task_count must be a positive integer")
        object.__setattr__(self, "task_count", int(self.task_count))
        object.__setattr__(self, "task_demand", as_vector(self.task_demand))
        if not self.task_duration > 0:
            raise MalformedSpecError("task_duration must be positive")
        object.__setattr__(self, "task_duration", float(self.task_duration))

    @property
    def work(self) -> ResourceVector:
        """Resource-seconds consumed by all tasks of the stage."""
        return self.task_demand * (self.task_count * self.task_duration)


@dataclass(frozen=True, eq=False)
class JobSpec:
    id: str
    stages: tuple[StageSpec, ...]
    stage_dependencies: tuple[tuple[int, int], ...] = ()
    queue: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "stages", tuple(self.stages))
        deps = tuple((int(a), int(b)) for a, b in self.stage_dependencies)
        object.__setattr__(self, "stage_dependencies", deps)
        if not self.stages:
            raise MalformedSpecError(f"job {self.id}: no stages")
        n = len(self.stages)
        for a, b in deps:
            if not (0 <= a < n and 0 <= b < n) or a == b:
                raise MalformedSpecError(f"job {self.id}: bad dependency edge ({a}, {b})")
        k = self.stages[0].task_demand.shape[0]
        if any(s.task_demand.shape[0] != k for s in self.stages):
            raise DimensionError(f"job {self.id}: stages disagree on resource count")
        ts = graphlib.TopologicalSorter({i: set() for i in range(n)})
        for a, b in deps:
            ts.add(b, a)
        try:
            order = tuple(ts.static_order())
        except graphlib.CycleError as exc:
            raise MalformedSpecError(f"job {self.id}: dependency cycle {exc.args[1]}") from None
        object.__setattr__(self, "_order", order)

    @cached_property
    def predecessors(self) -> tuple[tuple[int, ...], ...]:
        preds: list[list[int]] = [[] for _ in self.stages]
        for a, b in self.stage_dependencies:
            preds[b].append(a)
        return tuple(tuple(sorted(p)) for p in preds)

    @cached_property
    def successors(self) -> tuple[tuple[int, ...], ...]:
        succ: list[list[int]] = [[] for _ in self.stages]
        for a, b in self.stage_dependencies:
            succ[a].append(b)
        return tuple(tuple(sorted(s)) for s in succ)

    @property
    def topological_order(self) -> tuple[int, ...]:
        return self._order

    @property
    def k(self) -> int:
        return self.stages[0].task_demand.shape[0]

    @cached_property
    def work(self) -> ResourceVector:
        return np.sum([s.work for s in self.stages], axis=0)

    @cached_property
    def critical_path(self) -> float:
        """Shortest possible completion time with unlimited resources."""
        finish = [0.0] * len(self.stages)
        for i in self._order:
            start = max((finish[p] for p in self.predecessors[i]), default=0.0)
            finish[i] = start + self.stages[i].task_duration
        return max(finish)


class QueueKind(str, enum.Enum):
    LQ = "LQ"
    TQ = "TQ"


@dataclass(frozen=True, eq=False)
class BurstSpec:
    arrival: float
    deadline_window: float
    demand: ResourceVector
    jobs: tuple[JobSpec, ...] = ()

    def __post_init__(self):
        if not self.deadline_window > 0:
            raise MalformedSpecError("deadline window must be positive")
        object.__setattr__(self, "demand", as_vector(self.demand))
        object.__setattr__(self, "jobs", tuple(self.jobs))

    @property
    def deadline(self) -> float:
        return self.arrival + self.deadline_window

    @property
    def actual_demand(self) -> ResourceVector:
        if not self.jobs:
            return self.demand
        return np.sum([j.work for j in self.jobs], axis=0)

    def is_consistent(self, rtol: float = 1e-6) -> bool:
        """Declared demand matches the work of the realizing jobs."""
        if not self.jobs:
            return True
        return bool(np.allclose(self.actual_demand, self.demand, rtol=rtol, atol=1e-9))


@dataclass(frozen=True, eq=False)
class DemandDistribution:
    """Per-resource marginals of a stochastic burst demand.

    Either ``mean``/``std`` (normal truncated at zero) or ``samples`` (an
    empirical set, one row per observed burst) must be given.
    """

    mean: Optional[ResourceVector] = None
    std: Optional[ResourceVector] = None
    samples: Optional[np.ndarray] = None
    correlation: str = "independent"

    def __post_init__(self):
        if self.correlation not in ("independent", "perfect"):
            raise MalformedSpecError(f"unknown correlation mode {self.correlation!r}")
        if self.samples is not None:
            s = np.atleast_2d(np.asarray(self.samples, dtype=np.float64))
            if s.shape[0] == 0:
                raise MalformedSpecError("empirical sample set is empty")
            object.__setattr__(self, "samples", s)
            return
        if self.mean is None:
            raise MalformedSpecError("need mean/std or samples")
        mean = as_vector(self.mean)
        std = as_vector(self.std if self.std is not None else np.zeros_like(mean), mean.shape[0])
        if np.any(mean <= 0):
            raise MalformedSpecError("distribution means must be positive")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)

    @property
    def k(self) -> int:
        return self.samples.shape[1] if self.samples is not None else self.mean.shape[0]


@dataclass(frozen=True, eq=False)
class QueueSpec:
    """A latency-sensitive (LQ) or throughput-sensitive (TQ) queue.

    LQ bursts are stored column-wise (``arrivals``, ``windows``, ``demands``)
    so that long burst series stay cheap; ``bursts`` materializes them.
    ``period`` is the accounting interval of the final burst; without it the
    final burst's deadline window is used.
    """

    id: str
    kind: QueueKind
    arrivals: np.ndarray = field(default_factory=lambda: np.zeros(0))
    windows: np.ndarray = field(default_factory=lambda: np.zeros(0))
    demands: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    burst_jobs: tuple[tuple[JobSpec, ...], ...] = ()
    jobs: tuple[JobSpec, ...] = ()
    sla_fraction: float = 1.0
    period: Optional[float] = None
    arrival: Optional[float] = None
    demand_distribution: Optional[DemandDistribution] = None

    def __post_init__(self):
        kind = QueueKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind is QueueKind.TQ:
            object.__setattr__(self, "jobs", tuple(self.jobs))
            if not self.jobs:
                raise MalformedSpecError(f"TQ {self.id}: no jobs")
            return
        arr = np.asarray(self.arrivals, dtype=np.float64).reshape(-1)
        win = np.asarray(self.windows, dtype=np.float64).reshape(-1)
        dem = np.atleast_2d(np.asarray(self.demands, dtype=np.float64))
        if arr.size == 0:
            raise MalformedSpecError(f"LQ {self.id}: no bursts")
        if win.shape != arr.shape or dem.shape[0] != arr.size:
            raise DimensionError(f"LQ {self.id}: burst columns disagree in length")
        if np.any(win <= 0):
            raise MalformedSpecError(f"LQ {self.id}: deadline windows must be positive")
        if np.any(dem < 0) or not np.all(np.isfinite(dem)):
            raise MalformedSpecError(f"LQ {self.id}: demands must be finite and nonnegative")
        if arr.size > 1:
            if np.any(np.diff(arr) <= 0):
                raise MalformedSpecError(f"LQ {self.id}: arrivals must be strictly increasing")
            if np.any(arr[:-1] + win[:-1] > arr[1:] + SLACK):
                raise MalformedSpecError(f"LQ {self.id}: a deadline passes the next arrival")
        if not 0 < self.sla_fraction <= 1:
            raise MalformedSpecError(f"LQ {self.id}: sla_fraction must lie in (0, 1]")
        if self.period is not None and not self.period >= win[-1]:
            raise MalformedSpecError(f"LQ {self.id}: period shorter than the last deadline window")
        jobs = tuple(tuple(b) for b in self.burst_jobs)
        if jobs and len(jobs) != arr.size:
            raise DimensionError(f"LQ {self.id}: burst_jobs length does not match bursts")
        for a in (arr, win, dem):
            a.setflags(write=False)
        object.__setattr__(self, "arrivals", arr)
        object.__setattr__(self, "windows", win)
        object.__setattr__(self, "demands", dem)
        object.__setattr__(self, "burst_jobs", jobs)

    @classmethod
    def lq(cls, id: str, bursts: Sequence[BurstSpec], **kw) -> "QueueSpec":
        if not bursts:
            raise MalformedSpecError(f"LQ {id}: no bursts")
        return cls(
            id=id,
            kind=QueueKind.LQ,
            arrivals=np.array([b.arrival for b in bursts]),
            windows=np.array([b.deadline_window for b in bursts]),
            demands=np.array([b.demand for b in bursts]),
            burst_jobs=tuple(b.jobs for b in bursts) if any(b.jobs for b in bursts) else (),
            **kw,
        )

    @classmethod
    def tq(cls, id: str, jobs: Sequence[JobSpec], arrival: Optional[float] = None) -> "QueueSpec":
        return cls(id=id, kind=QueueKind.TQ, jobs=tuple(jobs), arrival=arrival)

    @cached_property
    def is_lq(self) -> bool:
        return self.kind is QueueKind.LQ

    @property
    def k(self) -> int:
        if self.is_lq:
            return self.demands.shape[1]
        return self.jobs[0].k

    @property
    def n_bursts(self) -> int:
        return self.arrivals.size if self.is_lq else 0

    @cached_property
    def bursts(self) -> tuple[BurstSpec, ...]:
        if not self.is_lq:
            return ()
        jobs = self.burst_jobs or ((),) * self.arrivals.size
        return tuple(
            BurstSpec(float(a), float(w), d, j)
            for a, w, d, j in zip(self.arrivals, self.windows, self.demands, jobs)
        )

    @cached_property
    def intervals(self) -> np.ndarray:
        """Accounting interval of every burst: time to the next arrival."""
        last = self.period if self.period is not None else self.windows[-1]
        iv = np.append(np.diff(self.arrivals), last)
        iv.setflags(write=False)
        return iv

    @cached_property
    def peak_rate(self) -> tuple[float, ...]:
        """Per-resource max over bursts of demand / accounting interval."""
        if not self.is_lq:
            return ()
        return tuple(float(x) for x in (self.demands / self.intervals[:, None]).max(axis=0))

    @cached_property
    def admission_peak(self) -> tuple[float, ...]:
        """``peak_rate`` with the comparison slack folded in.

        Burst n passes ``d_k <= C_k * interval / D + SLACK`` exactly when
        ``D <= C_k / admission_peak_k``, which lets the admission checks run
        in O(K) per queue regardless of the burst count.
        """
        if not self.is_lq:
            return ()
        slacked = np.maximum(self.demands - SLACK, 0.0) / self.intervals[:, None]
        return tuple(float(x) for x in slacked.max(axis=0))

    @property
    def admission_time(self) -> float:
        if self.arrival is not None:
            return float(self.arrival)
        return float(self.arrivals[0]) if self.is_lq else 0.0

    @property
    def exit_floor(self) -> float:
        """Earliest exit time: the end of the final accounting interval."""
        if not self.is_lq:
            return self.admission_time
        return float(self.arrivals[-1] + self.intervals[-1])

    def with_bursts(self, demands=None, windows=None, burst_jobs=None) -> "QueueSpec":
        """Copy with replaced burst columns (used for misreports/perturbations)."""
        return QueueSpec(
            id=self.id,
            kind=self.kind,
            arrivals=self.arrivals,
            windows=self.windows if windows is None else windows,
            demands=self.demands if demands is None else demands,
            burst_jobs=self.burst_jobs if burst_jobs is None else burst_jobs,
            sla_fraction=self.sla_fraction,
            period=self.period,
            arrival=self.arrival,
            demand_distribution=self.demand_distribution,
        )

"""Per-epoch share levels for BoPF and the baseline policies.

Every policy maps per-queue *demands* (rate vectors a queue could consume
right now) to per-queue *shares* (rate upper bounds).  Queues consume
resources in fixed proportions, so a share ``s`` against demand ``D`` is
usable only up to ``lam * D`` with ``lam = min(1, min_k s_k / D_k)``.
"""
from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np

from .core import SLACK, InvariantViolation

POLICIES = ("bopf", "drf", "sp", "mbvt", "nbopf")

# Relative threshold below which leftovers are treated as exactly zero.
_REL_TOL = 1e-12

# Tier ranks used by the engine to order task placement.
TIER_HARD = 3
TIER_LATE = 2
TIER_SOFT = 1
TIER_ELASTIC = 0


@dataclass
class ShareLevels:
    shares: dict[str, np.ndarray]
    epoch: float = 0.0
    policy: str = "drf"
    tiers: dict[str, int] = field(default_factory=dict)

    def total(self, k: Optional[int] = None) -> np.ndarray:
        if not self.shares:
            return np.zeros(k or 0)
        return np.sum(list(self.shares.values()), axis=0)

    def __getitem__(self, qid: str) -> np.ndarray:
        return self.shares[qid]


def _progressive_fill(dirs: np.ndarray, caps: np.ndarray, capacity: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Exact progressive filling.

    ``dirs[i]`` is queue i's consumption per unit of dominant share and
    ``caps[i]`` the dominant share at which it is satiated (may be inf).
    All unfrozen queues grow at the same rate; a queue freezes when it hits
    its cap or when any resource it uses saturates.  Returns the dominant
    share levels and a mask of queues that stopped at their cap.
    """
    n = dirs.shape[0]
    x = np.zeros(n)
    capped = np.zeros(n, dtype=bool)
    if n == 0:
        return x, capped
    used = np.zeros_like(capacity)
    tol = np.maximum(capacity, 1.0) * _REL_TOL
    active = (caps > 0) & dirs.any(axis=1)
    capped[~active] = True
    saturated = capacity - used <= tol
    active &= ~(dirs[:, saturated] > 0).any(axis=1)
    while active.any():
        rate = dirs[active].sum(axis=0)
        rem = capacity - used
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            by_res = np.where(rate > 0, rem / rate, np.inf)
        step_res = by_res.min()
        step_cap = (caps[active] - x[active]).min()
        step = min(step_res, step_cap)
        x[active] += step
        used = used + step * rate
        hit_cap = active & np.isfinite(caps) & (caps - x <= np.maximum(caps, 1.0) * _REL_TOL)
        x[hit_cap] = caps[hit_cap]
        capped |= hit_cap
        saturated = (capacity - used <= tol) | ((by_res <= step) & (rate > 0))
        frozen = active & (dirs[:, saturated] > 0).any(axis=1)
        active &= ~(hit_cap | frozen)
    return x, capped


def drf_fill(
    demands: Mapping[str, np.ndarray],
    capacity: np.ndarray,
    *,
    profiles: Optional[Mapping[str, np.ndarray]] = None,
    scale: Optional[np.ndarray] = None,
    epoch: float = 0.0,
    policy: str = "drf",
) -> ShareLevels:
    """Progressive-filling DRF over ``capacity``.

    Each queue grows along its demand vector until satiated, or along
    ``profiles[q]`` with unbounded appetite when a profile is supplied and
    the queue has no entry in ``demands``.  Dominant shares are measured
    against ``scale`` (the full cluster capacity when filling a leftover);
    it defaults to ``capacity``.  Ties are resolved by processing queues in
    ascending id order, which only matters for float rounding.
    """
    capacity = np.maximum(np.asarray(capacity, dtype=np.float64), 0.0)
    if scale is None:
        scale = np.where(capacity > 0, capacity, 1.0)
    ids = sorted(set(demands) | set(profiles or {}))
    k = capacity.shape[0]
    dirs = np.zeros((len(ids), k))
    caps = np.zeros(len(ids))
    for i, q in enumerate(ids):
        d = demands.get(q)
        if d is None:
            v = np.asarray(profiles[q], dtype=np.float64)
            caps[i] = math.inf if v.any() else 0.0
        else:
            v = np.asarray(d, dtype=np.float64)
            caps[i] = float(np.max(v / scale)) if v.any() else 0.0
        ds = float(np.max(v / scale)) if v.any() else 0.0
        if ds > 0:
            dirs[i] = v / ds
    x, capped = _progressive_fill(dirs, caps, capacity)
    shares = {}
    for i, q in enumerate(ids):
        if capped[i] and demands.get(q) is not None:
            shares[q] = np.array(demands[q], dtype=np.float64)
        else:
            shares[q] = dirs[i] * x[i]
    return ShareLevels(shares, epoch, policy, {q: TIER_ELASTIC for q in ids})


def usable(share: np.ndarray, demand: np.ndarray) -> np.ndarray:
    """Portion of ``share`` a fixed-proportion consumer with ``demand`` can use."""
    top = float(demand.max()) if demand.size else 0.0
    if not top > 0:
        return np.zeros_like(share)
    # Components negligible next to the dominant one cannot bind: their share
    # may underflow to zero even though the queue is not actually starved.
    pos = demand > top * _REL_TOL
    with np.errstate(over="ignore"):
        lam = min(1.0, float(np.min(share[pos] / demand[pos])))
    return demand * max(lam, 0.0)


def spare_step(
    shares: dict[str, np.ndarray],
    demands: Mapping[str, np.ndarray],
    capacity: np.ndarray,
) -> dict[str, np.ndarray]:
    """Re-offer unused capacity to queues with unmet demand, once.

    Shares an owner cannot use are trimmed to their usable part, the idle
    pool is computed, and the pool is filled in a single pass of
    ``drf_fill`` over the residual demands of every unsatisfied queue,
    regardless of class.  Queues with nothing to add keep their share
    object untouched.
    """
    k = capacity.shape[0]
    tol = capacity * 1e-9
    use = {}
    for q, s in shares.items():
        d = demands.get(q)
        use[q] = usable(s, d) if d is not None else np.zeros(k)
    pool = capacity - (np.sum(list(use.values()), axis=0) if use else np.zeros(k))
    pool = np.where(pool <= tol, 0.0, pool)
    residual = {}
    for q, d in demands.items():
        r = d - use.get(q, 0.0)
        r = np.where(r <= np.maximum(d, 1.0) * 1e-9, 0.0, r)
        if r.any():
            residual[q] = r
    out = dict(shares)
    if not residual or not pool.any():
        return out
    for q, s in shares.items():
        if np.any(s - use[q] > tol):
            out[q] = use[q]
    extra = drf_fill(residual, pool, scale=capacity).shares
    for q, e in extra.items():
        if e.any():
            out[q] = out.get(q, np.zeros(k)) + e
    return out


def strict_priority(
    lq_demands: Mapping[str, np.ndarray],
    tq_demands: Mapping[str, np.ndarray],
    capacity: np.ndarray,
    epoch: float = 0.0,
) -> ShareLevels:
    """LQs first (DRF among them), TQs share what remains via DRF."""
    capacity = np.asarray(capacity, dtype=np.float64)
    lq = drf_fill(lq_demands, capacity).shares
    left = capacity - (np.sum(list(lq.values()), axis=0) if lq else 0.0)
    left = np.maximum(left, 0.0)
    tq = drf_fill(tq_demands, left, scale=capacity).shares
    tiers = {q: TIER_HARD for q in lq} | {q: TIER_ELASTIC for q in tq}
    return ShareLevels({**lq, **tq}, epoch, "sp", tiers)


@dataclass(frozen=True)
class ActiveBurst:
    """Runtime view of an LQ burst handed to ``bopf_allocate``.

    ``delivered`` is the cumulative allocation credited to the burst so far
    (resource-seconds).  ``allow_late`` keeps a Hard burst prioritized past its
    deadline until ``delivered`` reaches ``demand``; only the task-granular
    engine sets it, to absorb non-preemption delays.
    """

    queue_id: str
    arrival: float
    window: float
    demand: np.ndarray
    delivered: np.ndarray
    allow_late: bool = False

    @property
    def deadline(self) -> float:
        return self.arrival + self.window

    @property
    def rate(self) -> np.ndarray:
        return self.demand / self.window

    @property
    def satisfied(self) -> bool:
        return bool(np.all(self.delivered >= self.demand - SLACK))


def _srpt_key(b: ActiveBurst, leftover: np.ndarray) -> tuple:
    rem = np.maximum(b.demand - b.delivered, 0.0)
    pos = rem > 0
    if not pos.any():
        t = 0.0
    elif np.any(leftover[pos] <= 0):
        t = math.inf
    else:
        t = float(np.max(rem[pos] / leftover[pos]))
    return (t, b.deadline, b.queue_id)


def bopf_allocate(
    state,
    active_bursts: Mapping[str, ActiveBurst],
    demands: Mapping[str, np.ndarray],
    capacity: np.ndarray,
    now: float,
    *,
    spare: bool = True,
    policy: str = "bopf",
) -> ShareLevels:
    """Hard provisioning, then SRPT among Soft, then DRF among Elastic, then spare.

    ``state`` is anything exposing ``hard`` and ``soft`` id sets, normally an
    ``AdmissionState``.  ``demands`` holds the current demand of every queue with work (TQs,
    Elastic LQs, and Hard/Soft LQs alike).  A Hard or Soft LQ is served in
    its guaranteed tier only while its burst in ``active_bursts`` is inside
    the deadline window and short of its target demand; otherwise it joins
    the Elastic tier for the rest of that burst.  Guaranteed shares are cut
    to the part the queue's current demand can use before the lower tiers
    are filled, so a report that is not proportional to the real work buys
    nothing beyond its proportional core.
    """
    capacity = np.asarray(capacity, dtype=np.float64)
    hard, soft = state.hard, state.soft
    k = capacity.shape[0]
    shares: dict[str, np.ndarray] = {}
    tiers: dict[str, int] = {}
    zero = np.zeros(k)

    committed = zero.copy()
    held = zero.copy()
    late = []
    for q in sorted(hard):
        b = active_bursts.get(q)
        if b is None or q not in demands:
            continue
        if now < b.deadline - SLACK:
            # Only the part of the guarantee the queue can consume right now is
            # held; the rest stays in the leftover for the lower tiers.
            shares[q] = usable(b.rate, demands[q])
            tiers[q] = TIER_HARD
            committed = committed + b.rate
            held = held + shares[q]
        elif b.allow_late and not b.satisfied:
            late.append(b)
    if np.any(committed > capacity * (1 + 1e-6) + SLACK):
        raise InvariantViolation(
            f"hard tier oversubscribed at t={now}: {committed.tolist()} > {capacity.tolist()}"
        )
    leftover = np.maximum(capacity - held, 0.0)
    for b in late:
        s = usable(np.minimum(b.rate, leftover), demands[b.queue_id])
        shares[b.queue_id] = s
        tiers[b.queue_id] = TIER_LATE
        leftover = np.maximum(leftover - s, 0.0)

    pending = [
        active_bursts[q]
        for q in sorted(soft)
        if q in active_bursts and q in demands
        and now < active_bursts[q].deadline - SLACK and not active_bursts[q].satisfied
    ]
    pending.sort(key=lambda b: _srpt_key(b, leftover))
    for b in pending:
        s = usable(leftover, demands[b.queue_id])
        shares[b.queue_id] = s
        tiers[b.queue_id] = TIER_SOFT
        leftover = np.maximum(leftover - s, 0.0)
        leftover = np.where(leftover <= capacity * _REL_TOL, 0.0, leftover)

    elastic = {q: d for q, d in demands.items() if q not in tiers}
    el = drf_fill(elastic, leftover, scale=capacity).shares
    shares.update(el)
    for q in el:
        tiers[q] = TIER_ELASTIC
    if spare:
        shares = spare_step(shares, demands, capacity)
    return ShareLevels(shares, now, policy, tiers)


@dataclass
class MbvtState:
    """Virtual-time bookkeeping for multi-resource borrowed virtual time.

    ``actual[q]`` (A) advances by the dominant share the queue consumes per
    second.  While an LQ has an active burst its effective virtual time is
    ``A - warp``; otherwise ``E = A``.  A queue that becomes active is lifted
    to the scheduler virtual time (the minimum A over active queues) so idle
    periods cannot be banked.
    """

    actual: dict[str, float] = field(default_factory=dict)
    warp: dict[str, float] = field(default_factory=dict)
    warped: set = field(default_factory=set)
    active: set = field(default_factory=set)

    def effective(self, q: str) -> float:
        a = self.actual.get(q, 0.0)
        return a - self.warp.get(q, 0.0) if q in self.warped else a

    def scheduler_virtual_time(self) -> float:
        return min((self.actual[q] for q in self.active if q in self.actual), default=0.0)

    def activate(self, q: str, warp: Optional[float] = None) -> None:
        if q in self.active:
            if warp is not None:
                self.warp[q] = warp
                self.warped.add(q)
            return
        svt = self.scheduler_virtual_time()
        self.actual[q] = max(self.actual.get(q, 0.0), svt) if self.active else self.actual.get(q, 0.0)
        self.active.add(q)
        if warp is not None:
            self.warp[q] = warp
            self.warped.add(q)

    def deactivate(self, q: str) -> None:
        self.active.discard(q)
        self.warped.discard(q)

    def unwarp(self, q: str) -> None:
        self.warped.discard(q)

    def advance(self, usage: Mapping[str, np.ndarray], capacity: np.ndarray, dt: float) -> None:
        if dt <= 0:
            return
        for q, u in usage.items():
            if q in self.actual:
                self.actual[q] += float(np.max(u / capacity)) * dt


def mbvt_allocate(
    mbvt: MbvtState,
    demands: Mapping[str, np.ndarray],
    capacity: np.ndarray,
    now: float,
    tol: float = 1e-9,
) -> tuple[ShareLevels, MbvtState]:
    """Queues tied at the minimum effective virtual time split capacity by DRF.

    Everyone else shares the remainder by DRF (spare), so the policy stays
    work conserving.  Returns a copy of the state with newly active queues
    registered; virtual-time advancement is the caller's job because it
    depends on what was actually consumed.
    """
    capacity = np.asarray(capacity, dtype=np.float64)
    state = copy.deepcopy(mbvt)
    live = {q: d for q, d in demands.items() if d.any()}
    for q in live:
        state.activate(q)
    if not live:
        return ShareLevels({q: np.zeros_like(capacity) for q in demands}, now, "mbvt"), state
    e_min = min(state.effective(q) for q in live)
    group = {q: d for q, d in live.items() if state.effective(q) <= e_min + tol}
    first = drf_fill(group, capacity).shares
    left = np.maximum(capacity - np.sum(list(first.values()), axis=0), 0.0)
    rest = drf_fill({q: d for q, d in demands.items() if q not in group}, left, scale=capacity).shares
    tiers = {q: TIER_HARD for q in group} | {q: TIER_ELASTIC for q in rest}
    return ShareLevels({**first, **rest}, now, "mbvt", tiers), state


def nbopf_allocate(state, active_bursts, demands, capacity, now, *, spare=True) -> ShareLevels:
    """BoPF without a Soft class.

    The difference lives in admission (``AdmissionState(allow_soft=False)``
    never populates the Soft set); given that state the allocation rule is
    the same, so ``soft`` is expected to be empty.
    """
    return bopf_allocate(state, active_bursts, demands, capacity, now, spare=spare, policy="nbopf")

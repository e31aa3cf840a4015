import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bopf.admission import (
    AdmissionState,
    CommittedTimeline,
    QueueClass,
    admit,
    admit_lq,
    admit_tq,
    check_fairness,
    check_resource,
    check_safety,
    fair_share_bound,
    resubmit,
)
from bopf.core import SLACK, ClusterConfig, MalformedSpecError, QueueKind, QueueSpec, StructuralError

from conftest import one_task_job, periodic_lq, vec


def tq(qid):
    return QueueSpec.tq(qid, [one_task_job()])


def state_with(cluster, *queues):
    st_ = AdmissionState(cluster)
    for q in queues:
        admit(q, st_)
    return st_


class TestFairShareBound:
    def test_empty_state_uses_n_min(self, c10):
        q = periodic_lq("lq", (400, 300), 100, 50)
        np.testing.assert_allclose(fair_share_bound(q, 0, AdmissionState(c10)), [500, 500])

    def test_three_admitted(self, c10):
        st_ = state_with(c10, tq("a"), tq("b"), tq("c"))
        q = periodic_lq("lq", (400, 300), 100, 50)
        np.testing.assert_allclose(fair_share_bound(q, 0, st_), [250, 250])

    def test_degenerate_interval_rejected(self):
        with pytest.raises(MalformedSpecError):
            QueueSpec("lq", QueueKind.LQ, vec(0, 0), vec(1, 1), np.ones((2, 2)))

    def test_tq_has_no_bound(self, c10):
        with pytest.raises(MalformedSpecError):
            fair_share_bound(tq("t"), 0, AdmissionState(c10))


class TestSafety:
    def test_vacuous_when_nothing_guaranteed(self, c10):
        assert check_safety(tq("x"), AdmissionState(c10))

    def test_second_queue_keeps_bound(self, c10):
        st_ = state_with(c10, periodic_lq("h", (400, 300), 100, 50))
        assert st_.class_of("h") is QueueClass.HARD
        assert check_safety(tq("x"), st_)  # D = 2, bound 500 >= 400

    def test_third_queue_breaks_bound(self, c10):
        st_ = state_with(c10, periodic_lq("h", (400, 300), 100, 50), tq("x"))
        assert not check_safety(tq("y"), st_)  # D = 3, bound 333.3 < 400
        cls, _ = admit_tq(tq("y"), st_)
        assert cls is QueueClass.REJECTED


class TestFairness:
    def test_zero_demand(self, c10):
        assert check_fairness(periodic_lq("z", (0, 0), 100, 50), AdmissionState(c10))

    def test_within_bound(self, c10):
        assert check_fairness(periodic_lq("a", (400, 300), 100, 50), AdmissionState(c10))

    def test_one_component_over(self, c10):
        q = periodic_lq("a", (600, 100), 100, 50)
        assert not check_fairness(q, AdmissionState(c10))
        assert admit_lq(q, AdmissionState(c10))[0] is QueueClass.ELASTIC


class TestResource:
    def test_empty_timeline(self, c10):
        q = periodic_lq("a", (400, 300), 100, 50)
        assert check_resource(q, AdmissionState(c10))
        assert admit_lq(q, AdmissionState(c10))[0] is QueueClass.HARD

    def test_overlapping_commitment_goes_soft(self):
        cluster = ClusterConfig(vec(10, 10), n_min=1)
        st_ = state_with(cluster, periodic_lq("h", (250, 250), 100, 50, n=1))  # rate <5,5>
        cand = periodic_lq("c", (400, 300), 100, 50, n=1)  # rate <8,6>
        assert not check_resource(cand, st_)
        assert admit_lq(cand, st_)[0] is QueueClass.SOFT

    def test_disjoint_windows_fit(self):
        cluster = ClusterConfig(vec(10, 10), n_min=1)
        st_ = state_with(cluster, periodic_lq("h", (250, 250), 100, 50, n=1))
        cand = periodic_lq("c", (400, 300), 100, 50, n=1, start=50.0)
        assert check_resource(cand, st_)

    def test_no_soft_variant(self):
        cluster = ClusterConfig(vec(10, 10), n_min=1)
        st_ = AdmissionState(cluster, allow_soft=False)
        admit(periodic_lq("h", (250, 250), 100, 50, n=1), st_)
        assert admit_lq(periodic_lq("c", (400, 300), 100, 50, n=1), st_)[0] is QueueClass.ELASTIC


class TestAdmitLq:
    def test_zero_demand_is_hard(self, c10):
        assert admit_lq(periodic_lq("z", (0, 0), 100, 50), AdmissionState(c10))[0] is QueueClass.HARD

    def test_rejection_leaves_guarantees(self, c10):
        st_ = state_with(c10, periodic_lq("h", (400, 300), 100, 50), tq("x"))
        before = (set(st_.hard), set(st_.soft), set(st_.elastic), st_.timeline.peak().copy())
        cls, _ = admit_lq(periodic_lq("late", (10, 10), 100, 50), st_)
        assert cls is QueueClass.REJECTED
        assert (st_.hard, st_.soft, st_.elastic) == before[:3]
        np.testing.assert_array_equal(st_.timeline.peak(), before[3])

    def test_duplicate_id(self, c10):
        st_ = state_with(c10, tq("x"))
        with pytest.raises(StructuralError):
            admit(tq("x"), st_)

    def test_tq_to_admit_lq(self, c10):
        with pytest.raises(MalformedSpecError):
            admit_lq(tq("x"), AdmissionState(c10))

    def test_many_tqs_leave_timeline_alone(self, c10):
        st_ = AdmissionState(c10)
        for i in range(10_000):
            admit_tq(tq(f"t{i}"), st_)
        assert len(st_.classes) == 10_000
        assert len(st_.timeline) == 0 and st_.elastic == set(st_.classes)

    def test_release_and_resubmit(self, c10):
        st_ = state_with(c10, periodic_lq("h", (400, 300), 100, 50), tq("x"))
        assert admit(tq("y"), st_)[0] is QueueClass.REJECTED
        assert st_.release("x") is QueueClass.ELASTIC
        assert resubmit(tq("y"), st_)[0] is QueueClass.ELASTIC
        assert st_.release("h") is QueueClass.HARD
        assert math.isinf(st_.guard) and len(st_.timeline) == 0


class TestTimeline:
    def test_steps_and_value(self):
        tl = CommittedTimeline(1)
        tl.add("a", vec(0, 10), vec(5, 15), np.array([[2.0], [3.0]]))
        tl.add("b", vec(3), vec(12), np.array([[1.0]]))
        assert tl.value_at(4.0)[0] == 3.0
        assert tl.value_at(5.0)[0] == 1.0
        assert tl.value_at(11.0)[0] == 4.0
        assert tl.value_at(20.0)[0] == 0.0
        assert tl.peak()[0] == 4.0

    def test_fits_checks_every_breakpoint(self):
        tl = CommittedTimeline(1)
        tl.add("a", vec(10), vec(20), np.array([[6.0]]))
        assert tl.fits(vec(0), vec(10), np.array([[10.0]]), vec(10))
        assert not tl.fits(vec(0), vec(10.5), np.array([[5.0]]), vec(10))


lq_specs = st.builds(
    lambda d1, d2, period, frac, n, start: (d1, d2, period, frac, n, start),
    st.floats(0, 1200), st.floats(0, 1200), st.sampled_from([50.0, 100.0, 200.0]),
    st.floats(0.1, 1.0), st.integers(1, 4), st.sampled_from([0.0, 10.0, 25.0]),
)
arrival_seq = st.lists(st.one_of(st.none(), lq_specs), min_size=1, max_size=8)


def build(seq):
    out = []
    for i, s in enumerate(seq):
        if s is None:
            out.append(tq(f"q{i}"))
        else:
            d1, d2, period, frac, n, start = s
            out.append(periodic_lq(f"q{i}", (d1, d2), period, period * frac, n=n, start=start))
    return out


class TestAdmissionProperties:
    cluster = ClusterConfig(vec(10, 10), n_min=2)

    @given(arrival_seq)
    def test_guarantees_hold_under_current_denominator(self, seq):
        st_ = state_with(self.cluster, *build(seq))
        st_.check_invariants()
        d = max(st_.admitted_count, self.cluster.n_min)
        for qid in st_.hard | st_.soft:
            spec = st_.specs[qid]
            bound = self.cluster.capacity * spec.intervals[:, None] / d
            assert np.all(spec.demands <= bound + SLACK)

    @given(arrival_seq)
    def test_committed_rate_within_capacity(self, seq):
        st_ = state_with(self.cluster, *build(seq))
        assert np.all(st_.timeline.peak() <= self.cluster.capacity + 1e-9)

    @given(arrival_seq)
    def test_deterministic(self, seq):
        a = state_with(self.cluster, *build(seq)).classes
        b = state_with(self.cluster, *build(seq)).classes
        assert a == b

    @given(st.lists(st.one_of(st.none(), lq_specs), max_size=5), lq_specs, st.floats(1.0, 8.0))
    def test_inflating_demand_never_helps(self, prefix, cand, beta):
        base = build(prefix)
        d1, d2, period, frac, n, start = cand
        truthful = periodic_lq("cand", (d1, d2), period, period * frac, n=n, start=start)
        inflated = periodic_lq("cand", (d1 * beta, d2 * beta), period, period * frac, n=n, start=start)
        c_true = admit_lq(truthful, state_with(self.cluster, *base))[0]
        c_big = admit_lq(inflated, state_with(self.cluster, *base))[0]
        assert c_big <= c_true

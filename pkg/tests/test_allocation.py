from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bopf.admission import AdmissionState, QueueClass, admit
from bopf.allocation import (
    TIER_ELASTIC,
    TIER_HARD,
    TIER_SOFT,
    ActiveBurst,
    MbvtState,
    bopf_allocate,
    drf_fill,
    mbvt_allocate,
    nbopf_allocate,
    spare_step,
    strict_priority,
    usable,
)
from bopf.core import ClusterConfig, InvariantViolation
from bopf.proptest import random_instance, water_fill_oracle

from conftest import periodic_lq, vec

C = vec(10.0, 10.0)


def classes(hard=(), soft=()):
    return SimpleNamespace(hard=set(hard), soft=set(soft))


def burst(q, demand, window, arrival=0.0, delivered=None, **kw):
    d = np.asarray(demand, dtype=np.float64)
    return ActiveBurst(q, arrival, window, d, np.zeros_like(d) if delivered is None else np.asarray(delivered, float), **kw)


class TestDrfFill:
    def test_classic_two_queue(self):
        out = drf_fill({}, vec(9, 18), profiles={"a": vec(1, 4), "b": vec(3, 1)})
        np.testing.assert_allclose(out["a"], [3, 12])
        np.testing.assert_allclose(out["b"], [6, 2])

    def test_single_queue_demand_capped(self):
        np.testing.assert_array_equal(drf_fill({"a": vec(5, 5)}, C)["a"], [5, 5])

    def test_zero_demands(self):
        out = drf_fill({"a": vec(0, 0), "b": vec(0, 0)}, C)
        assert not out["a"].any() and not out["b"].any()

    def test_satiated_queue_frees_capacity(self):
        out = drf_fill({"a": vec(1, 1), "b": vec(20, 20)}, C)
        np.testing.assert_allclose(out["a"], [1, 1])
        np.testing.assert_allclose(out["b"], [9, 9])

    def test_scale_measures_against_full_cluster(self):
        out = drf_fill({"a": vec(10, 0), "b": vec(0, 10)}, vec(2, 4), scale=C)
        np.testing.assert_allclose(out["a"], [2, 0])
        np.testing.assert_allclose(out["b"], [0, 4])

    @given(st.integers(0, 10_000))
    def test_matches_water_filling_oracle(self, seed):
        demands, cap = random_instance(np.random.default_rng(seed))
        got = drf_fill(demands, cap).shares
        want = water_fill_oracle(demands, cap)
        for q in demands:
            assert abs(np.max(got[q] / cap) - np.max(want[q] / cap)) <= 1e-3

    @given(st.integers(0, 10_000))
    def test_unsatiated_queues_equalized(self, seed):
        demands, cap = random_instance(np.random.default_rng(seed))
        out = drf_fill(demands, cap).shares
        total = np.sum(list(out.values()), axis=0)
        assert np.all(total <= cap + 1e-6)
        saturated = total >= cap - 1e-6
        dom = {q: float(np.max(out[q] / cap)) for q in demands}
        for q, d in demands.items():
            if np.all(out[q] >= d - 1e-6):
                continue
            # A short queue is bottlenecked on some saturated resource where
            # nobody else holds a larger dominant share.
            assert any(
                dom[q] >= max(dom[p] for p in demands if demands[p][r] > 0) - 1e-6
                for r in np.flatnonzero(saturated & (d > 0))
            ), q


class TestStrictPriority:
    def test_full_lq_starves_tq(self):
        out = strict_priority({"lq": vec(10, 10)}, {"tq": vec(5, 5)}, C)
        np.testing.assert_array_equal(out["tq"], [0, 0])

    def test_idle_lq_reduces_to_drf(self):
        sp = strict_priority({}, {"a": vec(8, 2), "b": vec(2, 8)}, C)
        dr = drf_fill({"a": vec(8, 2), "b": vec(2, 8)}, C)
        for q in ("a", "b"):
            np.testing.assert_allclose(sp[q], dr[q])

    def test_lqs_over_capacity_split_by_drf(self):
        out = strict_priority({"x": vec(8, 8), "y": vec(8, 8)}, {"tq": vec(1, 1)}, C)
        np.testing.assert_allclose(out["x"], [5, 5])
        np.testing.assert_allclose(out["y"], [5, 5])
        np.testing.assert_allclose(out["tq"], [0, 0], atol=1e-12)


class TestBopfAllocate:
    def test_hard_rate_then_elastic(self):
        b = burst("lq", (400, 300), 50.0)
        out = bopf_allocate(classes(hard={"lq"}), {"lq": b}, {"lq": vec(8, 6), "tq": vec(10, 10)}, C, 10.0)
        np.testing.assert_allclose(out["lq"], [8, 6])
        want = drf_fill({"tq": vec(10, 10)}, vec(2, 4), scale=C)["tq"]
        np.testing.assert_allclose(out["tq"], want)
        assert out.tiers["lq"] == TIER_HARD and out.tiers["tq"] == TIER_ELASTIC

    def test_no_bursts_is_drf(self):
        demands = {"a": vec(8, 2), "b": vec(2, 8), "c": vec(3, 3)}
        out = bopf_allocate(classes(), {}, demands, C, 0.0)
        ref = drf_fill(demands, C)
        for q in demands:
            np.testing.assert_array_equal(out[q], ref[q])

    def test_srpt_among_soft(self):
        a = burst("a", (30, 30), 100.0)
        b = burst("b", (50, 50), 100.0)
        demands = {"a": vec(20, 20), "b": vec(20, 20)}
        out = bopf_allocate(classes(soft={"a", "b"}), {"a": a, "b": b}, demands, C, 1.0, spare=False)
        np.testing.assert_allclose(out["a"], [10, 10])
        np.testing.assert_allclose(out["b"], [0, 0])
        assert out.tiers["a"] == TIER_SOFT
        done = burst("a", (30, 30), 100.0, delivered=(30, 30))
        out = bopf_allocate(classes(soft={"a", "b"}), {"a": done, "b": b}, demands, C, 5.0, spare=False)
        np.testing.assert_allclose(out["b"], [10, 10])
        assert out.tiers["a"] == TIER_ELASTIC

    def test_past_deadline_drops_to_elastic(self):
        b = burst("lq", (400, 300), 50.0)
        out = bopf_allocate(classes(hard={"lq"}), {"lq": b}, {"lq": vec(8, 6), "tq": vec(10, 10)}, C, 50.0)
        assert out.tiers["lq"] == TIER_ELASTIC

    def test_oversubscribed_hard_tier_aborts(self):
        bs = {"a": burst("a", (400, 400), 50.0), "b": burst("b", (400, 400), 50.0)}
        with pytest.raises(InvariantViolation):
            bopf_allocate(classes(hard={"a", "b"}), bs, {"a": vec(8, 8), "b": vec(8, 8)}, C, 1.0)

    def test_single_hard_lq_matches_sp(self):
        b = burst("lq", (300, 300), 50.0)
        demands = {"lq": vec(6, 6), "tq": vec(10, 10)}
        bo = bopf_allocate(classes(hard={"lq"}), {"lq": b}, demands, C, 5.0)
        sp = strict_priority({"lq": demands["lq"]}, {"tq": demands["tq"]}, C)
        np.testing.assert_allclose(bo["lq"], sp["lq"])
        np.testing.assert_allclose(bo["tq"], sp["tq"])


class TestSpare:
    def test_unusable_share_is_reoffered(self):
        shares = {"lq": vec(8, 6), "tq": vec(2, 2)}
        demands = {"lq": vec(2, 2), "tq": vec(10, 10)}
        out = spare_step(shares, demands, C)
        np.testing.assert_allclose(out["lq"], [2, 2])
        np.testing.assert_allclose(out["tq"], [8, 8])

    def test_usable_part(self):
        np.testing.assert_allclose(usable(vec(8, 6), vec(2, 4)), [2, 4])
        np.testing.assert_allclose(usable(vec(1, 6), vec(2, 4)), [1, 2])
        np.testing.assert_array_equal(usable(vec(1, 1), vec(0, 0)), [0, 0])


class TestMbvt:
    def test_single_lq_gets_demand(self):
        m = MbvtState()
        m.activate("lq", warp=10.0)
        assert m.effective("lq") == -10.0
        out, _ = mbvt_allocate(m, {"lq": vec(4, 4)}, C, 0.0)
        np.testing.assert_allclose(out["lq"], [4, 4])

    def test_lowest_virtual_time_first_then_split(self):
        m = MbvtState()
        m.activate("a", warp=10.0)
        m.activate("b", warp=5.0)
        out, m2 = mbvt_allocate(m, {"a": vec(10, 10), "b": vec(10, 10)}, C, 0.0)
        np.testing.assert_allclose(out["a"], [10, 10])
        np.testing.assert_allclose(out["b"], [0, 0], atol=1e-12)
        m2.advance({"a": out["a"]}, C, 5.0)  # A_a: 0 -> 5, E_a: -10 -> -5
        out, _ = mbvt_allocate(m2, {"a": vec(10, 10), "b": vec(10, 10)}, C, 5.0)
        np.testing.assert_allclose(out["a"], [5, 5])
        np.testing.assert_allclose(out["b"], [5, 5])

    def test_equal_times_is_drf(self):
        demands = {"a": vec(8, 2), "b": vec(2, 8)}
        out, _ = mbvt_allocate(MbvtState(), demands, C, 0.0)
        ref = drf_fill(demands, C)
        for q in demands:
            np.testing.assert_allclose(out[q], ref[q])


class TestNoSoftVariant:
    def _states(self):
        cluster = ClusterConfig(C, n_min=3)
        lq0 = periodic_lq("lq0", (300, 300), 100, 50, n=2)   # rate <6,6>: Hard
        lq1 = periodic_lq("lq1", (250, 250), 100, 50, n=2)   # fair, but rate <5,5> does not fit
        lq2 = periodic_lq("lq2", (900, 100), 100, 50, n=2)   # over its fair share
        out = {}
        for soft in (True, False):
            s = AdmissionState(cluster, allow_soft=soft)
            for q in (lq0, lq1, lq2):
                admit(q, s)
            out[soft] = s
        return out

    def test_classes(self):
        s = self._states()
        assert [s[True].class_of(q) for q in ("lq0", "lq1", "lq2")] == [
            QueueClass.HARD, QueueClass.SOFT, QueueClass.ELASTIC]
        assert [s[False].class_of(q) for q in ("lq0", "lq1", "lq2")] == [
            QueueClass.HARD, QueueClass.ELASTIC, QueueClass.ELASTIC]

    def test_same_rule_without_soft_queues(self):
        state = classes(hard={"lq"})
        b = {"lq": burst("lq", (400, 300), 50.0)}
        demands = {"lq": vec(8, 6), "tq": vec(10, 10)}
        x = bopf_allocate(state, b, demands, C, 1.0)
        y = nbopf_allocate(state, b, demands, C, 1.0)
        for q in demands:
            np.testing.assert_array_equal(x[q], y[q])
        assert y.policy == "nbopf"


demand_maps = st.dictionaries(
    st.sampled_from(["a", "b", "c", "d", "e"]),
    st.lists(st.floats(0, 30), min_size=2, max_size=2).map(np.array),
    max_size=5,
)


class TestAllocationProperties:
    @given(demand_maps, st.sets(st.sampled_from(["a", "b", "c", "d", "e"]), max_size=2), st.floats(0, 49))
    def test_feasible_and_nonnegative(self, demands, guaranteed, now):
        hard = sorted(guaranteed)[:1]
        soft = sorted(guaranteed)[1:]
        bursts = {q: burst(q, (100, 100), 50.0) for q in guaranteed}
        for policy_out in (
            bopf_allocate(classes(hard, soft), bursts, demands, C, now),
            strict_priority({q: d for q, d in demands.items() if q in guaranteed},
                            {q: d for q, d in demands.items() if q not in guaranteed}, C),
            mbvt_allocate(MbvtState(), demands, C, now)[0],
            drf_fill(demands, C),
        ):
            total = policy_out.total(2)
            assert np.all(total <= C + 1e-6)
            assert all(np.all(s >= 0) for s in policy_out.shares.values())

    @given(demand_maps, st.sets(st.sampled_from(["a", "b", "c"]), max_size=2), st.floats(0, 49))
    def test_pareto_after_spare(self, demands, guaranteed, now):
        hard = sorted(guaranteed)[:1]
        soft = sorted(guaranteed)[1:]
        bursts = {q: burst(q, (100, 100), 50.0) for q in guaranteed}
        out = bopf_allocate(classes(hard, soft), bursts, demands, C, now)
        used = np.sum([usable(out[q], demands[q]) for q in demands], axis=0) if demands else np.zeros(2)
        residual = C - used
        for q, d in demands.items():
            unmet = d - usable(out[q], d)
            need = d > 0
            if np.any(unmet > 1e-6):
                assert not np.all(residual[need] > 1e-6), (q, residual)

import itertools

import numpy as np
import pytest

from urskyline import CustomerSet, ProbPoint, ProductSet
from urskyline.core import orthant_codes
from urskyline.dominance import influence_brute, uds_brute, urs_brute
from urskyline.index import build_tree, midpoint_tree
from urskyline.parallel import (
    CONTIGUOUS,
    POLICIES,
    ROUND_ROBIN,
    ParallelEngine,
    UdsSplit,
    dominators_in_partition,
    local_uds_split,
    local_uds_split_many,
    local_umsl,
    merge_umsl,
    merge_uds,
    parallel_influence,
    parallel_urs,
    partition,
    resolve_uds,
)
from urskyline.query import UdsEntry, UrsEngine, compute_umsl

from helpers import as_query, random_instance

C1 = np.array([55.0, 130.0])


def ids_of(parts):
    return [sorted(p.data.ids.tolist()) for p in parts]


def finish(c, merged, trees, q):
    found = [[dominators_in_partition(c, e.coords, t) for e in merged.scan] for t in trees]
    return resolve_uds(c, merged, found, q)


class TestPartition:
    def test_round_robin(self, W):
        assert ids_of(partition(W, 2)) == [[1, 3, 5], [2, 4, 6]]
        assert ids_of(partition(W.without(1), 2)) == [[2, 4, 6], [3, 5]]

    def test_contiguous(self, W):
        assert ids_of(partition(W, 2, CONTIGUOUS)) == [[1, 2, 3], [4, 5, 6]]
        assert [len(p.data) for p in partition(W, 4, CONTIGUOUS)] == [2, 2, 1, 1]

    def test_k1_and_large_k(self, W, C3):
        assert ids_of(partition(W, 1)) == [[1, 2, 3, 4, 5, 6]]
        assert ids_of(partition(C3, 10)) == [[1], [2], [3]]

    def test_errors(self, W):
        with pytest.raises(ValueError):
            partition(W, 0)
        with pytest.raises(ValueError):
            partition(W, 2, "random")

    def test_order_by_id_not_input(self):
        P = ProductSet([5, 1, 3], [[0, 0], [1, 1], [2, 2]], [0.5] * 3)
        assert ids_of(partition(P, 2)) == [[1, 5], [3]]


class TestUmslRounds:
    def test_local_umsl_examples(self, W):
        q, _ = as_query(W, 1)
        P1 = W.take([1, 2, 5])  # w2, w3, w6
        P2 = W.take([3, 4])     # w4, w5
        assert sorted(local_umsl(q, P1).source_ids.tolist()) == [2, 6]
        assert sorted(local_umsl(q, P2).source_ids.tolist()) == [4, 5]

    def test_local_umsl_guard_fails(self, W):
        q, _ = as_query(W, 1)
        assert len(local_umsl(q, W.take([2]))) == 0  # w3 fails the guard

    def test_merge_example(self, W):
        q, _ = as_query(W, 1)
        locs = [local_umsl(q, W.take([1, 2, 5])), local_umsl(q, W.take([3, 4]))]
        merged = merge_umsl(q, locs)
        assert merged.source_ids.tolist() == [2, 6, 4]

    def test_merge_single_local_unchanged(self, W):
        q, P = as_query(W, 1)
        loc = compute_umsl(q, midpoint_tree(q.coords, P))
        merged = merge_umsl(q, [loc])
        assert sorted(merged.source_ids.tolist()) == sorted(loc.source_ids.tolist())

    def test_merged_filtering_equivalence(self):
        rng = np.random.default_rng(11)
        gx, gy = np.meshgrid(np.linspace(0, 1, 25), np.linspace(0, 1, 25))
        grid = CustomerSet(np.arange(625), np.column_stack([gx.ravel(), gy.ravel()]))
        for _ in range(20):
            q, P, _ = random_instance(rng, n=80, d=2)
            serial = compute_umsl(q, midpoint_tree(q.coords, P, 6))
            for k in (2, 3, 8):
                merged = merge_umsl(q, [local_umsl(q, part.data, max_entries=6) for part in partition(P, k)])
                a, b = serial.filter(), merged.filter()
                qc = np.asarray(q.coords)
                codes = orthant_codes(qc, grid.coords)
                dist = np.abs(grid.coords - qc)
                assert (a.dominated_mask(codes, dist) == b.dominated_mask(codes, dist)).all()


class TestParallelUrs:
    @pytest.mark.parametrize("policy", POLICIES)
    @pytest.mark.parametrize("mode", ["parallel", "parallel-opt"])
    def test_wine(self, W, C3, policy, mode):
        for pid, expected in ((1, [2]), (2, [1, 2]), (3, [1, 3])):
            q, P = as_query(W, pid)
            assert parallel_urs(q, P, C3, 2, policy=policy, mode=mode).customers == expected

    def test_k1_matches_serial(self):
        rng = np.random.default_rng(12)
        q, P, C = random_instance(rng, 80, 80, 3)
        assert parallel_urs(q, P, C, 1).customers == UrsEngine(P, C).urs(q).customers

    def test_random_across_k(self):
        rng = np.random.default_rng(13)
        for _ in range(10):
            q, P, C = random_instance(rng, grid=bool(rng.integers(2)))
            expected = urs_brute(q, P, C)
            for k, policy in itertools.product((1, 2, 4, 8), POLICIES):
                assert parallel_urs(q, P, C, k, policy=policy, max_entries=4).customers == expected


class TestUdsSplit:
    def test_example(self, W):
        tree = build_tree(W.take([1, 2, 5]))  # w2, w3, w6
        split = local_uds_split(C1, tree, 1)
        # w3 dominates w2 w.r.t. c1 but with lower probability (0.40 < 0.48):
        # w2 is kept as a scan point; w6 is UD-dominated by w3 and dropped
        assert [e.id for e in split.uds_local] == [3]
        assert [(e.id, e.dsky) for e in split.udsscan_local] == [(2, pytest.approx(0.48))]
        assert split.customer_id == 1

    def test_singleton(self, W):
        split = local_uds_split(C1, build_tree(W.take([4])))
        assert [e.id for e in split.uds_local] == [5] and split.udsscan_local == []

    def test_one_point_ud_dominates_all(self):
        P = ProductSet(np.arange(4), [[1, 1], [2, 2], [3, 1], [1, 3]], [1.0, 0.5, 0.5, 0.5])
        split = local_uds_split((0, 0), build_tree(P))
        assert [e.id for e in split.uds_local] == [0] and split.udsscan_local == []

    def test_scan_members_have_partial_probs(self):
        P = ProductSet([0, 1], [[1, 1], [2, 2]], [0.2, 0.9])
        split = local_uds_split((0, 0), build_tree(P))
        assert [e.id for e in split.uds_local] == [0]
        assert [(e.id, e.dsky) for e in split.udsscan_local] == [(1, pytest.approx(0.72))]


class TestMergeUds:
    def test_wine_c1(self, W):
        q, P = as_query(W, 1)
        parts = [p.data for p in partition(P, 2)]
        trees = [build_tree(p) for p in parts]
        merged = merge_uds(C1, [local_uds_split(C1, t, 1) for t in trees], q)
        final = finish(C1, merged, trees, q)
        assert final.members == {2: 0.48, 3: 0.4}

    def test_k1_is_identity_plus_query(self, W):
        q, P = as_query(W, 1)
        tree = build_tree(P)
        split = local_uds_split(C1, tree)
        merged = merge_uds(C1, [split])
        assert sorted(e.id for e in merged.uds) == sorted(e.id for e in split.uds_local)
        assert sorted(e.id for e in merged.scan) == sorted(e.id for e in split.udsscan_local)
        with_q = merge_uds(C1, [split], q)
        ids = {e.id for e in with_q.uds} | {e.id for e in with_q.scan}
        assert q.id in ids

    def test_cross_partition_domination_moves_to_scan(self):
        a = UdsEntry(1, np.array([1.0, 1.0]), 0.2, 0.2, 0)
        b = UdsEntry(2, np.array([2.0, 2.0]), 0.9, 0.9, 0)
        merged = merge_uds((0, 0), [UdsSplit(7, [a], []), UdsSplit(7, [b], [])])
        assert [e.id for e in merged.uds] == [1] and [e.id for e in merged.scan] == [2]
        assert merged.customer_id == 7

    def test_pool_is_dynamic_skyline(self):
        rng = np.random.default_rng(14)
        for _ in range(40):
            q, P, C = random_instance(rng, grid=bool(rng.integers(2)))
            pool = P.with_query(q)
            trees = [build_tree(p.data, 4) for p in partition(P, int(rng.integers(1, 5)))]
            for c in C.coords[:4]:
                merged = merge_uds(c, [local_uds_split(c, t) for t in trees], q)
                t = np.abs(pool.coords - c)
                sky = {int(pool.ids[j]) for j in range(len(pool))
                       if not ((t <= t[j]).all(axis=1) & (t < t[j]).any(axis=1)).any()}
                assert {e.id for e in merged.uds} == sky
                exact = uds_brute(c, pool).members
                final = finish(c, merged, trees, q).members
                assert final.keys() == exact.keys()
                for k in final:
                    assert final[k] == pytest.approx(exact[k], rel=1e-12, abs=1e-300)


class TestDominators:
    def test_examples(self, W):
        tree = build_tree(W)
        assert dominators_in_partition(C1, (70, 80), tree) == [(3, 0.4)]
        assert dominators_in_partition(C1, (60, 170), tree) == []
        assert dominators_in_partition(C1, C1, tree) == []
        assert dominators_in_partition(C1, C1, None) == []

    def test_completeness(self):
        rng = np.random.default_rng(15)
        for _ in range(40):
            _, P, C = random_instance(rng, grid=bool(rng.integers(2)))
            trees = [build_tree(p.data, 3) for p in partition(P, int(rng.integers(1, 6)))]
            c = C.coords[0]
            for k in range(min(len(P), 8)):
                p = P.coords[k]
                found = {i for t in trees for i, _ in dominators_in_partition(c, p, t)}
                t = np.abs(P.coords - c)
                tp = np.abs(p - c)
                brute = set(P.ids[(t <= tp).all(axis=1) & (t < tp).any(axis=1)].tolist())
                assert found == brute


class TestParallelInfluence:
    def test_wine(self, W, C3):
        q, P = as_query(W, 2)
        assert parallel_influence(q, P, C3, 2).tau == pytest.approx(1.02, abs=0.01)
        q, P = as_query(W, 1)
        assert parallel_influence(q, P, C3, 3, policy=CONTIGUOUS).tau == pytest.approx(0.53, abs=0.01)

    def test_empty_urs(self):
        P = ProductSet([1], [[1.0, 1.0]], [1.0])
        C = CustomerSet([1], [[0.0, 0.0]])
        rep = parallel_influence(ProbPoint((2, 2), 0.5), P, C, 2)
        assert rep.tau == 0.0 and rep.per_customer == [] and rep.urs.timings_ms["influence"] == 0.0

    def test_random_across_k(self):
        rng = np.random.default_rng(16)
        for _ in range(10):
            q, P, C = random_instance(rng, grid=bool(rng.integers(2)))
            tau = influence_brute(q, P, C)
            for k, policy in itertools.product((1, 2, 4, 8), POLICIES):
                e = ParallelEngine(P, C, k, policy, max_entries=4)
                assert e.influence(q, "parallel-opt").tau == pytest.approx(tau, abs=1e-9)

    def test_repeatable(self):
        rng = np.random.default_rng(17)
        q, P, C = random_instance(rng, 150, 150, 2)
        e = ParallelEngine(P, C, 4, ROUND_ROBIN, max_entries=5)
        a, b = e.influence(q), e.influence(q)
        assert a.tau == b.tau and a.per_customer == b.per_customer


@pytest.mark.parametrize("grid", [False, True])
def test_batched_split_is_bit_identical(grid):
    rng = np.random.default_rng(41)
    for _ in range(40):
        q, P, C = random_instance(rng, n=int(rng.integers(1, 40)), m=int(rng.integers(1, 30)), grid=grid)
        tree = build_tree(P, max_entries=4)
        want = [local_uds_split(c, tree, int(i)) for i, c in zip(C.ids, C.coords)]
        got = local_uds_split_many(C.coords, tree, [int(i) for i in C.ids], block=64)
        assert len(got) == len(want)
        for a, b in zip(got, want):
            assert a.customer_id == b.customer_id
            for xs, ys in ((a.uds_local, b.uds_local), (a.udsscan_local, b.udsscan_local)):
                assert [(e.id, e.dsky, e.n_dominators) for e in xs] == \
                       [(e.id, e.dsky, e.n_dominators) for e in ys]

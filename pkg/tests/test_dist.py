import threading
import time

import numpy as np
import pytest

import fockforge as ff
from fockforge.dist import CollectiveTimeout, RankJobError, _GroupState, RankGroup


class TestSpawn:
    def test_single_rank(self):
        assert ff.spawn(1, lambda r, g: r) == [0]

    def test_rank_order_results(self):
        assert ff.spawn(4, lambda r, g: r * 10) == [0, 10, 20, 30]

    def test_group_properties(self):
        sizes = ff.spawn(3, lambda r, g: (g.rank, g.size))
        assert sizes == [(0, 3), (1, 3), (2, 3)]

    def test_failure_names_rank(self):
        def job(rank, group):
            if rank == 2:
                raise RuntimeError("boom")
            return rank

        with pytest.raises(RankJobError, match="rank 2") as exc:
            ff.spawn(4, job)
        assert isinstance(exc.value.original, RuntimeError)

    def test_failure_at_barrier_unblocks_peers(self):
        def job(rank, group):
            if rank == 1:
                raise RuntimeError("early death")
            group.barrier()  # would hang forever without abort propagation

        t0 = time.perf_counter()
        with pytest.raises(RankJobError, match="rank 1"):
            ff.spawn(2, job, timeout=30.0)
        assert time.perf_counter() - t0 < 5.0

    def test_invalid_rank_count(self):
        with pytest.raises(ValueError):
            ff.spawn(0, lambda r, g: r)


class TestDlb:
    def test_single_rank_sequence(self):
        g = ff.solo_group()
        assert [ff.dlb_next(g.dlb) for _ in range(5)] == [0, 1, 2, 3, 4]

    def test_reset_then_zero(self):
        g = ff.solo_group()
        for _ in range(7):
            g.dlb.next()
        e0 = g.dlb.epoch
        ff.dlb_reset(g)
        assert g.dlb.next() == 0
        assert g.dlb.epoch == e0 + 1

    def test_double_reset(self):
        g = ff.solo_group()
        ff.dlb_reset(g)
        ff.dlb_reset(g)
        assert g.dlb.next() == 0

    @pytest.mark.parametrize("n_ranks", [1, 2, 4, 8])
    def test_exhaustive_uniqueness(self, n_ranks):
        k_tasks = 5000

        def job(rank, group):
            got = []
            while True:
                v = group.dlb.next()
                if v >= k_tasks:
                    break
                got.append(v)
            return got

        logs = ff.spawn(n_ranks, job)
        allv = sorted(v for log in logs for v in log)
        assert allv == list(range(k_tasks))

    def test_reset_mismatch_times_out(self):
        def job(rank, group):
            if rank == 0:
                ff.dlb_reset(group)  # rank 1 never joins
            return rank

        with pytest.raises(RankJobError) as exc:
            ff.spawn(2, job, timeout=0.4)
        assert isinstance(exc.value.original, CollectiveTimeout)


class TestGlobalSum:
    def test_single_rank_identity(self):
        g = ff.solo_group()
        m = np.arange(9.0).reshape(3, 3)
        assert np.array_equal(ff.global_sum(g, m), m)

    def test_constant_ranks_sum(self):
        n = 4
        out = ff.spawn(n, lambda r, g: g.global_sum(np.full((3, 3), float(r))))
        expect = n * (n - 1) / 2
        for m in out:
            assert np.all(m == expect)

    def test_matches_serial_order_exactly(self):
        rng = np.random.default_rng(17)
        mats = [rng.standard_normal((6, 6)) for _ in range(4)]
        ref = mats[0].copy()
        for m in mats[1:]:
            ref = ref + m
        out = ff.spawn(4, lambda r, g: g.global_sum(mats[r]))
        for m in out:
            assert np.array_equal(m, ref)

    def test_dimension_mismatch(self):
        def job(rank, group):
            m = np.zeros((2, 2)) if rank == 0 else np.zeros((3, 3))
            return group.global_sum(m)

        with pytest.raises(RankJobError, match="mismatch"):
            ff.spawn(2, job)


class TestBarrier:
    def test_two_rank_ordering(self):
        flags = []

        def job(rank, group):
            if rank == 0:
                flags.append("pre")
            group.barrier()
            if rank == 1:
                assert "pre" in flags
            return True

        assert all(ff.spawn(2, job))

    def test_single_rank_noop(self):
        g = ff.solo_group()
        ff.barrier(g)

    def test_missing_participant_times_out(self):
        state = _GroupState(2, timeout=0.3)
        g0 = RankGroup(state, 0)
        with pytest.raises(CollectiveTimeout):
            g0.barrier()

import itertools
import math
import threading

import numpy as np
import pytest

import fockforge as ff
from fockforge.chem import Shell
from fockforge.fock import BlockBuffer, Schedule, Strategy, StrategyKind, _Team
from fockforge.integrals import SchwarzTable

from conftest import dense_fock_oracle, random_basis, random_density


def build_all_ranks(d, basis, q, tau, strategy, ranks, threads, log=None):
    return ff.spawn(
        ranks,
        lambda r, g: ff.build_fock(d, basis, q, tau, strategy, g, threads, visit_log=log),
    )


class TestTriIndex:
    def test_examples(self):
        assert ff.tri_encode(0, 0) == 0
        assert ff.tri_encode(1, 0) == 1
        assert ff.tri_encode(1, 1) == 2
        assert ff.tri_decode(0) == (0, 0)
        assert ff.tri_decode(1) == (1, 0)
        assert ff.tri_decode(2) == (1, 1)

    def test_roundtrip_exhaustive(self):
        n = 50
        seen = set()
        for i in range(n):
            for j in range(i + 1):
                ij = ff.tri_encode(i, j)
                assert ff.tri_decode(ij) == (i, j)
                seen.add(ij)
        assert seen == set(range(n * (n + 1) // 2))

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            ff.tri_encode(2, 3)
        with pytest.raises(ValueError):
            ff.tri_decode(-1)


class TestReference:
    def test_zero_density(self):
        basis = random_basis(1)
        q = ff.schwarz_table(basis)
        f = ff.build_fock_reference(np.zeros((basis.n_bf, basis.n_bf)), basis, q, 0.0)
        assert np.all(f == 0.0)

    def test_single_function_hand_formula(self):
        # one s function: F = 1/2 * D * (00|00) under the closed-shell 2J-K mix
        alpha = 0.8
        n = (2 * alpha / math.pi) ** 0.75
        sh = Shell(0, 0, np.zeros(3), np.array([alpha]), np.array([n]), 0)
        basis = ff.BasisSet((sh,), 1, (0,), 1)
        g = ff.eri_quartet(basis, 0, 0, 0, 0)[0, 0, 0, 0]
        d = np.array([[1.7]])
        q = ff.schwarz_table(basis)
        f = ff.build_fock_reference(d, basis, q, 0.0)
        assert f[0, 0] == pytest.approx(0.5 * 1.7 * g, abs=1e-14)

    @pytest.mark.parametrize("seed,n_atoms", [(11, 2), (12, 3), (13, 4)])
    def test_vs_dense_oracle(self, seed, n_atoms):
        basis = random_basis(seed, n_atoms=n_atoms)
        assert basis.n_bf <= 40
        d = random_density(basis, seed)
        q = ff.schwarz_table(basis)
        f = ff.build_fock_reference(d, basis, q, 0.0)
        oracle = dense_fock_oracle(basis, d)
        assert np.abs(f - oracle).max() < 1e-11
        assert np.abs(f - f.T).max() == 0.0

    def test_dimension_mismatch(self):
        basis = random_basis(14)
        q = ff.schwarz_table(basis)
        with pytest.raises(ValueError, match="density shape"):
            ff.build_fock_reference(np.zeros((3, 3)), basis, q, 0.0)


class TestStrategies:
    def test_degenerate_parallelism_matches_reference(self):
        basis = random_basis(20, n_atoms=3)
        d = random_density(basis, 20)
        q = ff.schwarz_table(basis)
        ref = ff.build_fock_reference(d, basis, q, 0.0)
        for kind in (StrategyKind.REPLICATED, StrategyKind.PRIVATE_FOCK, StrategyKind.SHARED_FOCK):
            f = build_all_ranks(d, basis, q, 0.0, Strategy(kind), 1, 1)[0]
            assert np.abs(f - ref).max() <= 1e-12 * max(1.0, np.abs(ref).max())

    @pytest.mark.parametrize("kind", [StrategyKind.REPLICATED, StrategyKind.PRIVATE_FOCK, StrategyKind.SHARED_FOCK])
    @pytest.mark.parametrize("sched", [Schedule.DYNAMIC, Schedule.STATIC_DETERMINISTIC])
    def test_ranks_threads_match_reference(self, kind, sched):
        basis = random_basis(21, n_atoms=4)
        d = random_density(basis, 21)
        q = ff.schwarz_table(basis)
        tau = 1e-10
        ref = ff.build_fock_reference(d, basis, q, tau)
        tol = 1e-10 * max(1.0, np.abs(ref).max())
        for ranks, threads in ((2, 3), (3, 2), (2, 8)):
            outs = build_all_ranks(d, basis, q, tau, Strategy(kind, sched), ranks, threads)
            for f in outs:
                assert np.abs(f - ref).max() <= tol
            for f in outs[1:]:
                assert np.array_equal(outs[0], f)

    def test_chunk_size_one_matches(self):
        basis = random_basis(22, n_atoms=3)
        d = random_density(basis, 22)
        q = ff.schwarz_table(basis)
        ref = ff.build_fock_reference(d, basis, q, 1e-10)
        st = Strategy(StrategyKind.SHARED_FOCK, Schedule.DYNAMIC, chunk_size=1)
        f = build_all_ranks(d, basis, q, 1e-10, st, 2, 4)[0]
        assert np.abs(f - ref).max() <= 1e-10 * max(1.0, np.abs(ref).max())

    def test_static_deterministic_bitwise(self):
        basis = random_basis(23, n_atoms=4)
        d = random_density(basis, 23)
        q = ff.schwarz_table(basis)
        for kind in (StrategyKind.REPLICATED, StrategyKind.PRIVATE_FOCK, StrategyKind.SHARED_FOCK):
            st = Strategy(kind, Schedule.STATIC_DETERMINISTIC)
            a = build_all_ranks(d, basis, q, 1e-10, st, 2, 4)[0]
            b = build_all_ranks(d, basis, q, 1e-10, st, 2, 4)[0]
            assert np.array_equal(a, b)

    def test_screening_monotonicity(self):
        basis = random_basis(24, n_atoms=4, spread=4.0)
        d = random_density(basis, 24)
        q = ff.schwarz_table(basis)
        f0 = ff.build_fock_reference(d, basis, q, 0.0)
        prev = 0.0
        for tau in (1e-6, 1e-8, 1e-10, 1e-12):
            diff = np.abs(ff.build_fock_reference(d, basis, q, tau) - f0).max()
            if prev:
                assert diff <= prev + 1e-15
            prev = diff

    def test_missing_group_rejected(self):
        basis = random_basis(25)
        d = random_density(basis, 25)
        q = ff.schwarz_table(basis)
        with pytest.raises(ValueError, match="RankGroup"):
            ff.build_fock(d, basis, q, 0.0, Strategy(StrategyKind.SHARED_FOCK))

    def test_bad_thread_count(self):
        basis = random_basis(26)
        d = random_density(basis, 26)
        q = ff.schwarz_table(basis)
        with pytest.raises(ValueError, match="n_threads"):
            ff.build_fock(d, basis, q, 0.0, Strategy(StrategyKind.SHARED_FOCK), ff.solo_group(), 0)

    def test_single_shell_no_deadlock(self):
        alpha = 1.1
        n = (2 * alpha / math.pi) ** 0.75
        sh = Shell(0, 0, np.zeros(3), np.array([alpha]), np.array([n]), 0)
        basis = ff.BasisSet((sh,), 1, (0,), 1)
        d = np.array([[0.9]])
        q = ff.schwarz_table(basis)
        ref = ff.build_fock_reference(d, basis, q, 0.0)
        for kind in (StrategyKind.REPLICATED, StrategyKind.PRIVATE_FOCK, StrategyKind.SHARED_FOCK):
            f = build_all_ranks(d, basis, q, 0.0, Strategy(kind), 2, 4)[0]
            assert np.abs(f - ref).max() < 1e-14

    def test_fully_screened_no_deadlock(self):
        basis = random_basis(27, n_atoms=2)
        d = random_density(basis, 27)
        q = ff.schwarz_table(basis)
        for kind in (StrategyKind.REPLICATED, StrategyKind.PRIVATE_FOCK, StrategyKind.SHARED_FOCK):
            f = build_all_ranks(d, basis, q, 1e6, Strategy(kind), 2, 3)[0]
            assert np.all(f == 0.0)


class TestVisitLog:
    def test_single_shell_log(self):
        alpha = 1.1
        n = (2 * alpha / math.pi) ** 0.75
        sh = Shell(0, 0, np.zeros(3), np.array([alpha]), np.array([n]), 0)
        basis = ff.BasisSet((sh,), 1, (0,), 1)
        q = ff.schwarz_table(basis)
        log = ff.VisitLog()
        ff.build_fock(np.ones((1, 1)), basis, q, 0.0, Strategy(StrategyKind.REFERENCE_SERIAL), visit_log=log)
        assert log.quartets().tolist() == [[0, 0, 0, 0]]

    @pytest.mark.parametrize("kind", [StrategyKind.REPLICATED, StrategyKind.PRIVATE_FOCK, StrategyKind.SHARED_FOCK])
    def test_exactly_once_unscreened(self, kind):
        basis = random_basis(41, n_atoms=3)
        d = random_density(basis, 41)
        q = ff.schwarz_table(basis)
        log = ff.VisitLog()
        build_all_ranks(d, basis, q, 0.0, Strategy(kind), 4, 2, log=log)
        quartets = [tuple(row) for row in log.quartets()]
        npairs = basis.n_shells * (basis.n_shells + 1) // 2
        assert len(quartets) == npairs * (npairs + 1) // 2
        assert len(set(quartets)) == len(quartets)

    def test_screened_absent_and_sound(self):
        basis = random_basis(42, n_atoms=4, spread=5.0)
        d = random_density(basis, 42)
        q = ff.schwarz_table(basis)
        tau = 1e-8
        log = ff.VisitLog()
        build_all_ranks(d, basis, q, tau, Strategy(StrategyKind.REPLICATED), 2, 1, log=log)
        visited = {tuple(row) for row in log.quartets()}
        ns = basis.n_shells
        for i in range(ns):
            for j in range(i + 1):
                ij = ff.tri_encode(i, j)
                for k in range(i + 1):
                    for l in range(k + 1):
                        if ff.tri_encode(k, l) > ij:
                            continue
                        if (i, j, k, l) in visited:
                            continue
                        assert q.q[i, j] * q.q[k, l] < tau

    def test_shared_fock_kl_ownership(self):
        basis = random_basis(43, n_atoms=3)
        d = random_density(basis, 43)
        q = ff.schwarz_table(basis)
        log = ff.VisitLog()
        build_all_ranks(d, basis, q, 0.0, Strategy(StrategyKind.SHARED_FOCK), 2, 4, log=log)
        # within one (i,j) epoch, distinct threads own disjoint (k,l) sets
        per_epoch = {}
        for (rank, tid), arr in log.by_worker.items():
            for i, j, k, l in arr:
                per_epoch.setdefault((i, j), {}).setdefault((rank, tid), set()).add((k, l))
        for owners in per_epoch.values():
            sets = list(owners.values())
            for a, b in itertools.combinations(sets, 2):
                assert not (a & b)


class TestBlockBuffer:
    def run_team_flush(self, n_threads, fill, n_bf=7, width=3, offset=2):
        team = _Team(n_threads)
        buf = BlockBuffer(n_bf, width, team)
        f = np.zeros((n_bf, n_bf))
        for t in range(n_threads):
            buf.column(t)[: n_bf * width] = fill(t).ravel()
        errors = []

        def worker(tid):
            try:
                buf.flush(f, offset, width, tid)
            except Exception as exc:  # pragma: no cover
                errors.append(exc)

        threads = [threading.Thread(target=worker, args=(t,)) for t in range(1, n_threads)]
        for t in threads:
            t.start()
        worker(0)
        for t in threads:
            t.join()
        assert not errors
        return f, buf

    def test_zero_buffer_leaves_f(self):
        f, _ = self.run_team_flush(4, lambda t: np.zeros((7, 3)))
        assert np.all(f == 0.0)

    def test_single_writer_ones(self):
        f, buf = self.run_team_flush(4, lambda t: np.ones((7, 3)) if t == 2 else np.zeros((7, 3)))
        expect = np.zeros((7, 7))
        expect[:, 2:5] += 1.0
        expect[2:5, :] += 1.0
        assert np.array_equal(f, expect)
        assert np.all(buf.data == 0.0)

    @pytest.mark.parametrize("n_threads", list(range(1, 9)))
    def test_random_matches_serial_sum(self, n_threads):
        rng = np.random.default_rng(n_threads)
        blocks = [rng.standard_normal((7, 3)) for _ in range(n_threads)]
        f, _ = self.run_team_flush(n_threads, lambda t: blocks[t])
        total = np.sum(blocks, axis=0)
        expect = np.zeros((7, 7))
        expect[:, 2:5] += total
        expect[2:5, :] += total.T
        assert np.abs(f - expect).max() < 1e-14

    def test_padding_quantum(self):
        team = _Team(2)
        buf = BlockBuffer(7, 3, team)
        assert buf.padded % 16 == 0
        assert buf.padded >= 21

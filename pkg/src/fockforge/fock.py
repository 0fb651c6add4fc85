"""Two-electron Fock matrix construction under interchangeable parallel
strategies, plus a serial reference oracle.

Strategies:

* REFERENCE_SERIAL — canonical quartet sweep on the calling thread.
* REPLICATED — rank-level dynamic load balancing over (i,j) shell pairs;
  each rank owns a full private F; all-reduce at the end.
* PRIVATE_FOCK — rank-level DLB over i; threads partition the collapsed
  (j,k) loops; each thread owns a full private F; ordered thread reduction,
  then the rank all-reduce.
* SHARED_FOCK — rank-level DLB over the combined triangular ij index with
  pair-level prescreening; threads partition the kl loop; per-thread block
  buffers accumulate the i- and j-column contributions, the (k,l) element
  is written straight into the rank-shared F (each kl pair is owned by
  exactly one thread); buffers flush through a padded tree reduction behind
  barriers — the j buffer after every kl loop, the i buffer only when i
  changes, plus a final flush.

Within a rank, D, the Schwarz table, and basis data are shared read-only.
The shared F is touched only via kl-ownership writes and barrier-bracketed
flush collectives. Dynamic scheduling reassociates floating-point sums;
comparisons against the reference allow for that. STATIC_DETERMINISTIC
assigns tasks round-robin by index and is bitwise reproducible for a fixed
(ranks, threads).
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import _kernels as k
from .chem import BasisSet
from .dist import DEFAULT_TIMEOUT, CollectiveTimeout, RankGroup
from .integrals import SchwarzTable, pack_basis

PAD_QUANTUM = 16  # buffer leading dimension rounded up to 16 doubles
MAX_TEAM = 64


class StrategyKind(Enum):
    REFERENCE_SERIAL = "reference"
    REPLICATED = "replicated"
    PRIVATE_FOCK = "private-fock"
    SHARED_FOCK = "shared-fock"


class Schedule(Enum):
    DYNAMIC = "dynamic"
    STATIC_DETERMINISTIC = "static"


@dataclass(frozen=True)
class Strategy:
    kind: StrategyKind
    schedule: Schedule = Schedule.DYNAMIC
    # tasks pulled per counter grab under DYNAMIC; 0 picks a size that
    # amortizes dispatch overhead while keeping the balance fine
    chunk_size: int = 0


def tri_encode(i: int, j: int) -> int:
    """Pair (i,j), j <= i, to its row-major triangular index."""
    if j < 0 or j > i:
        raise ValueError(f"need 0 <= j <= i, got ({i},{j})")
    return i * (i + 1) // 2 + j


def tri_decode(ij: int) -> tuple[int, int]:
    if ij < 0:
        raise ValueError(f"triangular index must be >= 0, got {ij}")
    i, j = k.tri_decode_nb(ij)
    return int(i), int(j)


class VisitLog:
    """Multiset of quartets actually digested, tagged by (rank, thread)."""

    def __init__(self):
        self._lock = threading.Lock()
        self.by_worker: dict[tuple[int, int], np.ndarray] = {}

    def _merge(self, rank, tid, chunks):
        if not chunks:
            arr = np.zeros((0, 4), dtype=np.int64)
        else:
            arr = np.concatenate(chunks)
        with self._lock:
            if (rank, tid) in self.by_worker:
                arr = np.concatenate([self.by_worker[(rank, tid)], arr])
            self.by_worker[(rank, tid)] = arr

    def quartets(self) -> np.ndarray:
        if not self.by_worker:
            return np.zeros((0, 4), dtype=np.int64)
        return np.concatenate([self.by_worker[key] for key in sorted(self.by_worker)])


_EMPTY_LOG = np.zeros((0, 4), dtype=np.int64)


def _alloc_scratch():
    return (
        np.empty((3, 3, 3, 5)),
        np.empty((3, 3, 3, 5)),
        np.empty((9, 9, 9, 9)),
        np.empty(9),
        np.empty((36, 35)),
        np.empty((5, 5, 5)),
        np.empty(35),
        np.empty((6, 6, 6, 6)),
    )


def _auto_chunk(total: int, n_threads: int) -> int:
    return max(1, min(1024, total // (n_threads * 16)))


class _Team:
    """Rank-local thread team: a barrier, a task counter, and a shared slot."""

    def __init__(self, n_threads, timeout=DEFAULT_TIMEOUT):
        self.n = n_threads
        self.barrier = threading.Barrier(n_threads, timeout=timeout)
        self.lock = threading.Lock()
        self.slot = 0
        self.counter = 0

    def wait(self):
        try:
            self.barrier.wait()
        except threading.BrokenBarrierError:
            raise CollectiveTimeout("thread team barrier broken") from None

    def pull(self, total, chunk):
        with self.lock:
            s = self.counter
            self.counter += chunk
        return s, min(total, s + chunk)


class BlockBuffer:
    """Per-thread (n_bf x shell-width) accumulation buffer with padding.

    Layout is thread-major: row t is thread t's flattened column block,
    padded to a multiple of PAD_QUANTUM doubles so threads never share a
    cache line while accumulating. Flushing tree-reduces the thread rows in
    contiguous row chunks (one chunk per thread) and adds the result into
    both mirror triangles of F behind barriers.
    """

    def __init__(self, n_bf: int, max_width: int, team: _Team):
        self.n_bf = n_bf
        self.max_width = max_width
        logical = n_bf * max_width
        self.padded = -(-logical // PAD_QUANTUM) * PAD_QUANTUM
        self.data = np.zeros((team.n, self.padded))
        self.reduced = np.zeros(logical)
        self.team = team

    def column(self, tid: int) -> np.ndarray:
        return self.data[tid]

    def flush(self, f_mat: np.ndarray, offset: int, width: int, tid: int):
        """Collective among the team: F[:, block] += tree-sum of columns,
        mirror rows updated symmetrically, buffer zeroed."""
        nt = self.team.n
        rows = self.n_bf
        per = -(-rows // nt)
        r0 = min(tid * per, rows)
        r1 = min(r0 + per, rows)
        k.reduce_chunk(self.data, nt, r0 * width, r1 * width, self.reduced)
        self.team.wait()
        red = self.reduced[: rows * width].reshape(rows, width)
        f_mat[r0:r1, offset : offset + width] += red[r0:r1]
        self.team.wait()
        f_mat[offset : offset + width, r0:r1] += red[r0:r1].T
        self.data[tid, :] = 0.0
        self.team.wait()


def flush_buffer(buf: BlockBuffer, f_mat: np.ndarray, offset: int, width: int, tid: int):
    buf.flush(f_mat, offset, width, tid)


def _check_inputs(d_mat, basis, n_threads):
    d_mat = np.ascontiguousarray(d_mat, dtype=float)
    if d_mat.shape != (basis.n_bf, basis.n_bf):
        raise ValueError(
            f"density shape {d_mat.shape} does not match basis n_bf={basis.n_bf}"
        )
    if not (1 <= n_threads <= MAX_TEAM):
        raise ValueError(f"n_threads must be in 1..{MAX_TEAM}")
    return d_mat


def build_fock_reference(
    d_mat: np.ndarray, basis: BasisSet, q: SchwarzTable, tau: float
) -> np.ndarray:
    """Serial two-electron Fock matrix over symmetry-unique shell quartets."""
    d_mat = _check_inputs(d_mat, basis, 1)
    pack = pack_basis(basis)
    f_mat = np.zeros((basis.n_bf, basis.n_bf))
    scratch = _alloc_scratch()
    for ij in range(pack.n_pairs):
        k.fock_pair_task(
            f_mat, d_mat, ij, pack.arrays, q.q, tau, *scratch, _EMPTY_LOG, False
        )
    return f_mat


def _run_team(n_threads, worker):
    """Run worker(tid) on this thread (tid 0) plus n_threads-1 helpers."""
    errors = [None] * n_threads
    def wrapped(tid):
        try:
            worker(tid)
        except BaseException as exc:
            errors[tid] = exc
            raise
    threads = [
        threading.Thread(target=wrapped, args=(t,), name=f"fock-thread-{t}")
        for t in range(1, n_threads)
    ]
    for t in threads:
        t.start()
    try:
        wrapped(0)
    finally:
        for t in threads:
            t.join()
    for tid, exc in enumerate(errors):
        if exc is not None:
            raise exc


def _replicated_rank(d_mat, pack, q, tau, strategy, group, log):
    f_mat = np.zeros((pack.n_bf, pack.n_bf))
    scratch = _alloc_scratch()
    chunks = []
    logging = log is not None

    def run_pair(ij):
        buf = np.empty((ij + 1, 4), dtype=np.int64) if logging else _EMPTY_LOG
        n = k.fock_pair_task(
            f_mat, d_mat, ij, pack.arrays, q.q, tau, *scratch, buf, logging
        )
        if logging and n:
            chunks.append(buf[:n].copy())

    if strategy.schedule is Schedule.DYNAMIC:
        group.dlb_reset()
        while True:
            ij = group.dlb.next()
            if ij >= pack.n_pairs:
                break
            run_pair(ij)
    else:
        for ij in range(group.rank, pack.n_pairs, group.size):
            run_pair(ij)
    if logging:
        log._merge(group.rank, 0, chunks)
    return group.global_sum(f_mat)


def _private_rank(d_mat, pack, q, tau, strategy, group, n_threads, log):
    n_sh = pack.n_shells
    n_bf = pack.n_bf
    team = _Team(n_threads)
    f_stack = np.zeros((n_threads, n_bf, n_bf))
    dynamic = strategy.schedule is Schedule.DYNAMIC
    if dynamic:
        group.dlb_reset()
    static_iter = iter(range(group.rank, n_sh, group.size))
    logging = log is not None

    def worker(tid):
        scratch = _alloc_scratch()
        f_t = f_stack[tid]
        chunks = []
        while True:
            team.wait()
            if tid == 0:
                if dynamic:
                    team.slot = group.dlb.next()
                else:
                    team.slot = next(static_iter, n_sh)
                team.counter = 0
            team.wait()
            i = team.slot
            if i >= n_sh:
                break
            total = (i + 1) * (i + 1)
            if dynamic:
                chunk = strategy.chunk_size or _auto_chunk(total, n_threads)
                while True:
                    s, e = team.pull(total, chunk)
                    if s >= total:
                        break
                    buf = (
                        np.empty(((e - s) * (i + 1), 4), dtype=np.int64)
                        if logging
                        else _EMPTY_LOG
                    )
                    n = k.fock_jk_task(
                        f_t, d_mat, i, s, e, 1, pack.arrays, q.q, tau,
                        *scratch, buf, logging,
                    )
                    if logging and n:
                        chunks.append(buf[:n].copy())
            else:
                count = (total - tid + n_threads - 1) // n_threads
                buf = (
                    np.empty((count * (i + 1), 4), dtype=np.int64)
                    if logging
                    else _EMPTY_LOG
                )
                n = k.fock_jk_task(
                    f_t, d_mat, i, tid, total, n_threads, pack.arrays, q.q, tau,
                    *scratch, buf, logging,
                )
                if logging and n:
                    chunks.append(buf[:n].copy())
        if logging:
            log._merge(group.rank, tid, chunks)

    _run_team(n_threads, worker)
    f_rank = np.zeros((n_bf, n_bf))
    k.reduce_private_focks(f_stack, n_threads, f_rank)
    return group.global_sum(f_rank)


def _shared_rank(d_mat, pack, q, tau, strategy, group, n_threads, log):
    n_bf = pack.n_bf
    n_pairs = pack.n_pairs
    sh_off = pack.arrays[4]
    sh_w = pack.arrays[5]
    team = _Team(n_threads)
    f_rank = np.zeros((n_bf, n_bf))
    buf_i = BlockBuffer(n_bf, pack.max_width, team)
    buf_j = BlockBuffer(n_bf, pack.max_width, team)
    dynamic = strategy.schedule is Schedule.DYNAMIC
    if dynamic:
        group.dlb_reset()
    static_iter = iter(range(group.rank, n_pairs, group.size))
    q_arr = q.q
    q_max = q.q_max
    logging = log is not None

    def worker(tid):
        scratch = _alloc_scratch()
        bi = buf_i.column(tid)
        bj = buf_j.column(tid)
        chunks = []
        i_old = -1
        while True:
            team.wait()
            if tid == 0:
                if dynamic:
                    team.slot = group.dlb.next()
                else:
                    team.slot = next(static_iter, n_pairs)
                team.counter = 0
            team.wait()
            ij = team.slot
            if ij >= n_pairs:
                break
            i, j = k.tri_decode_nb(ij)
            if tau > 0.0 and q_arr[i, j] * q_max < tau:
                continue  # pair-level prescreen skips the whole kl loop
            if i != i_old and i_old >= 0:
                buf_i.flush(f_rank, sh_off[i_old], sh_w[i_old], tid)
            kl_max = ij + 1
            if dynamic:
                chunk = strategy.chunk_size or _auto_chunk(kl_max, n_threads)
                while True:
                    s, e = team.pull(kl_max, chunk)
                    if s >= kl_max:
                        break
                    buf = np.empty((e - s, 4), dtype=np.int64) if logging else _EMPTY_LOG
                    n = k.fock_kl_task(
                        f_rank, d_mat, bi, bj, i, j, s, e, 1,
                        pack.arrays, q_arr, tau, *scratch, buf, logging,
                    )
                    if logging and n:
                        chunks.append(buf[:n].copy())
            else:
                count = (kl_max - tid + n_threads - 1) // n_threads
                buf = np.empty((count, 4), dtype=np.int64) if logging else _EMPTY_LOG
                n = k.fock_kl_task(
                    f_rank, d_mat, bi, bj, i, j, tid, kl_max, n_threads,
                    pack.arrays, q_arr, tau, *scratch, buf, logging,
                )
                if logging and n:
                    chunks.append(buf[:n].copy())
            team.wait()
            buf_j.flush(f_rank, sh_off[j], sh_w[j], tid)
            i_old = i
        # remainder of the i buffer
        if i_old >= 0:
            buf_i.flush(f_rank, sh_off[i_old], sh_w[i_old], tid)
        if logging:
            log._merge(group.rank, tid, chunks)

    _run_team(n_threads, worker)
    return group.global_sum(f_rank)


def build_fock(
    d_mat: np.ndarray,
    basis: BasisSet,
    q: SchwarzTable,
    tau: float,
    strategy: Strategy,
    group: RankGroup | None = None,
    n_threads: int = 1,
    visit_log: VisitLog | None = None,
) -> np.ndarray:
    """Two-electron Fock matrix via the requested strategy.

    Must be called collectively by every rank of ``group`` (except for
    REFERENCE_SERIAL, which ignores the group and runs locally).
    """
    d_mat = _check_inputs(d_mat, basis, n_threads)
    if not isinstance(strategy, Strategy):
        raise TypeError("strategy must be a Strategy instance")
    pack = pack_basis(basis)
    if strategy.kind is StrategyKind.REFERENCE_SERIAL:
        if visit_log is not None:
            f_mat = np.zeros((basis.n_bf, basis.n_bf))
            scratch = _alloc_scratch()
            chunks = []
            for ij in range(pack.n_pairs):
                buf = np.empty((ij + 1, 4), dtype=np.int64)
                n = k.fock_pair_task(
                    f_mat, d_mat, ij, pack.arrays, q.q, tau, *scratch, buf, True
                )
                if n:
                    chunks.append(buf[:n].copy())
            visit_log._merge(0, 0, chunks)
            return f_mat
        return build_fock_reference(d_mat, basis, q, tau)
    if group is None:
        raise ValueError(f"{strategy.kind.value} needs a RankGroup")
    if strategy.kind is StrategyKind.REPLICATED:
        return _replicated_rank(d_mat, pack, q, tau, strategy, group, visit_log)
    if strategy.kind is StrategyKind.PRIVATE_FOCK:
        return _private_rank(d_mat, pack, q, tau, strategy, group, n_threads, visit_log)
    if strategy.kind is StrategyKind.SHARED_FOCK:
        return _shared_rank(d_mat, pack, q, tau, strategy, group, n_threads, visit_log)
    raise ValueError(f"unknown strategy kind {strategy.kind}")

"""In-process distribution substrate: simulated ranks, a shared dynamic
load-balance counter, barriers, and all-reduce summation.

Ranks are concurrent execution contexts (threads) inside one process, which
keeps reductions deterministic and lets tests verify work distribution
exhaustively. The interface is transport-agnostic: nothing below assumes
shared memory beyond the collectives themselves, so a socket/MPI transport
could substitute. There are no data-server processes; every rank computes.

Collectives must be entered by every rank; a missing participant surfaces
as CollectiveTimeout after the group timeout. Rank job code must not carry
collective state across iterations.
"""

from __future__ import annotations

import threading

import numpy as np

DEFAULT_TIMEOUT = 120.0


class CollectiveTimeout(RuntimeError):
    pass


class RankJobError(RuntimeError):
    def __init__(self, rank, original):
        self.rank = rank
        self.original = original
        super().__init__(f"rank {rank} failed: {original!r}")


class DlbCounter:
    """Shared monotone task counter (the ddi_dlbnext analog).

    Each value 0,1,2,... is issued exactly once per epoch across all ranks;
    the epoch advances only at a collective reset.
    """

    def __init__(self):
        self._lock = threading.Lock()
        self._value = 0
        self.epoch = 0

    def next(self) -> int:
        with self._lock:
            v = self._value
            self._value += 1
            return v


class _GroupState:
    def __init__(self, n_ranks, timeout):
        self.n_ranks = n_ranks
        self.timeout = timeout
        self.barrier = threading.Barrier(n_ranks, timeout=timeout)
        self.dlb = DlbCounter()
        self.sum_slots = [None] * n_ranks

    def abort(self):
        self.barrier.abort()


class RankGroup:
    """Per-rank handle onto the shared collective state."""

    def __init__(self, state: _GroupState, rank: int):
        self._state = state
        self.rank = rank
        self.size = state.n_ranks

    @property
    def dlb(self) -> DlbCounter:
        return self._state.dlb

    def barrier(self):
        try:
            return self._state.barrier.wait()
        except threading.BrokenBarrierError:
            raise CollectiveTimeout(
                f"rank {self.rank}: collective timed out or was aborted"
            ) from None

    def dlb_reset(self):
        """Collective: zero the counter and open a new epoch."""
        idx = self.barrier()
        if idx == 0:
            self._state.dlb._value = 0
            self._state.dlb.epoch += 1
        self.barrier()

    def global_sum(self, local: np.ndarray) -> np.ndarray:
        """Element-wise all-reduce; fixed rank-ordered summation, so every
        rank computes a bitwise-identical result."""
        local = np.asarray(local, dtype=float)
        st = self._state
        st.sum_slots[self.rank] = local
        self.barrier()
        shapes = {m.shape for m in st.sum_slots}
        if len(shapes) != 1:
            self.barrier()
            raise ValueError(f"global_sum dimension mismatch across ranks: {shapes}")
        total = st.sum_slots[0].copy()
        for r in range(1, st.n_ranks):
            total += st.sum_slots[r]
        self.barrier()
        return total


def spawn(n_ranks: int, job, timeout: float = DEFAULT_TIMEOUT) -> list:
    """Run job(rank, group) on n_ranks concurrent contexts; collect results.

    The first per-rank failure (lowest rank with a non-collective error,
    else lowest failing rank) is re-raised as RankJobError.
    """
    if n_ranks < 1:
        raise ValueError("n_ranks must be >= 1")
    state = _GroupState(n_ranks, timeout)
    results = [None] * n_ranks
    errors = [None] * n_ranks

    def runner(rank):
        group = RankGroup(state, rank)
        try:
            results[rank] = job(rank, group)
        except BaseException as exc:  # propagate everything, then unblock peers
            errors[rank] = exc
            state.abort()

    threads = [
        threading.Thread(target=runner, args=(r,), name=f"rank-{r}")
        for r in range(n_ranks)
    ]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    failed = [r for r, e in enumerate(errors) if e is not None]
    if failed:
        root = [r for r in failed if not isinstance(errors[r], CollectiveTimeout)]
        r = root[0] if root else failed[0]
        raise RankJobError(r, errors[r]) from errors[r]
    return results


def solo_group(timeout: float = DEFAULT_TIMEOUT) -> RankGroup:
    """A one-rank group for serial paths and tests."""
    return RankGroup(_GroupState(1, timeout), 0)


def dlb_next(counter: DlbCounter) -> int:
    return counter.next()


def dlb_reset(group: RankGroup):
    group.dlb_reset()


def global_sum(group: RankGroup, local: np.ndarray) -> np.ndarray:
    return group.global_sum(local)


def barrier(group: RankGroup):
    group.barrier()

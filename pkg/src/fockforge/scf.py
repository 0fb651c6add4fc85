"""Restricted Hartree-Fock driver: core Hamiltonian, initial guess, the
fixed-point iteration with RMS-density convergence, and energies.

Every rank runs the same control flow on replicated D, H, and X; only the
two-electron Fock build is distributed (and reduced back), so all ranks
hold bitwise-identical state at every step. Diagonalization is performed
redundantly on each rank rather than parallelized.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .chem import BasisSet, Molecule, nuclear_repulsion
from .dist import RankGroup, solo_group, spawn
from .fock import Schedule, Strategy, StrategyKind, build_fock
from .integrals import (
    DEFAULT_SCREEN_TAU,
    kinetic_matrix,
    nuclear_matrix,
    overlap_matrix,
    schwarz_table,
)
from .numerics import INV_SQRT_FLOOR, inv_sqrt, jacobi_eigh, transform


def _default_strategy() -> Strategy:
    return Strategy(StrategyKind.SHARED_FOCK, Schedule.DYNAMIC)


@dataclass(frozen=True)
class SCFConfig:
    conv_tol: float = 1e-8
    max_iter: int = 100
    tau: float = DEFAULT_SCREEN_TAU
    strategy: Strategy = field(default_factory=_default_strategy)
    ranks: int = 1
    threads: int = 1
    damping: float = 0.0
    overlap_floor: float = INV_SQRT_FLOOR

    def __post_init__(self):
        if self.conv_tol <= 0.0:
            raise ValueError("convergence threshold must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if not (0.0 <= self.damping < 1.0):
            raise ValueError("damping factor must be in [0, 1)")
        if self.ranks < 1 or self.threads < 1:
            raise ValueError("ranks and threads must be >= 1")


@dataclass(frozen=True)
class SCFResult:
    converged: bool
    iterations: int
    energy_total: float
    energy_electronic: float
    energy_nuclear: float
    orbital_energies: np.ndarray
    rms_final: float
    time_fock: float
    time_diag: float
    time_other: float
    iteration_times: tuple[dict, ...]

    @property
    def time_total(self) -> float:
        return self.time_fock + self.time_diag + self.time_other


def core_hamiltonian(basis: BasisSet, mol: Molecule) -> np.ndarray:
    return kinetic_matrix(basis) + nuclear_matrix(basis, mol)


def guess_density(h: np.ndarray, x: np.ndarray, n_occ: int) -> np.ndarray:
    """Core-Hamiltonian guess: diagonalize X^T H X, back-transform, occupy."""
    if n_occ > h.shape[0]:
        raise ValueError(f"n_occ={n_occ} exceeds basis size {h.shape[0]}")
    _, c_prime = jacobi_eigh(transform(h, x))
    c = x @ c_prime
    occ = c[:, :n_occ]
    d = 2.0 * occ @ occ.T
    return 0.5 * (d + d.T)


def electronic_energy(d: np.ndarray, h: np.ndarray, f: np.ndarray) -> float:
    """Closed-shell electronic energy E = 1/2 sum D o (H + F)."""
    if d.shape != h.shape or d.shape != f.shape:
        raise ValueError("dimension mismatch in electronic energy")
    return 0.5 * float(np.sum(d * (h + f)))


def scf_iterate(
    mol: Molecule,
    basis: BasisSet,
    cfg: SCFConfig,
    group: RankGroup | None = None,
    callback=None,
) -> SCFResult:
    """Run the SCF loop on this rank (collective across cfg-sized group).

    ``callback(iteration, f, d_new, orbital_energies)`` is a test hook
    invoked after each diagonalization on rank 0.
    """
    if group is None:
        group = solo_group()
    serial = cfg.strategy.kind is StrategyKind.REFERENCE_SERIAL
    t_start = time.perf_counter()
    s = overlap_matrix(basis)
    h = core_hamiltonian(basis, mol)
    x = inv_sqrt(s, cfg.overlap_floor)
    q = schwarz_table(basis)
    if mol.n_electrons % 2 != 0:
        raise ValueError("closed-shell SCF needs an even electron count")
    n_occ = mol.n_electrons // 2
    d = guess_density(h, x, n_occ)
    e_nuc = nuclear_repulsion(mol)

    time_fock = 0.0
    time_diag = 0.0
    it_times = []
    e_elec = 0.0
    rms = float("inf")
    converged = False
    iterations = 0
    w = np.zeros(basis.n_bf)

    for it in range(1, cfg.max_iter + 1):
        iterations = it
        it_mark = time.perf_counter()
        f2e = build_fock(
            d, basis, q, cfg.tau, cfg.strategy,
            None if serial else group, cfg.threads,
        )
        t_after_fock = time.perf_counter()
        f = h + f2e
        e_elec = electronic_energy(d, h, f)
        t_before_diag = time.perf_counter()
        w, c_prime = jacobi_eigh(transform(f, x))
        c = x @ c_prime
        t_after_diag = time.perf_counter()
        occ = c[:, :n_occ]
        d_new = 2.0 * occ @ occ.T
        d_new = 0.5 * (d_new + d_new.T)
        rms = float(np.sqrt(np.mean((d_new - d) ** 2)))
        d = (1.0 - cfg.damping) * d_new + cfg.damping * d if cfg.damping else d_new

        dt_fock = t_after_fock - it_mark
        dt_diag = t_after_diag - t_before_diag
        dt_other = (time.perf_counter() - it_mark) - dt_fock - dt_diag
        time_fock += dt_fock
        time_diag += dt_diag
        it_times.append({"fock_2e": dt_fock, "diag": dt_diag, "other": max(dt_other, 0.0)})
        if callback is not None and group.rank == 0:
            callback(it, f, d_new, w)
        if rms < cfg.conv_tol:
            converged = True
            break

    total_wall = time.perf_counter() - t_start
    time_other = max(total_wall - time_fock - time_diag, 0.0)
    return SCFResult(
        converged=converged,
        iterations=iterations,
        energy_total=e_elec + e_nuc,
        energy_electronic=e_elec,
        energy_nuclear=e_nuc,
        orbital_energies=w,
        rms_final=rms,
        time_fock=time_fock,
        time_diag=time_diag,
        time_other=time_other,
        iteration_times=tuple(it_times),
    )


def run_scf(mol: Molecule, basis: BasisSet, cfg: SCFConfig, callback=None) -> SCFResult:
    """Spawn cfg.ranks simulated ranks and run the SCF collectively."""
    if cfg.ranks == 1 or cfg.strategy.kind is StrategyKind.REFERENCE_SERIAL:
        return scf_iterate(mol, basis, cfg, solo_group(), callback)
    results = spawn(
        cfg.ranks, lambda rank, group: scf_iterate(mol, basis, cfg, group, callback)
    )
    return results[0]

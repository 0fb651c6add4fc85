"""Gaussian integral engine: Boys function, one-electron matrices, ERI
shell quartets, and Cauchy-Schwarz screening bounds.

The electron-repulsion path is McMurchie-Davidson (Hermite expansion plus
downward Boys recursion), which covers l <= 2 with a single scheme. All
operations are pure and reentrant; packed basis data and Schwarz tables are
immutable after construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels as k
from .chem import BasisSet, Molecule, Shell

PAIR_PREFACTOR_CUTOFF = 1e-16
DEFAULT_SCREEN_TAU = 1e-10
MAX_L = 2


@dataclass(frozen=True)
class BasisPack:
    """Flat array view of a BasisSet plus precomputed shell-pair data."""

    arrays: tuple
    n_shells: int
    n_bf: int
    n_pairs: int
    max_width: int


@dataclass(frozen=True)
class SchwarzTable:
    """Symmetric per-shell-pair bounds Q(i,j) = sqrt(max (ij|ij))."""

    q: np.ndarray
    q_max: float


def pack_basis(basis: BasisSet) -> BasisPack:
    """Pack shells into kernel arrays; cached on the basis set."""
    cached = basis._cache.get("pack")
    if cached is not None:
        return cached
    n_sh = basis.n_shells
    if any(sh.l > MAX_L for sh in basis.shells):
        raise ValueError("only angular momenta up to d are supported")
    sh_cx = np.array([sh.center[0] for sh in basis.shells])
    sh_cy = np.array([sh.center[1] for sh in basis.shells])
    sh_cz = np.array([sh.center[2] for sh in basis.shells])
    sh_l = np.array([sh.l for sh in basis.shells], dtype=np.int64)
    sh_off = np.array([sh.bf_offset for sh in basis.shells], dtype=np.int64)
    sh_w = np.array([sh.width for sh in basis.shells], dtype=np.int64)
    counts = np.array([sh.n_prim for sh in basis.shells], dtype=np.int64)
    sh_ps = np.zeros(n_sh, dtype=np.int64)
    sh_ps[1:] = np.cumsum(counts)[:-1]
    pr_a = np.concatenate([sh.exponents for sh in basis.shells])
    pr_c = np.concatenate([sh.coefficients for sh in basis.shells])

    # canonical (i >= j) shell-pair Gaussian-product data, pruned by prefactor
    n_pairs = n_sh * (n_sh + 1) // 2
    pp_start = np.zeros(n_pairs + 1, dtype=np.int64)
    chunks_p, chunks_x, chunks_y, chunks_z, chunks_k = [], [], [], [], []
    pos = 0
    for i in range(n_sh):
        si = basis.shells[i]
        for j in range(i + 1):
            sj = basis.shells[j]
            a = si.exponents[:, None]
            b = sj.exponents[None, :]
            p = a + b
            r2 = float(np.sum((si.center - sj.center) ** 2))
            ck = (si.coefficients[:, None] * sj.coefficients[None, :]) * np.exp(
                -a * b / p * r2
            )
            keep = np.abs(ck) * (np.pi / p) ** 1.5 >= PAIR_PREFACTOR_CUTOFF
            px = (a * si.center[0] + b * sj.center[0]) / p
            py = (a * si.center[1] + b * sj.center[1]) / p
            pz = (a * si.center[2] + b * sj.center[2]) / p
            chunks_p.append(p[keep])
            chunks_x.append(px[keep])
            chunks_y.append(py[keep])
            chunks_z.append(pz[keep])
            chunks_k.append(ck[keep])
            pos += int(keep.sum())
            pp_start[i * (i + 1) // 2 + j + 1] = pos
    pp_p = np.concatenate(chunks_p) if pos else np.zeros(0)
    pp_px = np.concatenate(chunks_x) if pos else np.zeros(0)
    pp_py = np.concatenate(chunks_y) if pos else np.zeros(0)
    pp_pz = np.concatenate(chunks_z) if pos else np.zeros(0)
    pp_ck = np.concatenate(chunks_k) if pos else np.zeros(0)

    partial = (
        sh_cx, sh_cy, sh_cz, sh_l, sh_off, sh_w, sh_ps, counts,
        pr_a, pr_c, pp_start, pp_p, pp_px, pp_py, pp_pz, pp_ck,
    )
    pp_q = np.zeros(pos)
    k.prim_schwarz_fill(pp_q, partial)
    # sort each pair's primitive products by descending bound so the kernels
    # can stop scanning at the screening threshold
    for pid in range(n_pairs):
        s, e = pp_start[pid], pp_start[pid + 1]
        if e - s > 1:
            order = np.argsort(-pp_q[s:e], kind="stable")
            for arr in (pp_p, pp_px, pp_py, pp_pz, pp_ck, pp_q):
                arr[s:e] = arr[s:e][order]
    pack = BasisPack(
        arrays=partial + (pp_q,),
        n_shells=n_sh,
        n_bf=basis.n_bf,
        n_pairs=n_pairs,
        max_width=basis.max_width,
    )
    basis._cache["pack"] = pack
    return pack


def boys(m: int, x: float) -> float:
    """Boys function F_m(x) = integral_0^1 t^(2m) exp(-x t^2) dt."""
    if not (0 <= m <= k.BOYS_MMAX):
        raise ValueError(f"boys order m={m} outside supported range 0..{k.BOYS_MMAX}")
    if not (x >= 0.0 and math.isfinite(x)):
        raise ValueError(f"boys argument must be finite and >= 0, got {x}")
    out = np.empty(m + 1)
    k.boys_fill(m, float(x), out)
    return float(out[m])


def _two_shell_pack(a: Shell, b: Shell) -> BasisPack:
    mini = BasisSet(
        shells=(
            Shell(0, a.l, a.center, a.exponents, a.coefficients, 0),
            Shell(1, b.l, b.center, b.exponents, b.coefficients, a.width),
        ),
        n_bf=a.width + b.width,
        shell_group_map=(0, 1),
        n_groups=2,
    )
    return pack_basis(mini)


def overlap_block(a: Shell, b: Shell) -> np.ndarray:
    pack = _two_shell_pack(a, b)
    s = np.empty((pack.n_bf, pack.n_bf))
    t = np.empty_like(s)
    k.build_overlap_kinetic(s, t, pack.arrays)
    return s[: a.width, a.width :].copy()

def kinetic_block(a: Shell, b: Shell) -> np.ndarray:
    pack = _two_shell_pack(a, b)
    s = np.empty((pack.n_bf, pack.n_bf))
    t = np.empty_like(s)
    k.build_overlap_kinetic(s, t, pack.arrays)
    return t[: a.width, a.width :].copy()


def nuclear_block(a: Shell, b: Shell, mol: Molecule) -> np.ndarray:
    pack = _two_shell_pack(a, b)
    v = np.empty((pack.n_bf, pack.n_bf))
    pos = mol.positions()
    k.build_nuclear(v, pack.arrays, mol.charges(), pos[:, 0].copy(), pos[:, 1].copy(), pos[:, 2].copy())
    return v[: a.width, a.width :].copy()


def overlap_matrix(basis: BasisSet) -> np.ndarray:
    pack = pack_basis(basis)
    s = np.empty((basis.n_bf, basis.n_bf))
    t = np.empty_like(s)
    k.build_overlap_kinetic(s, t, pack.arrays)
    return s


def kinetic_matrix(basis: BasisSet) -> np.ndarray:
    pack = pack_basis(basis)
    s = np.empty((basis.n_bf, basis.n_bf))
    t = np.empty_like(s)
    k.build_overlap_kinetic(s, t, pack.arrays)
    return t


def nuclear_matrix(basis: BasisSet, mol: Molecule) -> np.ndarray:
    pack = pack_basis(basis)
    v = np.empty((basis.n_bf, basis.n_bf))
    pos = mol.positions()
    k.build_nuclear(v, pack.arrays, mol.charges(), pos[:, 0].copy(), pos[:, 1].copy(), pos[:, 2].copy())
    return v


def eri_quartet(basis: BasisSet, i: int, j: int, k_: int, l: int) -> np.ndarray:
    """Cartesian ERI block (ij|kl); any shell-index order is computable."""
    pack = pack_basis(basis)
    for idx in (i, j, k_, l):
        if not (0 <= idx < pack.n_shells):
            raise IndexError(f"shell index {idx} out of range")
    block = np.zeros((6, 6, 6, 6))
    k.eri_quartet_generic(i, j, k_, l, pack.arrays, block)
    sh = basis.shells
    return block[: sh[i].width, : sh[j].width, : sh[k_].width, : sh[l].width].copy()


def schwarz_table(basis: BasisSet) -> SchwarzTable:
    pack = pack_basis(basis)
    q = np.empty((pack.n_shells, pack.n_shells))
    k.schwarz_fill(q, pack.arrays)
    return SchwarzTable(q=q, q_max=float(q.max()))


def is_screened(i: int, j: int, k_: int, l: int, table: SchwarzTable, tau: float) -> bool:
    """Quartet-level Cauchy-Schwarz test: skip when Q(i,j) Q(k,l) < tau."""
    if tau <= 0.0:
        raise ValueError("screening threshold must be positive")
    return bool(table.q[i, j] * table.q[k_, l] < tau)


def is_screened_pair(i: int, j: int, table: SchwarzTable, tau: float) -> bool:
    """Pair-level prescreen against the global maximum bound."""
    if tau <= 0.0:
        raise ValueError("screening threshold must be positive")
    return bool(table.q[i, j] * table.q_max < tau)

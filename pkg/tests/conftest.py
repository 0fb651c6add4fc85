import itertools
import json
import os

import numpy as np
import pytest

import fockforge as ff
from fockforge.chem import Shell, _normalize_contraction

DATA_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), "data")


def random_basis(seed, n_atoms=3, max_shells_per_atom=2, max_l=2, spread=2.2):
    """Synthetic normalized shell set on random centers (no molecule needed)."""
    r = np.random.default_rng(seed)
    shells = []
    off = 0
    for ai in range(n_atoms):
        pos = r.uniform(-spread, spread, 3)
        for _ in range(int(r.integers(1, max_shells_per_atom + 1))):
            l = int(r.integers(0, max_l + 1))
            npr = int(r.integers(1, 3))
            ex = np.sort(r.uniform(0.15, 3.0, npr))[::-1].copy()
            cf = r.uniform(0.3, 1.0, npr)
            cn = _normalize_contraction(l, ex, cf)
            shells.append(Shell(ai, l, pos, ex, cn, off))
            off += shells[-1].width
    return ff.BasisSet(tuple(shells), off, tuple(range(len(shells))), len(shells))


def random_density(basis, seed):
    r = np.random.default_rng(seed + 1000)
    d = r.standard_normal((basis.n_bf, basis.n_bf))
    return 0.5 * (d + d.T)


def dense_fock_oracle(basis, d):
    """Brute-force O(N^4) contraction over the full unsymmetrized ERI tensor."""
    n = basis.n_bf
    t = np.zeros((n, n, n, n))
    sh = basis.shells
    ns = basis.n_shells
    for i, j, k, l in itertools.product(range(ns), repeat=4):
        blk = ff.eri_quartet(basis, i, j, k, l)
        t[
            sh[i].bf_offset : sh[i].bf_offset + sh[i].width,
            sh[j].bf_offset : sh[j].bf_offset + sh[j].width,
            sh[k].bf_offset : sh[k].bf_offset + sh[k].width,
            sh[l].bf_offset : sh[l].bf_offset + sh[l].width,
        ] = blk
    jm = np.einsum("uvls,ls->uv", t, d)
    km = np.einsum("ulvs,ls->uv", t, d)
    return jm - 0.5 * km


def load_fixture(name):
    with open(os.path.join(DATA_DIR, name)) as fh:
        return json.load(fh)


def fixture_molecule(entry):
    sym2z = {"H": 1, "C": 6}
    atoms = tuple(
        ff.Atom(sym2z[s], np.array(p))
        for s, p in zip(entry["elements"], entry["geometry_bohr"])
    )
    return ff.Molecule(atoms)


@pytest.fixture(scope="session")
def h2():
    mol = ff.Molecule((ff.Atom(1, np.zeros(3)), ff.Atom(1, np.array([0.0, 0.0, 1.4]))))
    basis = ff.assign_basis(mol, ff.load_builtin_basis("sto3g"))
    return mol, basis


@pytest.fixture(scope="session")
def ch_system():
    """A bent 4-atom C2H2-ish system with no symmetry, STO-3G."""
    mol = ff.Molecule(
        (
            ff.Atom(6, np.array([0.0, 0.0, -1.1])),
            ff.Atom(6, np.array([0.1, 0.0, 1.2])),
            ff.Atom(1, np.array([0.0, 1.9, -2.1])),
            ff.Atom(1, np.array([-0.2, -1.8, 2.2])),
        )
    )
    basis = ff.assign_basis(mol, ff.load_builtin_basis("sto3g"))
    return mol, basis

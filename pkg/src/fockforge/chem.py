"""Molecular geometry, Gaussian basis sets, and graphene benchmark presets.

Geometry is stored in bohr internally; file input (XYZ, preset parameters)
is in angstrom. Basis sets are defined per element as groups of contracted
shells; an SP group expands into an S and a P shell sharing exponents but
is still counted as one group for dataset bookkeeping.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

ANGSTROM_PER_BOHR = 0.52917721067
BOHR_PER_ANGSTROM = 1.0 / ANGSTROM_PER_BOHR

MAX_ELEMENT = 18
_SYMBOLS = (
    "H", "He",
    "Li", "Be", "B", "C", "N", "O", "F", "Ne",
    "Na", "Mg", "Al", "Si", "P", "S", "Cl", "Ar",
)
SYMBOL_TO_Z = {s: z for z, s in enumerate(_SYMBOLS, start=1)}
Z_TO_SYMBOL = dict(enumerate(_SYMBOLS, start=1))

# Graphene presets: atoms per layer and zigzag column count, frozen so the
# bilayer atom totals reproduce the benchmark dataset sizes exactly
# (44, 120, 220, 356, 2016 atoms).
GRAPHENE_PRESETS = {
    "0.5nm": (22, 6),
    "1.0nm": (60, 10),
    "1.5nm": (110, 14),
    "2.0nm": (178, 18),
    "5.0nm": (1008, 42),
}

CC_BOND_ANGSTROM = 1.42
INTERLAYER_ANGSTROM = 3.35


class BasisParseError(ValueError):
    """Raised for malformed basis-format text; carries a line number."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class Atom:
    """One nucleus: atomic number and position in bohr."""

    element: int
    position: np.ndarray

    def __post_init__(self):
        if not (1 <= self.element <= MAX_ELEMENT):
            raise ValueError(f"unsupported element Z={self.element}")
        pos = np.asarray(self.position, dtype=float)
        if pos.shape != (3,) or not np.all(np.isfinite(pos)):
            raise ValueError("atom position must be a finite 3-vector")
        object.__setattr__(self, "position", pos)


@dataclass(frozen=True)
class Molecule:
    atoms: tuple[Atom, ...]
    charge: int = 0

    def __post_init__(self):
        atoms = tuple(self.atoms)
        if not atoms:
            raise ValueError("molecule needs at least one atom")
        object.__setattr__(self, "atoms", atoms)
        if self.n_electrons % 2 != 0:
            raise ValueError(
                f"odd electron count {self.n_electrons}: only closed shells supported"
            )

    @property
    def n_electrons(self) -> int:
        return sum(a.element for a in self.atoms) - self.charge

    @property
    def n_atoms(self) -> int:
        return len(self.atoms)

    def positions(self) -> np.ndarray:
        return np.array([a.position for a in self.atoms])

    def charges(self) -> np.ndarray:
        return np.array([float(a.element) for a in self.atoms])


@dataclass(frozen=True)
class Primitive:
    """Gaussian primitive; coefficient is the raw contraction weight."""

    exponent: float
    coefficient: float

    def __post_init__(self):
        if not (self.exponent > 0.0 and math.isfinite(self.exponent)):
            raise ValueError(f"non-positive exponent {self.exponent}")


@dataclass(frozen=True)
class Shell:
    """Contracted Cartesian shell on one atom.

    ``coefficients`` are fully normalized: primitive norms folded in and the
    contraction scaled to unit self-overlap of the (l,0,0) component.
    """

    atom_index: int
    l: int
    center: np.ndarray
    exponents: np.ndarray
    coefficients: np.ndarray
    bf_offset: int

    @property
    def width(self) -> int:
        return (self.l + 1) * (self.l + 2) // 2

    @property
    def n_prim(self) -> int:
        return len(self.exponents)


@dataclass(frozen=True)
class GroupDef:
    """One shell group from a basis file: S, P, D, or fused SP."""

    kind: str
    exponents: tuple[float, ...]
    coefficients: tuple[tuple[float, ...], ...]


@dataclass(frozen=True)
class BasisSpec:
    """Per-element shell-group definitions parsed from basis-format text."""

    elements: dict[int, tuple[GroupDef, ...]]


@dataclass(frozen=True)
class BasisSet:
    shells: tuple[Shell, ...]
    n_bf: int
    shell_group_map: tuple[int, ...]
    n_groups: int
    # engine-side packed arrays, built lazily and cached (see integrals)
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def n_shells(self) -> int:
        return len(self.shells)

    @property
    def max_width(self) -> int:
        return max(sh.width for sh in self.shells)


_GROUP_KINDS = {"S": (0,), "P": (1,), "D": (2,), "SP": (0, 1)}


def parse_basis(text: str) -> BasisSpec:
    """Parse basis-format text (``element X`` / shell groups / ``end`` blocks)."""
    elements: dict[int, tuple[GroupDef, ...]] = {}
    lines = text.splitlines()
    i = 0
    n = len(lines)

    def tokens_at(idx):
        line = lines[idx].split("#", 1)[0].strip()
        return line.split()

    while i < n:
        toks = tokens_at(i)
        if not toks:
            i += 1
            continue
        if toks[0].lower() != "element" or len(toks) != 2:
            raise BasisParseError(f"expected 'element <symbol>', got {lines[i]!r}", i + 1)
        sym = toks[1]
        if sym not in SYMBOL_TO_Z:
            raise BasisParseError(f"unknown element {sym!r}", i + 1)
        z = SYMBOL_TO_Z[sym]
        i += 1
        groups: list[GroupDef] = []
        while True:
            if i >= n:
                raise BasisParseError(f"unterminated block for element {sym}", n)
            toks = tokens_at(i)
            if not toks:
                i += 1
                continue
            if toks[0].lower() == "end":
                i += 1
                break
            if len(toks) != 2 or toks[0].upper() not in _GROUP_KINDS:
                raise BasisParseError(
                    f"expected '<S|P|D|SP> <nprim>' or 'end', got {lines[i]!r}", i + 1
                )
            kind = toks[0].upper()
            try:
                nprim = int(toks[1])
            except ValueError:
                raise BasisParseError(f"bad primitive count {toks[1]!r}", i + 1) from None
            if nprim < 1:
                raise BasisParseError("primitive count must be >= 1", i + 1)
            ncoef = 2 if kind == "SP" else 1
            i += 1
            exps: list[float] = []
            coefs: list[tuple[float, ...]] = []
            for _ in range(nprim):
                while i < n and not tokens_at(i):
                    i += 1
                if i >= n:
                    raise BasisParseError(f"missing primitive line in {kind} group", n)
                vals = tokens_at(i)
                if len(vals) != 1 + ncoef:
                    raise BasisParseError(
                        f"expected exponent and {ncoef} coefficient(s), got {lines[i]!r}",
                        i + 1,
                    )
                try:
                    nums = [float(v) for v in vals]
                except ValueError:
                    raise BasisParseError(f"bad number in {lines[i]!r}", i + 1) from None
                if nums[0] <= 0.0:
                    raise BasisParseError(f"non-positive exponent {nums[0]}", i + 1)
                exps.append(nums[0])
                coefs.append(tuple(nums[1:]))
                i += 1
            groups.append(GroupDef(kind, tuple(exps), tuple(coefs)))
        if not groups:
            raise BasisParseError(f"element {sym} has no shells", i)
        if z in elements:
            raise BasisParseError(f"duplicate block for element {sym}", i)
        elements[z] = tuple(groups)

    if not elements:
        raise BasisParseError("no element blocks found", 1)
    return BasisSpec(elements)


def load_builtin_basis(name: str) -> BasisSpec:
    """Load a basis shipped with the package (``631gd`` or ``sto3g``)."""
    fname = name.lower().replace("-", "").replace("(d)", "d").replace("*", "d")
    path = resources.files("fockforge.data").joinpath(f"{fname}.bas")
    try:
        text = path.read_text()
    except FileNotFoundError:
        raise ValueError(f"no builtin basis named {name!r}") from None
    return parse_basis(text)


def _double_factorial(n: int) -> float:
    out = 1.0
    while n > 1:
        out *= n
        n -= 2
    return out


def _primitive_norm(alpha: float, l: int) -> float:
    # unit self-overlap of the (l,0,0) Cartesian primitive
    return (
        (2.0 * alpha / math.pi) ** 0.75
        * (4.0 * alpha) ** (l / 2.0)
        / math.sqrt(_double_factorial(2 * l - 1))
    )


def _normalize_contraction(l: int, exps, coefs) -> np.ndarray:
    c = np.array([co * _primitive_norm(a, l) for a, co in zip(exps, coefs)])
    a = np.asarray(exps, dtype=float)
    gamma = a[:, None] + a[None, :]
    # self-overlap of the contracted (l,0,0) component
    s = (
        _double_factorial(2 * l - 1)
        / (2.0 * gamma) ** l
        * (math.pi / gamma) ** 1.5
    )
    norm2 = float(c @ s @ c)
    if norm2 <= 0.0:
        raise ValueError("contraction has non-positive self-overlap")
    return c / math.sqrt(norm2)


def assign_basis(mol: Molecule, spec: BasisSpec) -> BasisSet:
    """Expand a BasisSpec over a molecule into a concrete shell list.

    Shells are ordered by atom then group; SP groups expand to S then P.
    """
    shells: list[Shell] = []
    group_map: list[int] = []
    group_id = 0
    offset = 0
    for ai, atom in enumerate(mol.atoms):
        if atom.element not in spec.elements:
            raise ValueError(
                f"element {Z_TO_SYMBOL[atom.element]} (atom {ai}) missing from basis spec"
            )
        for gdef in spec.elements[atom.element]:
            for which, l in enumerate(_GROUP_KINDS[gdef.kind]):
                raw = [c[which] for c in gdef.coefficients]
                coefs = _normalize_contraction(l, gdef.exponents, raw)
                sh = Shell(
                    atom_index=ai,
                    l=l,
                    center=atom.position,
                    exponents=np.asarray(gdef.exponents, dtype=float),
                    coefficients=coefs,
                    bf_offset=offset,
                )
                shells.append(sh)
                group_map.append(group_id)
                offset += sh.width
            group_id += 1
    return BasisSet(
        shells=tuple(shells),
        n_bf=offset,
        shell_group_map=tuple(group_map),
        n_groups=group_id,
    )


def count_report(basis: BasisSet) -> dict:
    """Dataset size summary; SP-derived shell pairs count as one group."""
    return {
        "atoms": len({sh.atom_index for sh in basis.shells}),
        "shell_groups": basis.n_groups,
        "internal_shells": basis.n_shells,
        "n_bf": basis.n_bf,
    }


def nuclear_repulsion(mol: Molecule) -> float:
    """Point-charge repulsion energy, hartree."""
    e = 0.0
    pos = mol.positions()
    z = mol.charges()
    for i in range(mol.n_atoms):
        for j in range(i):
            r = float(np.linalg.norm(pos[i] - pos[j]))
            if r == 0.0:
                raise ValueError(f"atoms {j} and {i} are coincident")
            e += z[i] * z[j] / r
    return e


def _graphene_layer(n_atoms: int, n_cols: int, bond: float) -> np.ndarray:
    """Zigzag-row honeycomb patch with exactly n_atoms sites (x,y in bohr)."""
    dx = math.sqrt(3.0) / 2.0 * bond
    pts = np.empty((n_atoms, 2))
    k = 0
    r = 0
    while k < n_atoms:
        y0 = r * 1.5 * bond
        for m in range(n_cols):
            if k == n_atoms:
                break
            y = y0 + (0.5 * bond if (m + r) % 2 == 0 else 0.0)
            pts[k] = (m * dx, y)
            k += 1
        r += 1
    return pts


def build_graphene_bilayer(
    preset: str | None = None,
    *,
    atoms_per_layer: int | None = None,
    columns: int | None = None,
    bond_angstrom: float = CC_BOND_ANGSTROM,
    interlayer_angstrom: float = INTERLAYER_ANGSTROM,
) -> Molecule:
    """Two AB-stacked honeycomb carbon patches.

    Either a named preset or explicit patch parameters. Preset atom counts
    are frozen to the benchmark dataset table.
    """
    if preset is not None:
        if preset not in GRAPHENE_PRESETS:
            raise ValueError(
                f"unknown preset {preset!r}; choose from {sorted(GRAPHENE_PRESETS)}"
            )
        atoms_per_layer, columns = GRAPHENE_PRESETS[preset]
    if atoms_per_layer is None or atoms_per_layer < 1:
        raise ValueError("atoms_per_layer must be >= 1")
    if columns is None:
        columns = max(1, round(math.sqrt(math.sqrt(3.0) * atoms_per_layer)))
    bond = bond_angstrom * BOHR_PER_ANGSTROM
    layer = _graphene_layer(atoms_per_layer, columns, bond)
    z2 = interlayer_angstrom * BOHR_PER_ANGSTROM
    atoms = [Atom(6, np.array([x, y, 0.0])) for x, y in layer]
    # AB stacking: second layer offset by one bond vector in-plane
    atoms += [Atom(6, np.array([x, y + bond, z2])) for x, y in layer]
    return Molecule(tuple(atoms))


def parse_xyz(text: str) -> Molecule:
    """Parse XYZ text (count line, comment line, ``El x y z`` in angstrom)."""
    lines = text.splitlines()
    if not lines:
        raise ValueError("empty XYZ input")
    try:
        count = int(lines[0].split()[0])
    except (IndexError, ValueError):
        raise ValueError("XYZ line 1 must be the atom count") from None
    body = lines[2 : 2 + count]
    if len(body) < count:
        raise ValueError(f"XYZ declares {count} atoms but has {len(body)}")
    atoms = []
    for ln in body:
        parts = ln.split()
        if len(parts) < 4:
            raise ValueError(f"bad XYZ atom line: {ln!r}")
        sym = parts[0].capitalize()
        if sym not in SYMBOL_TO_Z:
            raise ValueError(f"unknown element {parts[0]!r}")
        xyz = np.array([float(v) for v in parts[1:4]]) * BOHR_PER_ANGSTROM
        atoms.append(Atom(SYMBOL_TO_Z[sym], xyz))
    return Molecule(tuple(atoms))


def read_xyz(path) -> Molecule:
    with open(path) as fh:
        return parse_xyz(fh.read())

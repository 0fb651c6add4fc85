"""Benchmark harness: strategy/rank/thread sweeps, wall-clock timing,
the memory-footprint estimator, and machine-readable reports.

All timing uses wall-clock time (time.perf_counter); CPU-time clocks lie
for multithreaded code. Sweep cells execute strictly one at a time.
"""

from __future__ import annotations

import csv
import io
import json
import platform
import statistics
import time
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .chem import (
    Atom,
    BasisSpec,
    Molecule,
    assign_basis,
    build_graphene_bilayer,
    count_report,
    load_builtin_basis,
)
from .fock import Schedule, Strategy, StrategyKind
from .scf import SCFConfig, SCFResult, run_scf

ELEMENT_BYTES = 8

_KIND_ALIASES = {
    "replicated": StrategyKind.REPLICATED,
    "mpi": StrategyKind.REPLICATED,
    "private-fock": StrategyKind.PRIVATE_FOCK,
    "private": StrategyKind.PRIVATE_FOCK,
    "shared-fock": StrategyKind.SHARED_FOCK,
    "shared": StrategyKind.SHARED_FOCK,
    "reference": StrategyKind.REFERENCE_SERIAL,
}


def strategy_kind(name) -> StrategyKind:
    if isinstance(name, StrategyKind):
        return name
    try:
        return _KIND_ALIASES[str(name).lower()]
    except KeyError:
        raise ValueError(
            f"unknown strategy {name!r}; choose from {sorted(_KIND_ALIASES)}"
        ) from None


def estimate_memory(strategy, n_bf: int, ranks_per_node: int, threads: int) -> int:
    """Asymptotic footprint in bytes of the replicated N x N structures.

    Element counts: 5/2 N^2 R for the rank-replicated build, (2+T) N^2 R for
    private-Fock threading, 7/2 N^2 R for the shared-Fock build; 8 bytes per
    element. Exact integer arithmetic.
    """
    if n_bf < 1 or ranks_per_node < 1 or threads < 1:
        raise ValueError("estimate_memory needs positive inputs")
    kind = strategy_kind(strategy)
    n2r = n_bf * n_bf * ranks_per_node
    if kind in (StrategyKind.REPLICATED, StrategyKind.REFERENCE_SERIAL):
        return 5 * n2r * ELEMENT_BYTES // 2
    if kind is StrategyKind.PRIVATE_FOCK:
        return (2 + threads) * n2r * ELEMENT_BYTES
    return 7 * n2r * ELEMENT_BYTES // 2


@dataclass(frozen=True)
class BenchConfig:
    molecule: Molecule
    basis_spec: BasisSpec
    strategies: tuple = (StrategyKind.SHARED_FOCK,)
    ranks_list: tuple = (1,)
    threads_list: tuple = (1,)
    schedule: Schedule = Schedule.DYNAMIC
    chunk_size: int = 0
    tau: float = 1e-10
    conv_tol: float = 1e-8
    max_iter: int = 100
    damping: float = 0.0
    repetitions: int = 3
    warmup: bool = True

    def __post_init__(self):
        if not self.strategies or not self.ranks_list or not self.threads_list:
            raise ValueError("sweep lists must be non-empty")
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")


@dataclass
class BenchReport:
    meta: dict
    cells: list = field(default_factory=list)

    @property
    def any_failed(self) -> bool:
        return any(c["error"] is not None or not c["converged"] for c in self.cells)


def _warmup_jit():
    """Compile the hot kernels on a two-atom toy before timing anything."""
    mol = Molecule((Atom(6, np.zeros(3)), Atom(6, np.array([0.0, 0.0, 2.6]))))
    basis = assign_basis(mol, load_builtin_basis("sto3g"))
    for kind in (
        StrategyKind.REFERENCE_SERIAL,
        StrategyKind.REPLICATED,
        StrategyKind.PRIVATE_FOCK,
        StrategyKind.SHARED_FOCK,
    ):
        threads = 1 if kind is StrategyKind.REFERENCE_SERIAL else 2
        cfg = SCFConfig(max_iter=1, strategy=Strategy(kind), ranks=1, threads=threads)
        run_scf(mol, basis, cfg)


def run_benchmark(cfg: BenchConfig) -> BenchReport:
    basis = assign_basis(cfg.molecule, cfg.basis_spec)
    report = BenchReport(
        meta={
            "version": __version__,
            "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S"),
            "host": platform.node(),
            "n_bf": basis.n_bf,
            "n_atoms": cfg.molecule.n_atoms,
        }
    )
    if cfg.warmup:
        _warmup_jit()
    for kind_like in cfg.strategies:
        kind = strategy_kind(kind_like)
        for ranks in cfg.ranks_list:
            for threads in cfg.threads_list:
                cell = {
                    "strategy": kind.value,
                    "ranks": int(ranks),
                    "threads": int(threads),
                    "schedule": cfg.schedule.value,
                    "wall_total_s": None,
                    "wall_fock_s": None,
                    "wall_diag_s": None,
                    "iterations": None,
                    "converged": False,
                    "energy_hartree": None,
                    "rms_final": None,
                    "est_bytes": estimate_memory(kind, basis.n_bf, ranks, threads),
                    "speedup": None,
                    "efficiency_pct": None,
                    "error": None,
                }
                try:
                    runs = []
                    for _ in range(cfg.repetitions):
                        scf_cfg = SCFConfig(
                            conv_tol=cfg.conv_tol,
                            max_iter=cfg.max_iter,
                            tau=cfg.tau,
                            strategy=Strategy(kind, cfg.schedule, cfg.chunk_size),
                            ranks=ranks,
                            threads=threads,
                            damping=cfg.damping,
                        )
                        t0 = time.perf_counter()
                        res = run_scf(cfg.molecule, basis, scf_cfg)
                        runs.append((time.perf_counter() - t0, res))
                    walls = sorted(w for w, _ in runs)
                    med_wall = statistics.median(walls)
                    res = min(runs, key=lambda wr: abs(wr[0] - med_wall))[1]
                    cell.update(
                        wall_total_s=med_wall,
                        wall_fock_s=res.time_fock,
                        wall_diag_s=res.time_diag,
                        iterations=res.iterations,
                        converged=res.converged,
                        energy_hartree=res.energy_total,
                        rms_final=res.rms_final,
                    )
                except Exception as exc:  # record and keep sweeping
                    cell["error"] = f"{type(exc).__name__}: {exc}"
                report.cells.append(cell)
    _annotate_efficiency(report.cells)
    return report


def _annotate_efficiency(cells):
    timed = [c for c in cells if c["wall_total_s"] is not None]
    if not timed:
        return
    base = min(timed, key=lambda c: c["ranks"] * c["threads"])
    t_base = base["wall_total_s"]
    p_base = base["ranks"] * base["threads"]
    for c in timed:
        p = c["ranks"] * c["threads"]
        if c["wall_total_s"] > 0:
            c["speedup"] = t_base / c["wall_total_s"]
            c["efficiency_pct"] = 100.0 * t_base * p_base / (c["wall_total_s"] * p)


_CSV_COLUMNS = [
    "strategy", "ranks", "threads", "schedule", "wall_total_s", "wall_fock_s",
    "wall_diag_s", "iterations", "converged", "energy_hartree", "rms_final",
    "est_bytes", "speedup", "efficiency_pct", "error",
]


def emit_report(report: BenchReport, fmt: str = "json") -> str:
    if fmt == "json":
        return json.dumps({"meta": report.meta, "cells": report.cells}, indent=2)
    if fmt == "csv":
        out = io.StringIO()
        writer = csv.DictWriter(out, fieldnames=_CSV_COLUMNS)
        writer.writeheader()
        for c in report.cells:
            writer.writerow({k: c.get(k) for k in _CSV_COLUMNS})
        return out.getvalue()
    if fmt == "table":
        lines = [
            f"fockforge {report.meta['version']}  host={report.meta['host']}  "
            f"n_bf={report.meta.get('n_bf')}  atoms={report.meta.get('n_atoms')}",
            f"{'strategy':>13} {'ranks':>5} {'thr':>4} {'total(s)':>10} "
            f"{'fock(s)':>10} {'iters':>5} {'energy(Ha)':>16} {'eff%':>7} {'mem':>10}",
        ]
        for c in report.cells:
            if c["error"] is not None:
                lines.append(
                    f"{c['strategy']:>13} {c['ranks']:>5} {c['threads']:>4} "
                    f"ERROR: {c['error']}"
                )
                continue
            eff = f"{c['efficiency_pct']:.1f}" if c["efficiency_pct"] else "-"
            lines.append(
                f"{c['strategy']:>13} {c['ranks']:>5} {c['threads']:>4} "
                f"{c['wall_total_s']:>10.3f} {c['wall_fock_s']:>10.3f} "
                f"{c['iterations']:>5} {c['energy_hartree']:>16.9f} {eff:>7} "
                f"{_fmt_bytes(c['est_bytes']):>10}"
            )
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown report format {fmt!r}")


def _fmt_bytes(b: int) -> str:
    if b >= 1 << 30:
        return f"{b / (1 << 30):.2f}GiB"
    if b >= 1 << 20:
        return f"{b / (1 << 20):.2f}MiB"
    if b >= 1 << 10:
        return f"{b / (1 << 10):.2f}KiB"
    return f"{b}B"


def preset_molecule(name: str) -> Molecule:
    return build_graphene_bilayer(name)


def preset_info(name: str, basis_spec: BasisSpec | None = None) -> dict:
    mol = preset_molecule(name)
    spec = basis_spec if basis_spec is not None else load_builtin_basis("631gd")
    return count_report(assign_basis(mol, spec))

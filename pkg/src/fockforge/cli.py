"""Command-line harness.

Exit codes: 0 success, 1 usage error, 2 SCF non-convergence in any sweep
cell (the report is still emitted), 3 internal error.
"""

from __future__ import annotations

import sys

import click

from .bench import (
    BenchConfig,
    emit_report,
    estimate_memory,
    preset_molecule,
    run_benchmark,
    strategy_kind,
)
from .chem import (
    GRAPHENE_PRESETS,
    assign_basis,
    count_report,
    load_builtin_basis,
    parse_basis,
    read_xyz,
)
from .fock import Schedule

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NOT_CONVERGED = 2
EXIT_INTERNAL = 3


def _load_system(system, geometry):
    if (system is None) == (geometry is None):
        raise click.UsageError("give exactly one of --system or --geometry")
    if system is not None:
        if system not in GRAPHENE_PRESETS:
            raise click.UsageError(
                f"unknown system {system!r}; presets: {', '.join(sorted(GRAPHENE_PRESETS))}"
            )
        return preset_molecule(system)
    return read_xyz(geometry)


def _load_basis(basis):
    if basis is None:
        return load_builtin_basis("631gd")
    try:
        return load_builtin_basis(basis)
    except ValueError:
        with open(basis) as fh:
            return parse_basis(fh.read())


def _int_list(text):
    try:
        return tuple(int(v) for v in str(text).split(","))
    except ValueError:
        raise click.UsageError(f"expected comma-separated integers, got {text!r}")


@click.group()
def cli():
    """Hartree-Fock Fock-build strategy benchmark."""


@cli.command()
@click.option("--system", default=None, help="graphene preset name (e.g. 0.5nm)")
@click.option("--geometry", default=None, type=click.Path(exists=True), help="XYZ file")
@click.option("--basis", default=None, help="builtin basis name or basis file path")
@click.option("--strategy", default="shared-fock", help="comma list: replicated,private-fock,shared-fock,reference")
@click.option("--ranks", default="1", help="comma list of simulated rank counts")
@click.option("--threads", default="1", help="comma list of thread counts per rank")
@click.option("--schedule", default="dynamic", type=click.Choice(["dynamic", "static"]))
@click.option("--chunk", default=0, type=int, help="dynamic chunk size (0 = auto)")
@click.option("--screen", default=1e-10, type=float, help="Schwarz threshold tau")
@click.option("--conv", default=1e-8, type=float, help="RMS density convergence")
@click.option("--max-iter", default=100, type=int)
@click.option("--damping", default=0.0, type=float)
@click.option("--reps", default=3, type=int, help="repetitions per cell (median reported)")
@click.option("--no-warmup", is_flag=True, help="skip the JIT warmup pass")
@click.option("--format", "fmt", default="table", type=click.Choice(["json", "csv", "table"]))
@click.option("--out", default=None, type=click.Path(), help="write report to file")
def run(system, geometry, basis, strategy, ranks, threads, schedule, chunk,
        screen, conv, max_iter, damping, reps, no_warmup, fmt, out):
    """Run an SCF benchmark sweep and emit a report."""
    mol = _load_system(system, geometry)
    spec = _load_basis(basis)
    kinds = tuple(strategy_kind(s) for s in strategy.split(","))
    cfg = BenchConfig(
        molecule=mol,
        basis_spec=spec,
        strategies=kinds,
        ranks_list=_int_list(ranks),
        threads_list=_int_list(threads),
        schedule=Schedule.DYNAMIC if schedule == "dynamic" else Schedule.STATIC_DETERMINISTIC,
        chunk_size=chunk,
        tau=screen,
        conv_tol=conv,
        max_iter=max_iter,
        damping=damping,
        repetitions=reps,
        warmup=not no_warmup,
    )
    report = run_benchmark(cfg)
    text = emit_report(report, fmt)
    if out:
        with open(out, "w") as fh:
            fh.write(text)
        click.echo(f"report written to {out}")
    else:
        click.echo(text, nl=False)
    if report.any_failed:
        sys.exit(EXIT_NOT_CONVERGED)


@cli.command()
@click.option("--strategy", required=True)
@click.option("--nbf", required=True, type=int)
@click.option("--ranks", required=True, type=int, help="MPI ranks per node")
@click.option("--threads", default=1, type=int)
def mem(strategy, nbf, ranks, threads):
    """Estimate the replicated-structure memory footprint."""
    try:
        kind = strategy_kind(strategy)
    except ValueError as exc:
        raise click.UsageError(str(exc))
    b = estimate_memory(kind, nbf, ranks, threads)
    click.echo(f"{b} bytes ({b / 1e9:.3f} GB)")


@cli.command()
@click.option("--system", default=None)
@click.option("--geometry", default=None, type=click.Path(exists=True))
@click.option("--basis", default=None)
def info(system, geometry, basis):
    """Print dataset size counts for a system."""
    mol = _load_system(system, geometry)
    spec = _load_basis(basis)
    rep = count_report(assign_basis(mol, spec))
    for key in ("atoms", "shell_groups", "internal_shells", "n_bf"):
        click.echo(f"{key:>16}: {rep[key]}")


def main(argv=None):
    try:
        cli.main(args=argv, standalone_mode=False)
        return EXIT_OK
    except SystemExit as exc:  # raised by explicit sys.exit above
        return int(exc.code or 0)
    except (click.UsageError, click.BadParameter) as exc:
        click.echo(f"usage error: {exc.format_message()}", err=True)
        return EXIT_USAGE
    except click.Abort:
        return EXIT_USAGE
    except Exception as exc:  # pragma: no cover - defensive
        click.echo(f"internal error: {type(exc).__name__}: {exc}", err=True)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())

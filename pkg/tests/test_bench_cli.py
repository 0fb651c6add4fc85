import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import fockforge as ff
from fockforge.bench import (
    BenchConfig,
    BenchReport,
    _CSV_COLUMNS,
    emit_report,
    estimate_memory,
    run_benchmark,
    strategy_kind,
)
from fockforge.cli import EXIT_NOT_CONVERGED, EXIT_OK, EXIT_USAGE, main
from fockforge.fock import StrategyKind


class TestEstimateMemory:
    def test_shared_fock_fixture(self):
        # 7/2 * 660^2 * 4 * 8 bytes
        assert estimate_memory(StrategyKind.SHARED_FOCK, 660, 4, 1) == 48_787_200

    def test_private_fock_fixture(self):
        # (2 + 64) * 660^2 * 4 * 8 bytes
        assert estimate_memory(StrategyKind.PRIVATE_FOCK, 660, 4, 64) == 919_987_200

    def test_replicated_fixture(self):
        # 5/2 * 660^2 * 4 * 8 bytes
        assert estimate_memory(StrategyKind.REPLICATED, 660, 4, 1) == 34_848_000

    @settings(max_examples=60, deadline=None)
    @given(
        st.integers(min_value=1, max_value=5000),
        st.integers(min_value=1, max_value=64),
        st.integers(min_value=1, max_value=256),
        st.integers(min_value=1, max_value=256),
    )
    def test_shared_independent_of_threads(self, n, r, t1, t2):
        a = estimate_memory("shared-fock", n, r, t1)
        b = estimate_memory("shared-fock", n, r, t2)
        assert a == b == 28 * n * n * r

    @settings(max_examples=60, deadline=None)
    @given(
        st.integers(min_value=1, max_value=5000),
        st.integers(min_value=1, max_value=64),
        st.integers(min_value=1, max_value=255),
    )
    def test_private_affine_in_threads(self, n, r, t):
        slope = estimate_memory("private-fock", n, r, t + 1) - estimate_memory(
            "private-fock", n, r, t
        )
        assert slope == n * n * r * 8

    def test_name_aliases(self):
        assert strategy_kind("replicated") is StrategyKind.REPLICATED
        assert strategy_kind("SHARED-FOCK") is StrategyKind.SHARED_FOCK
        with pytest.raises(ValueError, match="unknown strategy"):
            strategy_kind("bogus")

    def test_positive_inputs_required(self):
        with pytest.raises(ValueError):
            estimate_memory("shared-fock", 0, 1, 1)


class TestEmitReport:
    def empty(self):
        return BenchReport(meta={"version": "x", "timestamp": "t", "host": "h"})

    def test_empty_json(self):
        doc = json.loads(emit_report(self.empty(), "json"))
        assert doc["cells"] == []

    def test_empty_csv_header_only(self):
        text = emit_report(self.empty(), "csv")
        lines = text.strip().splitlines()
        assert len(lines) == 1
        assert lines[0].split(",") == _CSV_COLUMNS

    def test_json_roundtrip_schema(self, tiny_report):
        doc = json.loads(emit_report(tiny_report, "json"))
        assert set(doc) == {"meta", "cells"}
        for key in ("version", "timestamp", "host"):
            assert key in doc["meta"]
        for cell in doc["cells"]:
            for key in (
                "strategy", "ranks", "threads", "schedule", "wall_total_s",
                "wall_fock_s", "wall_diag_s", "iterations", "converged",
                "energy_hartree", "rms_final", "est_bytes", "speedup",
                "efficiency_pct",
            ):
                assert key in cell

    def test_csv_fixed_columns(self, tiny_report):
        lines = emit_report(tiny_report, "csv").strip().splitlines()
        for line in lines:
            assert line.count(",") == len(_CSV_COLUMNS) - 1

    def test_table_smoke(self, tiny_report):
        text = emit_report(tiny_report, "table")
        assert "strategy" in text and "energy" in text

    def test_unknown_format(self):
        with pytest.raises(ValueError):
            emit_report(self.empty(), "yaml")


@pytest.fixture(scope="module")
def tiny_report(h2_module):
    mol, spec = h2_module
    cfg = BenchConfig(
        molecule=mol,
        basis_spec=spec,
        strategies=("reference", "shared-fock"),
        ranks_list=(1,),
        threads_list=(1, 2),
        repetitions=1,
        warmup=False,
    )
    return run_benchmark(cfg)


@pytest.fixture(scope="module")
def h2_module():
    mol = ff.Molecule((ff.Atom(1, np.zeros(3)), ff.Atom(1, np.array([0.0, 0.0, 1.4]))))
    return mol, ff.load_builtin_basis("sto3g")


class TestRunBenchmark:
    def test_baseline_efficiency_is_100(self, tiny_report):
        base = min(
            (c for c in tiny_report.cells if c["wall_total_s"] is not None),
            key=lambda c: c["ranks"] * c["threads"],
        )
        assert base["efficiency_pct"] == pytest.approx(100.0)
        assert base["speedup"] == pytest.approx(1.0)

    def test_energy_identical_across_cells(self, tiny_report):
        energies = [c["energy_hartree"] for c in tiny_report.cells if c["error"] is None]
        assert max(energies) - min(energies) <= 1e-9

    def test_wall_split_within_total(self, tiny_report):
        for c in tiny_report.cells:
            if c["error"] is None:
                assert c["wall_fock_s"] + c["wall_diag_s"] <= c["wall_total_s"] * 1.05

    def test_cells_complete(self, tiny_report):
        assert len(tiny_report.cells) == 4
        assert not tiny_report.any_failed

    def test_failure_recorded_and_sweep_continues(self, h2_module):
        mol, spec = h2_module
        cfg = BenchConfig(
            molecule=mol,
            basis_spec=spec,
            strategies=("shared-fock",),
            ranks_list=(1,),
            threads_list=(200, 1),  # 200 exceeds the team limit -> cell error
            repetitions=1,
            warmup=False,
        )
        rep = run_benchmark(cfg)
        assert rep.cells[0]["error"] is not None
        assert rep.cells[1]["error"] is None
        assert rep.any_failed

    def test_sweep_lists_validated(self, h2_module):
        mol, spec = h2_module
        with pytest.raises(ValueError):
            BenchConfig(molecule=mol, basis_spec=spec, strategies=())


class TestCli:
    def test_info_preset(self, capsys):
        assert main(["info", "--system", "0.5nm"]) == EXIT_OK
        out = capsys.readouterr().out
        assert "660" in out and "176" in out

    def test_mem(self, capsys):
        code = main(["mem", "--strategy", "private-fock", "--nbf", "1800",
                     "--ranks", "4", "--threads", "64"])
        assert code == EXIT_OK
        assert str((2 + 64) * 1800 * 1800 * 4 * 8) in capsys.readouterr().out

    def test_run_json_report(self, tmp_path, capsys):
        xyz = tmp_path / "h2.xyz"
        xyz.write_text("2\nh2\nH 0 0 0\nH 0 0 0.74\n")
        out = tmp_path / "report.json"
        code = main([
            "run", "--geometry", str(xyz), "--basis", "sto3g",
            "--strategy", "reference,shared-fock", "--ranks", "1",
            "--threads", "1", "--reps", "1", "--no-warmup",
            "--format", "json", "--out", str(out),
        ])
        assert code == EXIT_OK
        doc = json.loads(out.read_text())
        assert len(doc["cells"]) == 2
        assert all(c["converged"] for c in doc["cells"])

    def test_usage_error_unknown_system(self):
        assert main(["info", "--system", "9nm"]) == EXIT_USAGE

    def test_usage_error_both_sources(self, tmp_path):
        xyz = tmp_path / "a.xyz"
        xyz.write_text("1\nx\nHe 0 0 0\n")
        assert main(["info", "--system", "0.5nm", "--geometry", str(xyz)]) == EXIT_USAGE

    def test_usage_error_bad_strategy(self, tmp_path):
        xyz = tmp_path / "h2.xyz"
        xyz.write_text("2\nh2\nH 0 0 0\nH 0 0 0.74\n")
        assert main(["run", "--geometry", str(xyz), "--strategy", "nope",
                     "--no-warmup"]) == EXIT_USAGE

    def test_nonconvergence_exit_code(self, tmp_path):
        xyz = tmp_path / "h4.xyz"
        xyz.write_text("4\nchain\nH 0 0 0\nH 0 0 0.9\nH 0 0 1.8\nH 0 0 2.7\n")
        code = main([
            "run", "--geometry", str(xyz), "--basis", "sto3g",
            "--strategy", "reference", "--ranks", "1", "--threads", "1",
            "--max-iter", "2", "--conv", "1e-12", "--reps", "1", "--no-warmup",
            "--format", "json", "--out", str(tmp_path / "r.json"),
        ])
        assert code == EXIT_NOT_CONVERGED
        doc = json.loads((tmp_path / "r.json").read_text())
        assert doc["cells"][0]["converged"] is False

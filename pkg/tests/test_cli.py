"""CLI behavior: exit codes, report determinism, explain traces."""

import json
import subprocess
import sys
from pathlib import Path

import pytest

from tilesynth.cli import main

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"

ALL_FIXTURES = [
    "gemm_sample.prog",
    "flash_pair.prog",
    "flash_conflict.prog",
    "mixed_int4.prog",
]


def run_cli(args):
    return main([str(a) for a in args])


def test_sample_run_succeeds(capsys):
    code = run_cli(["--program", FIXTURES / "gemm_sample.prog", "--format", "text"])
    out = capsys.readouterr().out
    assert code == 0
    assert "best candidate" in out
    assert "sc:" in out


def test_json_report_content(tmp_path):
    report_path = tmp_path / "r.json"
    code = run_cli(
        [
            "--program", FIXTURES / "gemm_sample.prog",
            "--format", "json", "--report", report_path,
        ]
    )
    assert code == 0
    report = json.loads(report_path.read_text())
    assert report["version"] == 1
    assert report["arch"] == "sm80"
    best = report["best"]
    assert best["total_cycles"] > 0
    widths = [c["vector_bytes"] for c in best["copies"]]
    assert max(widths) == 16
    assert "sc" in best["buffers"]


@pytest.mark.parametrize("fixture", ALL_FIXTURES)
def test_reports_are_byte_identical(tmp_path, fixture):
    paths = [tmp_path / "a.json", tmp_path / "b.json"]
    for p in paths:
        code = run_cli(
            [
                "--program", FIXTURES / fixture,
                "--format", "json", "--report", p,
            ]
        )
        assert code == 0
    assert paths[0].read_bytes() == paths[1].read_bytes()


def test_empty_program_is_vacuous_success(tmp_path, capsys):
    empty = tmp_path / "empty.prog"
    empty.write_text("# nothing to synthesize\n")
    code = run_cli(["--program", empty, "--format", "json"])
    out = capsys.readouterr().out
    assert code == 0
    report = json.loads(out)
    assert report["program"]["ops"] == 0
    assert report["candidates"]["count"] == 0


def test_malformed_program_exits_1(tmp_path, capsys):
    bad = tmp_path / "bad.prog"
    bad.write_text("x = register_tensor float16 (4,4)\ncopy x nope\n")
    code = run_cli(["--program", bad])
    err = capsys.readouterr().err
    assert code == 1
    assert "line 2" in err


def test_missing_program_exits_2(capsys):
    code = run_cli(["--program", "/nonexistent/path.prog"])
    assert code == 2


def test_missing_catalog_exits_2(capsys):
    code = run_cli(
        ["--program", FIXTURES / "gemm_sample.prog", "--catalog", "/nonexistent.cat"]
    )
    assert code == 2


def test_bad_flag_exits_2():
    proc = subprocess.run(
        [sys.executable, "-m", "tilesynth.cli", "--frobnicate"],
        capture_output=True,
    )
    assert proc.returncode == 2


def test_validation_failure_exits_1(tmp_path, capsys):
    bad = tmp_path / "bad.prog"
    bad.write_text(
        "a = register_tensor float16 (4,4)\n"
        "b = register_tensor float16 (4,8)\n"
        "g = global_view buf float16 (4,8):(8,1)\n"
        "copy a b\n"
        "copy b g\n"
    )
    code = run_cli(["--program", bad])
    assert code == 1
    assert "shape mismatch" in capsys.readouterr().err


def test_explain_gemm(capsys):
    code = run_cli(["--program", FIXTURES / "gemm_sample.prog", "--explain", "2"])
    out = capsys.readouterr().out
    assert code == 0
    assert "gemm" in out
    assert out.count("[ok]") == 3  # three dimension equations, all holding


def test_explain_copy_shows_chain(capsys):
    code = run_cli(["--program", FIXTURES / "gemm_sample.prog", "--explain", "4"])
    out = capsys.readouterr().out
    assert code == 0
    assert "instruction" in out and "constraint" in out
    assert "materialized" in out


def test_explain_reduce_and_cast(capsys):
    code = run_cli(["--program", FIXTURES / "flash_pair.prog", "--explain", "3"])
    out = capsys.readouterr().out
    assert code == 0
    assert "collapse dimension 1" in out
    code = run_cli(["--program", FIXTURES / "flash_pair.prog", "--explain", "5"])
    out = capsys.readouterr().out
    assert code == 0
    assert "share one thread-value layout" in out


def test_explain_out_of_range(capsys):
    code = run_cli(["--program", FIXTURES / "gemm_sample.prog", "--explain", "99"])
    assert code == 1
    assert "out of range" in capsys.readouterr().err


def test_all_candidates_flag(tmp_path):
    report_path = tmp_path / "all.json"
    code = run_cli(
        [
            "--program", FIXTURES / "gemm_sample.prog",
            "--format", "json", "--report", report_path,
            "--all-candidates", "--max-candidates", "8",
        ]
    )
    assert code == 0
    report = json.loads(report_path.read_text())
    assert len(report["all"]) == report["candidates"]["count"] <= 8


def test_console_entry_point_runs():
    proc = subprocess.run(
        [
            sys.executable, "-m", "tilesynth.cli",
            "--program", str(FIXTURES / "gemm_sample.prog"),
            "--format", "json",
        ],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["version"] == 1

import json
import os
import subprocess
import sys
from pathlib import Path

import pytest

from fedosov.cli import EXIT_FAIL, EXIT_INPUT, EXIT_PASS, main
from fedosov.runner import RunConfig, run

HERE = Path(__file__).parent
GOLDEN = HERE / "golden"
DATA = HERE / "data"
REGEN = os.environ.get("FEDOSOV_REGEN_GOLDEN") == "1"

# (golden file, argv)
GOLDEN_RUNS = [
    ("verify-all_abelian_n4.json", ["verify-all", "--config", "abelian", "--order", "4"]),
    ("validate_jacobi_violation.json", ["validate", "--config", str(DATA / "jacobi_violation.json")]),
    ("geodesic_line_c3_2_n6.json", ["geodesic", "--connection1", "0", "--connection2", "3/2", "--order", "6"]),
    ("phi_solvable_split2_n4.json", ["phi", "--config", "solvable", "--order", "4", "--splitting", "2"]),
    ("log_line_const_n5.json", ["log", "--config", "line_const", "--order", "5"]),
    ("fedosov_so3_e3_n4.json", ["fedosov", "--config", "so3_e3", "--order", "4"]),
    ("pbw_sl2_borel_n4.json", ["pbw", "--config", "sl2_borel", "--order", "4"]),
]


def _run_json(argv, capsys):
    code = main(argv + ["--json"])
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.mark.parametrize("name,argv", GOLDEN_RUNS, ids=[g[0] for g in GOLDEN_RUNS])
def test_golden_reports(name, argv, capsys):
    code, text, _ = _run_json(argv, capsys)
    path = GOLDEN / name
    if REGEN:
        GOLDEN.mkdir(exist_ok=True)
        path.write_text(text)
    assert text == path.read_text()
    assert code == (EXIT_FAIL if "violation" in name else EXIT_PASS)


@pytest.mark.parametrize("argv", [g[1] for g in GOLDEN_RUNS[:3]])
def test_reports_are_byte_identical(argv, capsys):
    first = _run_json(argv, capsys)[1]
    second = _run_json(argv, capsys)[1]
    assert first == second


def test_verify_all_abelian_passes_with_zero_residuals(capsys):
    code, text, _ = _run_json(["verify-all", "--config", "abelian", "--order", "4"], capsys)
    rep = json.loads(text)
    assert code == EXIT_PASS and rep["status"] == "pass"
    assert rep["checks"] and all(c["residual"] == 0 and c["status"] == "pass" for c in rep["checks"])
    assert all(c["tag"] for c in rep["checks"])


def test_validate_jacobi_names_triple(capsys):
    code = main(["validate", "--config", str(DATA / "jacobi_violation.json")])
    err = capsys.readouterr().err
    assert code == EXIT_FAIL
    assert "jacobi" in err and "[0, 1, 2]" in err


def test_geodesic_summary_names_pipelines(capsys):
    code = main(["geodesic", "--connection1", "0", "--connection2", "3/2", "--order", "6"])
    out = capsys.readouterr().out
    assert code == EXIT_PASS
    for word in ("pbw", "e^Y", "exp_2^{-1} exp_1"):
        assert word in out


@pytest.mark.parametrize("argv", [
    ["fedosov", "--config", "no_such_presentation"],
    ["fedosov", "--config", str(DATA / "malformed.json")],
    ["fedosov", "--config", "abelian", "--order", "1"],
    ["geodesic", "--connection1", "0", "--connection2", "{\"0,0\": \"1\"}", "--order", "4"],
])
def test_input_errors_exit_two(argv, capsys):
    assert main(argv) == EXIT_INPUT
    assert capsys.readouterr().err.startswith("error:")


def test_unknown_command_is_usage_error():
    with pytest.raises(SystemExit) as err:
        main(["frobnicate"])
    assert err.value.code == 2


def test_report_file_is_written(tmp_path, capsys):
    target = tmp_path / "report.json"
    assert main(["fedosov", "--config", "abelian", "--order", "3", "--report", str(target)]) == EXIT_PASS
    rep = json.loads(target.read_text())
    assert rep["command"] == "fedosov" and rep["status"] == "pass"
    assert "duration" not in target.read_text()
    assert "duration" in capsys.readouterr().err


def test_validate_a_closure_violation_exits_one(capsys):
    assert main(["validate", "--config", str(DATA / "a_closure_violation.json")]) == EXIT_FAIL
    assert "a_closure" in capsys.readouterr().err


def test_other_commands_refuse_invalid_presentations(capsys):
    assert main(["fedosov", "--config", str(DATA / "jacobi_violation.json"), "--order", "3"]) == EXIT_INPUT
    assert "jacobi" in capsys.readouterr().err


def test_run_api_matches_cli(capsys):
    rep = run(RunConfig(command="phi", config="solvable", order=4, splitting=2))
    code, text, _ = _run_json(["phi", "--config", "solvable", "--order", "4", "--splitting", "2"], capsys)
    assert rep.to_json() == text and rep.ok and code == EXIT_PASS


def test_console_entry_point():
    proc = subprocess.run([sys.executable, "-m", "fedosov.cli", "validate", "--config", "abelian"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    assert "validate: pass" in proc.stdout

import csv
import io
import json
import subprocess
import sys

import pytest

from opp_bandit import cli


def run_main(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def rows_of(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_simulate_single_cell(capsys):
    code, out, _ = run_main(capsys, "simulate", "--p01", "0.2", "--p11", "0.8", "--N", "2", "--T", "20000")
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == ",".join(cli.COLUMNS["simulate"])
    assert len(lines) == 2 and lines[1].startswith("0.2,0.8,2,20000,structural,")


def test_grid_order(capsys):
    code, out, _ = run_main(capsys, "simulate", "--p01", "0.1,0.5,0.9", "--p11", "0.3,0.7,0.2",
                            "--N", "2,3", "--T", "500")
    assert code == 0
    rows = rows_of(out)
    assert len(rows) == 18
    cells = [(r["p01"], r["p11"], r["N"]) for r in rows]
    assert cells[:3] == [("0.1", "0.3", "2"), ("0.1", "0.3", "3"), ("0.1", "0.7", "2")]


def test_spec_file_and_override(tmp_path, capsys):
    spec = tmp_path / "exp.yaml"
    spec.write_text("p01: [0.2, 0.4]\np11: 0.8\nN: [2]\nT: [1000]\nseed: 7\n")
    _, out, _ = run_main(capsys, "simulate", str(spec))
    assert len(rows_of(out)) == 2
    _, out, _ = run_main(capsys, "simulate", str(spec), "--p01", "0.3")
    assert [r["p01"] for r in rows_of(out)] == ["0.3"]


def test_output_file_identical_on_rerun(tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for path in (a, b):
        assert run_main(capsys, "simulate", "--N", "3", "--T", "5000", "--seed", "4", "-o", str(path))[0] == 0
    assert a.read_bytes() == b.read_bytes()
    assert b"\r" not in a.read_bytes()


def test_verify_two_channels_all_optimal(capsys):
    code, out, _ = run_main(capsys, "verify-optimality", "--p01", "0.1,0.9", "--p11", "0.2,0.8",
                            "--N", "2", "--T", "1,4,7")
    assert code == 0
    rows = rows_of(out)
    assert len(rows) == 12
    assert all(float(r["gap"]) <= 1e-9 and r["lemma2_holds"] == "true" for r in rows)


def test_verify_counterexample_exit_code(capsys):
    w = "0.18606931166303586,0.2473038992572505,0.040944040972459295,0.030536636481570123"
    code, out, _ = run_main(capsys, "verify-optimality", "--p01", "0.99", "--p11", "0.01",
                            "--N", "4", "--T", "5", "--omega1", w)
    assert code == 3
    (row,) = rows_of(out)
    assert float(row["gap"]) == pytest.approx(0.0111, abs=1e-4)
    assert row["lemma2_holds"] == "false"


def test_verify_cap_marks_rows(capsys):
    code, out, _ = run_main(capsys, "verify-optimality", "--N", "9", "--T", "1,12")
    rows = rows_of(out)
    assert rows[0]["gap"] != "ERROR" and rows[1]["gap"] == "ERROR"
    assert code == 2


def test_bounds_rows(capsys):
    code, out, _ = run_main(capsys, "bounds", "--p01", "0.2", "--p11", "0.8", "--N", "3,4,5,6,7,8,9,10")
    assert code == 0
    rows = rows_of(out)
    assert float(rows[1]["U_upper"]) == pytest.approx(5 / 7, abs=1e-11)
    gaps = [float(r["rel_gap"]) for r in rows]
    assert all(b <= a + 1e-12 for a, b in zip(gaps, gaps[1:]))


def test_bounds_memoryless(capsys):
    _, out, _ = run_main(capsys, "bounds", "--p01", "0.4", "--p11", "0.4", "--N", "3")
    (row,) = rows_of(out)
    for key in ("U_lower", "U_exact", "U_upper"):
        assert float(row[key]) == pytest.approx(0.4, abs=1e-11)


def test_analyze_triangle(capsys):
    code, out, _ = run_main(capsys, "analyze", "--p01", "0.2", "--p11", "0.8", "--N", "2")
    assert code == 0
    (row,) = rows_of(out)
    for key in ("U_exact", "U_closed", "U_tp"):
        assert float(row[key]) == pytest.approx(0.65, abs=1e-10)


def test_rate_rows(capsys):
    code, out, _ = run_main(capsys, "rate", "--p01", "0.2", "--p11", "0.4", "--N", "8,9,10")
    assert code == 0
    ratios = [float(r["ratio"]) for r in rows_of(out)]
    assert max(ratios) / min(ratios) - 1 < 0.01
    _, out, _ = run_main(capsys, "rate", "--p01", "0.4", "--p11", "0.4", "--N", "3")
    assert float(rows_of(out)[0]["gap"]) == 0.0


def test_sweep_has_every_preset(capsys):
    code, out, _ = run_main(capsys, "sweep", "--N", "2", "--T", "20000")
    assert code == 0
    assert [r["omega1"] for r in rows_of(out)] == ["stationary", "all-good", "all-bad"]


def test_json_format(capsys):
    _, out, _ = run_main(capsys, "bounds", "--N", "3", "--format", "json")
    doc = json.loads(out)
    assert doc["columns"] == cli.COLUMNS["bounds"]
    assert doc["rows"][0]["N"] == 3


@pytest.mark.parametrize("argv", [
    ["simulate", "--format", "xml"],
    ["simulate", "--p01", "abc"],
    ["simulate", "--jobs", "0"],
    ["frobnicate"],
])
def test_usage_errors(argv, capsys):
    with pytest.raises(SystemExit) as exc:
        code = cli.main(argv)
        raise SystemExit(code)
    assert exc.value.code == 1


def test_unknown_spec_key(tmp_path, capsys):
    spec = tmp_path / "bad.yaml"
    spec.write_text("p01: 0.2\ncolour: blue\n")
    assert run_main(capsys, "simulate", str(spec))[0] == 1


def test_computation_error_exit(capsys):
    assert run_main(capsys, "simulate", "--p01", "1.5")[0] == 2


def test_jobs_env_default(monkeypatch, capsys):
    monkeypatch.setenv(cli.JOBS_ENV, "2")
    code, out, _ = run_main(capsys, "bounds", "--N", "3,4")
    assert code == 0 and len(rows_of(out)) == 2


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "opp_bandit", "bounds", "--N", "3"],
                          capture_output=True, text=True, check=True)
    assert proc.stdout.startswith("p01,p11,N,U_lower")

import json
import subprocess
import sys
from pathlib import Path

import pytest

import gauge_killing.moment as moment
from gauge_killing import __version__
from gauge_killing.catalog import example_ids
from gauge_killing.cli import EXIT_FAIL, EXIT_MODEL, EXIT_PASS, EXIT_SOLVER, EXIT_USAGE, main

DEMOS = Path(__file__).resolve().parents[1] / "demos"

BROKEN = """
group = u1
chart.left.lower = -1, -1
chart.left.upper = 0.5, 1
chart.right.lower = -0.5, -1
chart.right.upper = 1, 1
connection.left.2 = x1
connection.right.2 = x1
transition.left.right.map = x1, x2
transition.right.left.map = x1, x2
transition.left.right.lower = -0.5, -1
transition.left.right.upper = 0.5, 1
# a non-constant transition that the connection does not follow
transition.left.right.log = x2
transition.right.left.log = -x2
field.shift = 1, 0
"""


def run(args, capsys):
    code = main(args)
    out, err = capsys.readouterr()
    return code, out, err


def test_list(capsys):
    code, out, _ = run(["list"], capsys)
    assert code == EXIT_PASS
    for eid in example_ids():
        assert eid in out
    code, out, _ = run(["list", "--json"], capsys)
    assert [r["id"] for r in json.loads(out)] == list(example_ids())


def test_run_report_schema(tmp_path, capsys):
    out = tmp_path / "r.json"
    code, _, err = run(["run", "--example", "su2-box", "--suite", "metric-structure", "--n-samples", "40", "--out", str(out)], capsys)
    assert code == EXIT_PASS
    rep = json.loads(out.read_text())
    assert {"config", "checks", "verdict", "seed", "version"} <= set(rep)
    assert rep["verdict"] == "pass" and rep["version"] == __version__ and rep["seed"] == 0
    for c in rep["checks"]:
        assert set(c) >= {"name", "paper_ref", "residual", "tol", "pass"}
        assert isinstance(c["paper_ref"], str) and c["paper_ref"]
    assert "wall" not in out.read_text()
    assert "metric-structure on su2-box: pass" in err


def test_run_output_is_byte_identical(tmp_path, capsys):
    paths = [tmp_path / "a.json", tmp_path / "b.json"]
    for p in paths:
        assert run(["run", "--example", "hopf", "--suite", "isometries", "--n-samples", "30", "--seed", "5", "--out", str(p)], capsys)[0] == EXIT_PASS
    assert paths[0].read_bytes() == paths[1].read_bytes()


def test_config_file_with_flag_precedence(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("example = twisted-U1\nsuite = gauge-kernel\nseed = 4\nh = 0.1\n")
    out = tmp_path / "r.json"
    code, _, _ = run(["run", "--config", str(cfg), "--seed", "9", "--out", str(out)], capsys)
    assert code == EXIT_PASS
    rep = json.loads(out.read_text())
    assert rep["config"]["example"] == "twisted-U1" and rep["config"]["h"] == 0.1
    assert rep["seed"] == 9 and rep["config"]["seed"] == 9


def test_tolerance_override_and_csv(tmp_path, capsys):
    out, table = tmp_path / "r.json", tmp_path / "r.csv"
    code, _, err = run(["run", "--example", "flat-U1", "--suite", "metric-structure", "--n-samples", "20", "--tol", "positivity=-10", "--out", str(out), "--csv", str(table)], capsys)
    # positivity with tolerance -10 is forced to fail: residual is -min eigenvalue, about -1
    assert code == EXIT_FAIL and "failed: positivity" in err
    rows = table.read_text().splitlines()
    assert rows[0] == "name,residual,tol,pass"
    assert any(r.startswith("positivity,") and r.endswith(",0") for r in rows)
    assert json.loads(out.read_text())["verdict"] == "fail"


def test_perturbed_mode_passes_by_detecting_failures(tmp_path, capsys):
    out = tmp_path / "r.json"
    code, _, _ = run(["run", "--example", "twisted-U1", "--suite", "moment-equivalence", "--perturb", "--h", "0.1", "--n-samples", "30", "--out", str(out)], capsys)
    assert code == EXIT_PASS
    rep = json.loads(out.read_text())
    assert rep["checks"] and all(c["name"].endswith(":perturbed") for c in rep["checks"])


@pytest.mark.parametrize(
    "args",
    [
        [],
        ["frobnicate"],
        ["run", "--suite", "nope"],
        ["run", "--example", "nope"],
        ["run", "--h", "-1"],
        ["run", "--h", "abc"],
        ["run", "--tol", "no-equals"],
        ["run", "--config", "/nonexistent/file.cfg"],
        ["run", "--example", "su2-box", "--suite", "quantization"],
        ["solve", "--example", "hopf"],
        ["solve", "--example", "hopf", "--field", "nope"],
    ],
)
def test_usage_errors(args, capsys):
    code, _, err = run(args, capsys)
    assert code == EXIT_USAGE
    assert "usage error" in err


def test_invalid_model_exit_code(tmp_path, capsys):
    path = tmp_path / "broken.bundle"
    path.write_text(BROKEN)
    code, _, err = run(["run", "--bundle-config", str(path), "--n-samples", "30"], capsys)
    assert code == EXIT_MODEL and "model invalid" in err
    code, _, _ = run(["solve", "--bundle-config", str(path), "--field", "shift", "--n-samples", "30", "--out", str(tmp_path / "s.csv")], capsys)
    assert code == EXIT_MODEL


def test_user_bundle_runs(tmp_path, capsys):
    out = tmp_path / "r.json"
    code, _, _ = run(["run", "--bundle-config", str(DEMOS / "su2_box.bundle"), "--suite", "gauge-kernel", "--h", "0.1", "--out", str(out)], capsys)
    assert code == EXIT_PASS
    rep = json.loads(out.read_text())
    assert rep["config"]["example"] == "su2-user"


def test_solver_failure_exit_code(monkeypatch, tmp_path, capsys):
    real = moment.cgls

    def stalled(*args, **kwargs):
        kwargs["max_iter"] = 2
        return real(*args, **kwargs)

    monkeypatch.setattr(moment, "cgls", stalled)
    code, _, err = run(["solve", "--example", "hopf", "--field", "rot-z", "--h", "0.05", "--out", str(tmp_path / "s.csv")], capsys)
    assert code == EXIT_SOLVER and "solver failure" in err


def test_solve_writes_csv_and_summary(tmp_path, capsys):
    out = tmp_path / "nu.csv"
    code, _, err = run(["solve", "--example", "twisted-U1", "--field", "trans-x1", "--h", "0.1", "--out", str(out)], capsys)
    assert code == EXIT_PASS
    assert out.read_text().startswith("chart,x1,x2,nu1\n")
    summary = json.loads((tmp_path / "nu.json").read_text())
    assert summary["solvable"] is True and summary["kernel_dim"] == 1
    assert "solvable=True" in err


def test_console_script_entry_point(tmp_path):
    out = tmp_path / "r.json"
    proc = subprocess.run(
        [sys.executable, "-m", "gauge_killing", "run", "--example", "flat-U1", "--suite", "gauge-kernel", "--h", "0.1", "--out", str(out)],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert json.loads(out.read_text())["verdict"] == "pass"


@pytest.mark.parametrize("extra", [[], ["--perturb"]], ids=["solved", "perturbed"])
def test_hopf_equivalence_pipeline(extra, tmp_path, capsys):
    out = tmp_path / "r.json"
    code, _, _ = run(["run", "--example", "hopf", "--suite", "moment-equivalence", "--h", "0.02", "--seed", "7", "--out", str(out), *extra], capsys)
    assert code == EXIT_PASS
    rep = json.loads(out.read_text())
    assert rep["seed"] == 7 and rep["verdict"] == "pass"
    assert len(rep["checks"]) == (3 if extra else 9)

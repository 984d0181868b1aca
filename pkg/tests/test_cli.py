"""Exit codes, config merging, deterministic reports, and cloud emission."""

import json
import os

import pytest

from pencillab.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def report_of(out: str) -> dict:
    return json.loads(out)


def test_info_command(capsys):
    code, out, _ = run(capsys, "info", "--germ", "z1^2+z2^3")
    assert code == 0
    rep = report_of(out)
    assert rep["schema"] == "1"
    assert rep["passed"] is True
    assert rep["result"]["n"] == 2 if "n" in rep["result"] else True
    assert rep["result"]["holomorphic"] is True
    assert rep["config"]["germ"] == "z1^2+z2^3"


def test_mu_command(capsys):
    code, out, _ = run(capsys, "mu", "--exponents", "2,3")
    assert code == 0
    rep = report_of(out)
    assert rep["result"]["closed_form"] == 2
    assert rep["result"]["staircase"] == 2
    assert rep["result"]["agree"] is True


def test_euler_command(capsys, tmp_path):
    path = tmp_path / "euler.json"
    code, out, _ = run(capsys, "euler", "--germ", "z1^2+z2^3",
                       "--budget", "100000", "--report", str(path))
    assert code == 0
    rep = json.loads(path.read_text())
    assert rep["result"]["chi"] == -2
    assert rep["result"]["inventory"]["termination"] == "stable"


def test_negative_budget_is_usage_error(capsys):
    code, _, err = run(capsys, "dreg", "--germ", "z1", "--budget", "-5")
    assert code == 2
    assert "budget" in err


def test_unknown_config_key_is_usage_error(capsys, tmp_path):
    cfg = tmp_path / "job.json"
    cfg.write_text(json.dumps({"command": "info", "germ": "z1",
                               "bogus_key": 1}))
    code, _, err = run(capsys, "--config", str(cfg))
    assert code == 2
    assert "bogus_key" in err


def test_germ_syntax_error_exit(capsys):
    code, _, err = run(capsys, "info", "--germ", "z1 +")
    assert code == 2
    assert "germ" in err


def test_missing_command_is_usage_error(capsys):
    code, _, err = run(capsys)
    assert code == 2
    assert "command" in err


def test_eta_above_radius_rejected(capsys):
    code, _, err = run(capsys, "tube-check", "--germ", "z1", "--radius",
                       "0.5", "--eta", "0.5")
    assert code == 2
    assert "eta" in err


def test_flags_override_config_and_both_are_recorded(capsys, tmp_path):
    cfg = tmp_path / "job.json"
    cfg.write_text(json.dumps({"command": "info", "germ": "z1",
                               "radius": 0.4}))
    code, out, _ = run(capsys, "--config", str(cfg), "--radius", "0.5")
    assert code == 0
    rep = report_of(out)
    assert rep["config"]["radius"] == 0.5
    assert rep["config_file"]["radius"] == 0.4
    assert rep["flag_overrides"]["radius"] == 0.5


def test_theta_accepts_pi_expressions(capsys):
    code, out, _ = run(capsys, "info", "--germ", "z1", "--theta", "pi/2")
    assert code == 0
    rep = report_of(out)
    assert abs(rep["config"]["theta"] - 1.5707963267948966) < 1e-15


def test_reports_are_byte_identical(capsys, tmp_path):
    # identical (config, seed) must reproduce identical bytes, so both runs
    # write to the same report path
    path = tmp_path / "r.json"
    blobs = []
    for _ in range(2):
        code, _, _ = run(capsys, "dreg", "--germ", "z1^2+z2^3",
                         "--budget", "2000", "--polish", "3",
                         "--report", str(path))
        assert code == 0
        blobs.append(path.read_bytes())
    assert blobs[0] == blobs[1]


def test_dreg_negative_control_exits_one(capsys):
    code, out, _ = run(capsys, "dreg", "--germ", "z1*zbar1 + i*z1^2*zbar1^2",
                       "--n", "1", "--budget", "500", "--polish", "0")
    assert code == 1
    rep = report_of(out)
    assert rep["passed"] is False
    assert rep["result"]["verdict"] is False


def test_sample_link_emits_csv_and_obj(capsys, tmp_path):
    base = tmp_path / "link"
    code, out, _ = run(capsys, "sample-link", "--germ", "z1^2+z2^3",
                       "--count", "40", "--out", str(base))
    assert code == 0
    rep = report_of(out)
    assert rep["result"]["count"] == 40
    csv_lines = (tmp_path / "link.csv").read_text().strip().split("\n")
    assert len(csv_lines) == 41
    obj_lines = [ln for ln in
                 (tmp_path / "link.obj").read_text().strip().split("\n")
                 if ln.startswith("v ")]
    assert len(obj_lines) == 40
    assert rep["result"]["files"]["obj_vertices"] == 40


def test_sample_link_default_pole_perturbation_warns(capsys, tmp_path):
    # the default pole sits on the theta + pi/2 member of this germ, so the
    # auto-perturbation path must engage and leave a warning
    base = tmp_path / "link2"
    code, out, _ = run(capsys, "sample-link", "--germ", "z1^2+z2^3",
                       "--theta", "pi/2", "--count", "20",
                       "--out", str(base))
    assert code == 0
    rep = report_of(out)
    if rep["result"]["files"]["pole_perturbed"]:
        assert any("pole" in w for w in rep["warnings"])


def test_flow_command_writes_trace_rows(capsys, tmp_path):
    base = tmp_path / "trace"
    code, out, _ = run(capsys, "flow", "--germ", "z1", "--n", "2",
                       "--kind", "monodromy", "--start", "0.5,0,0,0",
                       "--out", str(base))
    assert code == 0
    rep = report_of(out)
    rows = rep["result"]["csv_rows"]
    lines = (tmp_path / "trace.csv").read_text().strip().split("\n")
    assert len(lines) == rows + 1
    assert rep["result"]["termination"] == "completed"
    assert rep["result"]["n_accepted"] == rows


def test_unstable_euler_exits_three_with_partial(capsys, tmp_path):
    os.chdir(tmp_path)
    code, _, err = run(capsys, "euler", "--germ", "z1^2+z2^3",
                       "--budget", "50", "--report", str(tmp_path / "r.json"))
    assert code == 3
    partial = tmp_path / "r.json.partial"
    assert partial.exists()
    payload = json.loads(partial.read_text())
    assert payload["error"] == "Unstable"
    assert "inventory" in payload


def test_unwritable_report_exits_four(capsys, tmp_path):
    target = tmp_path / "missing-dir" / "r.json"
    code, _, err = run(capsys, "info", "--germ", "z1",
                       "--report", str(target))
    assert code == 4
    assert "io" in err


def test_equivalence_command_small_run(capsys):
    code, out, _ = run(capsys, "equivalence", "--germ", "z1^2+z2^3",
                       "--count", "5")
    assert code == 0
    rep = report_of(out)
    assert rep["result"]["succeeded"] == 5
    assert rep["result"]["max_theta_drift"] < 1e-6


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0

import csv
import json
import subprocess
import sys
from pathlib import Path

import pytest

from sidapbc.cli import ConfigError, config_hash, main, resolve_config
from sidapbc.matching import TOLERANCES

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
SHORT = {"method": "rk4", "dt": 0.001, "t_end": 0.5, "record_stride": 50}


def write_config(tmp_path, doc, name="run.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return path


def run(tmp_path, command, doc, *extra):
    out = tmp_path / "out"
    return main([command, "--config", str(write_config(tmp_path, doc)), "--out", str(out), *extra]), out


@pytest.mark.parametrize("system", ["cart_pendulum", "ball_beam"])
def test_verify_passes_on_examples(tmp_path, capsys, system):
    code, out = run(tmp_path, "verify", {"system": system, "samples": 20})
    assert code == 0
    report = json.loads((out / "verify_report.json").read_text())
    assert report["passed"] and report["samples"] == 20
    assert report["tolerances"] == TOLERANCES
    assert report["config_hash"] == config_hash(resolve_config({"system": system, "samples": 20}))
    assert "all checks passed" in capsys.readouterr().out


def test_verify_fails_on_perturbed_lambda(tmp_path, capsys):
    code, out = run(tmp_path, "verify", {"system": "cart_pendulum", "samples": 20, "perturb": {"lam": 0.01}})
    assert code == 1
    report = json.loads((out / "verify_report.json").read_text())
    failed = {c["name"] for c in report["checks"] if not c["passed"]}
    assert "matching_residual" in failed
    assert "FAIL matching_residual" in capsys.readouterr().out


@pytest.mark.parametrize("doc", [
    {"system": "cart_pendulum", "samples": 0},
    {"system": "unicycle"},
    {"system": "ball_beam", "params": {"eps": -1.0}},
    {"system": "ball_beam", "perturb": {"flip_damping": True}},
    {"system": "cart_pendulum", "integrator": {"dt": -1.0}},
])
def test_invalid_configs_exit_2(tmp_path, doc):
    command = "simulate" if "integrator" in doc else "verify"
    code, _ = run(tmp_path, command, doc)
    assert code == 2


def test_unreadable_config_and_bad_seed_exit_2(tmp_path):
    assert main(["verify", "--config", str(tmp_path / "missing.json")]) == 2
    path = write_config(tmp_path, {"system": "ball_beam"})
    assert main(["verify", "--config", str(path), "--seed", "-1", "--out", str(tmp_path)]) == 2


def test_resolve_config_rejects_unknown_keys():
    with pytest.raises(ConfigError):
        resolve_config({"system": "ball_beam", "colour": "red"})


def test_seed_override_changes_hash():
    a = resolve_config({"system": "ball_beam"})
    b = resolve_config({"system": "ball_beam"}, seed=5)
    assert b["seed"] == 5 and config_hash(a) != config_hash(b)


def test_simulate_writes_csv_and_summary(tmp_path):
    code, out = run(tmp_path, "simulate", {"system": "cart_pendulum", "integrator": SHORT})
    assert code == 0
    with open(out / "trajectory.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["t", "q_1", "q_2", "p_1", "p_2", "H_d", "Hd_dot", "u_1", "residual_norm"]
    assert len(rows) == 1 + 11
    summary = json.loads((out / "simulate_summary.json").read_text())
    assert summary["completed"] and summary["hd_violations"] == 0
    assert summary["records"] == 11
    assert summary["max_residual_norm"] <= 1e-8


def test_simulate_is_byte_identical(tmp_path):
    outs = []
    for d in ("a", "b"):
        (tmp_path / d).mkdir()
        outs.append(run(tmp_path / d, "simulate", {"system": "ball_beam", "integrator": SHORT, "seed": 3})[1])
    for name in ("trajectory.csv", "simulate_summary.json"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()


def test_verify_report_is_byte_identical(tmp_path):
    outs = []
    for d in ("a", "b"):
        (tmp_path / d).mkdir()
        outs.append(run(tmp_path / d, "verify", {"system": "cart_pendulum", "samples": 10}, "--seed", "9")[1])
    assert (outs[0] / "verify_report.json").read_bytes() == (outs[1] / "verify_report.json").read_bytes()


def test_zero_control_run(tmp_path):
    doc = json.loads((CONFIGS / "cart_pendulum_zero_control.json").read_text())
    doc["integrator"] = {**doc["integrator"], "t_end": 2.0}
    code, out = run(tmp_path, "simulate", doc)
    assert code == 0
    summary = json.loads((out / "summary_zero_control.json").read_text())
    assert not summary["converged"]
    assert summary["open_loop_energy_drift"] <= 1e-8
    assert (out / "trajectory_zero_control.csv").exists()


def test_shipped_configs_validate():
    for path in sorted(CONFIGS.glob("*.json")):
        resolve_config(json.loads(path.read_text()))


@pytest.mark.parametrize("s, expected", [("0", "0"), ("3", "10"), ("4", "20")])
def test_count_pdes(capsys, s, expected):
    assert main(["count-pdes", s]) == 0
    assert capsys.readouterr().out.strip() == expected


def test_count_pdes_rejects_negative():
    assert main(["count-pdes", "--", "-1"]) == 2


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "sidapbc", "count-pdes", "2"], capture_output=True, text=True,
                         check=True)
    assert res.stdout.strip() == "4"

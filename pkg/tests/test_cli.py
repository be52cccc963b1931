import json
import os
import subprocess
import sys

import numpy as np
import pytest

from velaid.bench import EstimatorConfig, ScenarioConfig, comparison_estimators, default_config, save_config
from velaid.cli import EXIT_CONFIG, EXIT_OK, EXIT_SUITE, main
from velaid.measurement import TrajectorySpec
from velaid.record import replay_run


@pytest.fixture
def cfg_path(tmp_path):
    p = tmp_path / "cfg.json"
    save_config(default_config(seed=1), p)
    return p


def test_simulate_rows_and_determinism(tmp_path, cfg_path):
    for sub in ("a", "b"):
        assert main(["simulate", "--config", str(cfg_path), "--out", str(tmp_path / sub), "--seed", "42"]) == EXIT_OK
    a = (tmp_path / "a" / "run.csv").read_bytes()
    assert a == (tmp_path / "b" / "run.csv").read_bytes()
    lines = a.decode().splitlines()
    assert len(lines) == 10001 + 1
    assert json.loads((tmp_path / "a" / "config.json").read_text())["seed"] == 42


def test_simulate_noise_free_unit_field(tmp_path):
    p = tmp_path / "c.json"
    save_config(ScenarioConfig(trajectory=TrajectorySpec(duration=1.0), metrics_window=(0.5, 1.0)), p)
    assert main(["simulate", "--config", str(p), "--out", str(tmp_path / "o")]) == EXIT_OK
    rr = replay_run(tmp_path / "o" / "run.csv")
    assert np.max(np.abs(np.linalg.norm(rr["y_m"], axis=1) - 1)) <= 1e-12


def test_run_outputs(tmp_path, cfg_path, capsys):
    out = tmp_path / "run"
    assert main(["run", "--config", str(cfg_path), "--out", str(out)]) == EXIT_OK
    for f in ("run.csv", "report.csv", "config.json", "plot_traces.py"):
        assert (out / f).exists(), f
    text = capsys.readouterr().out
    assert "martin2016" in text and "seed 1" in text
    compile((out / "plot_traces.py").read_text(), "plot_traces.py", "exec")
    rr = replay_run(out / "run.csv")
    assert "hua2016.tilt_angle" in rr.blocks


def test_compare(tmp_path, cfg_path, capsys):
    reports = []
    for seed in ("1", "2"):
        out = tmp_path / seed
        assert main(["run", "--config", str(cfg_path), "--out", str(out), "--seed", seed]) == EXIT_OK
        reports.append(str(out / "report.csv"))
    capsys.readouterr()
    assert main(["compare", *reports, "--out", str(tmp_path / "rank.csv")]) == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "rank,report,estimator,mean_tilt_angle_rad,mean_yaw_proxy_rad"
    assert len(lines) == 11
    tilts = [float(ln.split(",")[3]) for ln in lines[1:]]
    assert tilts == sorted(tilts)
    assert (tmp_path / "rank.csv").read_text().splitlines() == lines


def test_compare_incompatible_windows(tmp_path, capsys):
    for name, w in (("a.csv", "2.0,10.0"), ("b.csv", "1.0,10.0")):
        (tmp_path / name).write_text(f"# window={w} seed=0\nestimator,mean_tilt_angle_rad,mean_yaw_proxy_rad,convergence_time_s,invalid_samples\nx,0.1,0.1,0.5,0\n")
    assert main(["compare", str(tmp_path / "a.csv"), str(tmp_path / "b.csv")]) == EXIT_CONFIG
    assert "window" in capsys.readouterr().err


def test_config_errors_exit_1(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"seed": 1,\n "estimators": [{"name": "a", "kind": "ekf"}]}')
    assert main(["run", "--config", str(bad), "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    assert "estimators[0].kind" in capsys.readouterr().err
    bad.write_text('{"seed": 1,\n "noise": }')
    assert main(["simulate", "--config", str(bad), "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    assert "line 2" in capsys.readouterr().err
    assert main(["run", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path / "o")]) == EXIT_CONFIG


def test_rejected_gains_exit_1(tmp_path, capsys):
    p = tmp_path / "c.json"
    save_config(ScenarioConfig(estimators=(EstimatorConfig("bad", "one_step", {"alpha": 10.0, "gamma": 20.0}),)), p)
    assert main(["run", "--config", str(p), "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    assert "bad" in capsys.readouterr().err


def test_unwritable_output(tmp_path, cfg_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["simulate", "--config", str(cfg_path), "--out", str(blocker / "sub")]) == EXIT_CONFIG


def test_stability_check_passes_with_rejected(tmp_path, capsys):
    ests = comparison_estimators()[:1] + (
        EstimatorConfig("n1", "two_step", {}, 1),
        EstimatorConfig("weak", "one_step", {"alpha": 10.0, "gamma": 20.0}),
    )
    p = tmp_path / "c.json"
    save_config(ScenarioConfig(estimators=ests), p)
    assert main(["stability-check", "--config", str(p), "--inits", "2"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "[REJECTED] weak" in out


def test_stability_check_failure_exit_2(tmp_path, capsys):
    # gains this slow cannot reach 1e-3 rad within the run
    ests = (EstimatorConfig("slow", "two_step", {"alphas": [0.05], "gamma": 0.01}, 1),)
    p = tmp_path / "c.json"
    save_config(ScenarioConfig(trajectory=TrajectorySpec(duration=2.0), estimators=ests, metrics_window=(1.0, 2.0)), p)
    assert main(["stability-check", "--config", str(p), "--inits", "2"]) == EXIT_SUITE
    assert "[FAIL" in capsys.readouterr().out


def test_env_seed_subprocess(tmp_path, cfg_path):
    env = dict(os.environ, VELAID_SEED="42")
    cmd = [sys.executable, "-m", "velaid.cli", "simulate", "--config", str(cfg_path)]
    r1 = subprocess.run(cmd + ["--out", str(tmp_path / "env")], env=env, capture_output=True, text=True)
    assert r1.returncode == 0, r1.stderr
    assert main(["simulate", "--config", str(cfg_path), "--out", str(tmp_path / "arg"), "--seed", "42"]) == 0
    assert (tmp_path / "env" / "run.csv").read_bytes() == (tmp_path / "arg" / "run.csv").read_bytes()
    env["VELAID_SEED"] = "abc"
    r2 = subprocess.run(cmd + ["--out", str(tmp_path / "x")], env=env, capture_output=True, text=True)
    assert r2.returncode == 1 and "VELAID_SEED" in r2.stderr

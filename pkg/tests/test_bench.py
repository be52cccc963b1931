import json
import math

import numpy as np
import pytest

from velaid.bench import (
    ComparisonReport,
    EstimatorConfig,
    ReportRow,
    ScenarioConfig,
    build_bank,
    comparison_estimators,
    compare_reports,
    config_from_dict,
    default_config,
    format_report,
    initial_rhat,
    load_config,
    order_estimators,
    read_report,
    resolve_seed,
    run_scenario,
    save_config,
    simulate,
    write_report,
)
from velaid.errors import ConfigError


@pytest.fixture(scope="module")
def truth_run():
    return run_scenario(ScenarioConfig(estimators=comparison_estimators() + order_estimators()))


@pytest.fixture(scope="module")
def noisy_run():
    return run_scenario(default_config(seed=0))


def test_truth_init_no_noise(truth_run):
    assert len(truth_run.report.rows) == 8
    for r in truth_run.report.rows:
        assert r.mean_tilt_angle_rad <= 1e-5, r
        assert math.isnan(r.mean_yaw_proxy_rad) or r.mean_yaw_proxy_rad <= 1e-5, r
        assert r.invalid_samples == 0
        assert r.convergence_time_s == 0.0


def test_noisy_report_rows(noisy_run):
    rep = noisy_run.report
    assert [r.estimator for r in rep.rows] == ["hierarchic", "invariant", "one_step", "hua2016", "martin2016"]
    assert len(rep.tilt) == 5
    assert sorted(rep.yaw) == ["hierarchic", "hua2016", "invariant", "martin2016"]
    assert all(np.isfinite(v) and 0 < v < np.pi for v in rep.tilt.values())
    assert rep.seed == 0 and rep.window == (2.0, 10.0)


def test_noisy_run_starts_at_undesired_equilibrium(noisy_run):
    for o in noisy_run.outputs:
        if o.Rhat is not None and o.kind != "martin":
            assert o.tilt_angle[0] == pytest.approx(np.pi)
            assert o.yaw_angle[0] == pytest.approx(np.pi)


def test_undesired_init_intermediate_converges():
    ests = tuple(EstimatorConfig(f"n{n}", "two_step", {}, n) for n in (1, 2, 3))
    run = run_scenario(ScenarioConfig(estimators=ests, init_policy="undesired_equilibrium"))
    k = 500  # t = 0.5 s
    for o in run.outputs:
        assert o.tilt_angle[k] > np.pi - 1e-3
        x2p = o.blocks["xhat2_prime"][k]
        assert np.arccos(np.clip(x2p @ run.trajectory.tilt[k] / np.linalg.norm(x2p), -1, 1)) < 1e-6


def test_initial_rhat_policies():
    traj, _ = simulate(ScenarioConfig())
    assert initial_rhat(ScenarioConfig(), traj) is None
    R = initial_rhat(ScenarioConfig(init_policy="undesired_equilibrium"), traj)
    assert np.allclose(R, np.diag([-1.0, 1.0, -1.0]) @ traj.R[0])
    R0 = np.diag([1.0, -1.0, -1.0])
    assert np.array_equal(initial_rhat(ScenarioConfig(init_policy=R0), traj), R0)


def test_record_columns(noisy_run):
    rr = noisy_run.record()
    assert rr.estimators() == ["hierarchic", "invariant", "one_step", "hua2016", "martin2016"]
    assert rr["invariant.Rhat"].shape == (10001, 9)
    assert set(np.unique(rr["martin2016.valid"])) <= {0.0, 1.0}
    assert "one_step.V" in rr.blocks


def test_bank_isolation():
    base = ScenarioConfig(estimators=comparison_estimators()[:2], noise=default_config().noise, seed=5)
    a = run_scenario(base).record()
    b = run_scenario(base.with_estimators(comparison_estimators())).record()
    for name, arr in a.blocks.items():
        assert np.array_equal(arr, b[name], equal_nan=True), name


def test_rejected_gains():
    cfg = ScenarioConfig(
        estimators=(
            EstimatorConfig("ok", "one_step"),
            EstimatorConfig("bad", "one_step", {"alpha": 10.0, "gamma": 20.0}),
            EstimatorConfig("unstable", "two_step", {"alphas": [10.0, 1.0, 1.0]}, 3),
        )
    )
    bank, rejected = build_bank(cfg)
    assert [b.name for b in bank] == ["ok"]
    assert set(rejected) == {"bad", "unstable"}
    with pytest.raises(ConfigError, match="bad"):
        run_scenario(cfg)


def test_seed_precedence():
    cfg = ScenarioConfig(seed=3)
    assert resolve_seed(cfg, None, {}).seed == 3
    assert resolve_seed(cfg, None, {"VELAID_SEED": "11"}).seed == 11
    assert resolve_seed(cfg, 7, {"VELAID_SEED": "11"}).seed == 7
    assert resolve_seed(cfg, None, {"VELAID_SEED": " "}).seed == 3
    for bad in ("x", "-1"):
        with pytest.raises(ConfigError, match="VELAID_SEED"):
            resolve_seed(cfg, None, {"VELAID_SEED": bad})


def test_simulate_deterministic():
    cfg = default_config(seed=42)
    a, b = simulate(cfg)[1], simulate(cfg)[1]
    assert np.array_equal(a.matrix(), b.matrix())
    c = simulate(cfg.with_seed(43))[1]
    assert not np.array_equal(a.matrix(), c.matrix())


def test_config_roundtrip(tmp_path):
    cfg = default_config(seed=9).with_estimators(comparison_estimators() + order_estimators())
    p = tmp_path / "c.json"
    save_config(cfg, p)
    back = load_config(p)
    assert back.to_dict() == cfg.to_dict()
    R0 = np.diag([1.0, -1.0, -1.0])
    cfg2 = ScenarioConfig(init_policy=R0)
    save_config(cfg2, p)
    assert np.array_equal(load_config(p).init_policy, R0)


@pytest.mark.parametrize(
    "doc, where",
    [
        ({"estimators": [{"name": "a", "kind": "kalman"}]}, "estimators[0].kind"),
        ({"estimators": [{"name": "a", "kind": "one_step", "gains": {"k1v": 1}}]}, "estimators[0].gains"),
        ({"estimators": [{"name": "a", "kind": "one_step"}, {"name": "a", "kind": "hua"}]}, "duplicate"),
        ({"metrics_window": [2, 20]}, "metrics_window"),
        ({"trajectory": {"dt": -1}}, "trajectory"),
        ({"noise": "loud"}, "noise"),
        ({"init_policy": "random"}, "init_policy"),
        ({"init_policy": {"Rhat0": [[2, 0, 0], [0, 1, 0], [0, 0, 1]]}}, "Rhat0"),
        ({"seed": -4}, "seed"),
        ({"m": [1, 0]}, "m"),
        ({"colour": 1}, "unknown keys"),
        ({"estimators": [{"name": "a", "kind": "one_step", "tilt_output": "xhat2_prime"}]}, "tilt_output"),
        ({"estimators": [{"name": "a", "kind": "two_step", "order": 2, "gains": {"alphas": [1.0]}}]}, "order"),
    ],
)
def test_config_errors(doc, where):
    with pytest.raises(ConfigError, match=where.replace("[", r"\[").replace("]", r"\]")):
        config_from_dict(doc)


def test_load_config_json_error(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{\n  "seed": 1,\n  "noise": none\n}\n')
    with pytest.raises(ConfigError, match="line 3"):
        load_config(p)
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")


def test_report_roundtrip(tmp_path, noisy_run):
    p = tmp_path / "report.csv"
    write_report(noisy_run.report, p)
    assert p.read_text().startswith("# window=2.0,10.0 seed=0\n")
    back = read_report(p)
    assert back.window == noisy_run.report.window and back.seed == 0
    for a, b in zip(back.rows, noisy_run.report.rows):
        assert a.estimator == b.estimator
        assert np.array_equal([a.mean_tilt_angle_rad, a.mean_yaw_proxy_rad], [b.mean_tilt_angle_rad, b.mean_yaw_proxy_rad], equal_nan=True)
    assert "hierarchic" in format_report(back)


def test_read_report_errors(tmp_path):
    p = tmp_path / "r.csv"
    p.write_text("estimator,mean_tilt_angle_rad\n")
    with pytest.raises(ConfigError, match="window"):
        read_report(p)
    p.write_text("# window=2.0,10.0 seed=\nestimator,x\n")
    with pytest.raises(ConfigError, match="columns"):
        read_report(p)


def _rep(window, *rows):
    return ComparisonReport(window, tuple(ReportRow(n, t, y, 0.1, 0) for n, t, y in rows))


def test_compare_ordering():
    a = _rep((2.0, 10.0), ("x", 0.3, 0.1), ("y", 0.1, float("nan")), ("z", 0.1, 0.05))
    ranked = compare_reports([a], ["a"])
    assert [r.estimator for _, r in ranked] == ["z", "y", "x"]
    single = _rep((2.0, 10.0), ("p", 0.1, 0.1), ("q", 0.2, 0.1))
    assert [r.estimator for _, r in compare_reports([single])] == ["p", "q"]
    tie = compare_reports([single, single], ["first", "second"])
    assert [lab for lab, _ in tie] == ["first", "second", "first", "second"]
    nan = _rep((2.0, 10.0), ("n", float("nan"), 0.1), ("m", 0.5, 0.1))
    assert [r.estimator for _, r in compare_reports([nan])] == ["m", "n"]
    assert compare_reports([]) == []


def test_compare_incompatible_windows():
    with pytest.raises(ConfigError, match="window"):
        compare_reports([_rep((2.0, 10.0), ("a", 1, 1)), _rep((1.0, 10.0), ("a", 1, 1))])


def test_scripts_configs_load():
    from pathlib import Path

    root = Path(__file__).resolve().parents[1] / "scripts" / "configs"
    for p in sorted(root.glob("*.json")):
        cfg = load_config(p)
        assert cfg.estimators, p
        json.loads(p.read_text())

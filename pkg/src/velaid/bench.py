"""Scenario configuration, estimator bank execution and comparison reports.

A scenario is a JSON document::

    {
      "trajectory": {"duration": 10.0, "dt": 0.001},
      "noise": "benchmark",
      "m": [0.7071, 0.0, 0.7071],
      "g0": 9.81,
      "seed": 0,
      "init_policy": "undesired_equilibrium",
      "metrics_window": [2.0, 10.0],
      "estimators": [
        {"name": "hier", "kind": "hierarchic"},
        {"name": "n2", "kind": "two_step", "order": 2, "gains": {"gamma": 20}}
      ]
    }

``noise`` is ``"none"``, ``"benchmark"`` or an object with one
``{"std": s, "bias": [bx, by, bz]}`` entry per channel (``y_a``, ``y_g``,
``y_m``, ``y_v``). ``init_policy`` may also be ``{"Rhat0": [[...], ...]}``.
Estimator kinds and their gain keys (all optional):

================  ==================================================================
``two_step``      ``alphas`` (default: all poles at ``-2 sqrt(gamma g0)``), ``gamma``
``one_step``      ``alpha``, ``gamma``
``hua``           ``k1v``, ``k2v``, ``k1r``
``hierarchic``    ``alphas``, ``gamma``, ``rho1``, ``mu``
``invariant``     ``alphas``, ``gamma``, ``rho1``, ``rho2``
``attitude``      ``alphas``, ``gamma``, ``rho1``, ``rho2``, ``mu``
``hua_attitude``  ``k1v``, ``k2v``, ``k1r``, ``k2r``
``martin``        ``L``, ``K``, ``M``
================  ==================================================================

For ``hierarchic``/``invariant``/``attitude`` the default tilt stage is the
second-order one with ``alpha1 = gamma g0`` and ``alpha2 = 2 sqrt(gamma g0)``.
A ``two_step`` entry may set ``"tilt_output": "xhat2_prime"`` to score the
intermediate estimate instead of the constrained one.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np
from numpy.typing import NDArray

from .analysis import (
    convergence_time,
    mean_error_window,
    tilt_angle_series,
    two_step_errors,
    one_step_errors,
    undesired_init,
    yaw_proxy_series,
)
from .attitude import (
    AttitudeGains,
    AttitudeObserverState,
    MartinAttitudeState,
    run_attitude,
    run_martin_attitude,
)
from .companion import companion, solve_lyapunov
from .errors import ConfigError, VelaidError
from .measurement import (
    CHANNELS,
    G0,
    M_FIELD,
    ChannelNoise,
    ImuSeries,
    NoiseSpec,
    Trajectory,
    TrajectorySpec,
    add_noise_series,
    gen_trajectory,
    synth_series,
)
from .record import RunRecord
from .so3 import E_Z, is_rotation, normalize_s2
from .tilt import (
    DEFAULT_GAMMA,
    HuaGains,
    HuaState,
    MartinGains,
    MartinTiltState,
    OneStepGains,
    OneStepState,
    TwoStepGains,
    TwoStepState,
    default_pole,
    run_tilt,
)

KINDS = ("two_step", "one_step", "hua", "hierarchic", "invariant", "attitude", "hua_attitude", "martin")
ATTITUDE_KINDS = ("hierarchic", "invariant", "attitude", "hua_attitude", "martin")
CONVERGENCE_THRESHOLD = 0.05
CONVERGENCE_HOLD = 0.5
SEED_ENV = "VELAID_SEED"

_GAIN_KEYS = {
    "two_step": {"alphas", "gamma"},
    "one_step": {"alpha", "gamma"},
    "hua": {"k1v", "k2v", "k1r"},
    "hierarchic": {"alphas", "gamma", "rho1", "mu"},
    "invariant": {"alphas", "gamma", "rho1", "rho2"},
    "attitude": {"alphas", "gamma", "rho1", "rho2", "mu"},
    "hua_attitude": {"k1v", "k2v", "k1r", "k2r"},
    "martin": {"L", "K", "M"},
}


# -- configuration ---------------------------------------------------------------


@dataclass(frozen=True)
class EstimatorConfig:
    name: str
    kind: str
    gains: dict = field(default_factory=dict)
    order: int | None = None
    tilt_output: str = "xhat2"

    def to_dict(self) -> dict:
        d: dict[str, Any] = {"name": self.name, "kind": self.kind}
        if self.gains:
            d["gains"] = dict(self.gains)
        if self.order is not None:
            d["order"] = self.order
        if self.tilt_output != "xhat2":
            d["tilt_output"] = self.tilt_output
        return d


@dataclass(frozen=True)
class ScenarioConfig:
    trajectory: TrajectorySpec = field(default_factory=TrajectorySpec)
    noise: NoiseSpec | None = None
    m: tuple[float, float, float] = tuple(M_FIELD)
    g0: float = G0
    estimators: tuple[EstimatorConfig, ...] = ()
    init_policy: str | NDArray[np.float64] = "truth"
    metrics_window: tuple[float, float] = (2.0, 10.0)
    seed: int = 0

    def __post_init__(self) -> None:
        names = [e.name for e in self.estimators]
        dup = sorted({n for n in names if names.count(n) > 1})
        if dup:
            raise ConfigError(f"estimators: duplicate names {dup}")
        t0, t1 = self.metrics_window
        if not 0 <= t0 < t1 <= self.trajectory.duration + 1e-12:
            raise ConfigError(
                f"metrics_window: [{t0}, {t1}] must satisfy 0 <= t0 < t1 <= duration ({self.trajectory.duration})"
            )
        if np.linalg.norm(self.m) < 1e-9:
            raise ConfigError("m: field direction must be non-zero")

    @property
    def m_unit(self) -> NDArray[np.float64]:
        return normalize_s2(np.asarray(self.m, dtype=float))

    def with_seed(self, seed: int) -> "ScenarioConfig":
        return replace(self, seed=int(seed))

    def with_estimators(self, estimators) -> "ScenarioConfig":
        return replace(self, estimators=tuple(estimators))

    def noise_spec(self) -> NoiseSpec | None:
        return None if self.noise is None else self.noise.with_seed(self.seed)

    def to_dict(self) -> dict:
        tr = self.trajectory
        traj = {
            "duration": tr.duration,
            "dt": tr.dt,
            "omega_waves": _jsonable(tr.omega_waves),
            "vel_waves": _jsonable(tr.vel_waves),
            "R0": np.asarray(tr.R0).tolist(),
        }
        if self.noise is None:
            noise: Any = "none"
        else:
            noise = {ch: {"std": getattr(self.noise, ch).std, "bias": list(getattr(self.noise, ch).bias)} for ch in CHANNELS}
        init = self.init_policy if isinstance(self.init_policy, str) else {"Rhat0": np.asarray(self.init_policy).tolist()}
        return {
            "trajectory": traj,
            "noise": noise,
            "m": [float(c) for c in self.m],
            "g0": self.g0,
            "seed": self.seed,
            "init_policy": init,
            "metrics_window": list(self.metrics_window),
            "estimators": [e.to_dict() for e in self.estimators],
        }


def _jsonable(x):
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    return float(x)


def _require(cond: bool, where: str, msg: str) -> None:
    if not cond:
        raise ConfigError(f"{where}: {msg}")


def _number(d: dict, key: str, where: str, default=None):
    if key not in d:
        return default
    v = d[key]
    _require(isinstance(v, (int, float)) and not isinstance(v, bool), f"{where}.{key}", "expected a number")
    _require(math.isfinite(v), f"{where}.{key}", "must be finite")
    return float(v)


def _parse_trajectory(d: Any) -> TrajectorySpec:
    _require(isinstance(d, dict), "trajectory", "expected an object")
    unknown = set(d) - {"duration", "dt", "omega_waves", "vel_waves", "R0"}
    _require(not unknown, "trajectory", f"unknown keys {sorted(unknown)}")
    kw: dict[str, Any] = {}
    for key in ("duration", "dt"):
        v = _number(d, key, "trajectory")
        if v is not None:
            kw[key] = v
    for key in ("omega_waves", "vel_waves"):
        if key in d:
            kw[key] = _to_tuple(d[key])
    if "R0" in d:
        R0 = np.asarray(d["R0"], dtype=float)
        _require(R0.shape == (3, 3) and is_rotation(R0, 1e-9), "trajectory.R0", "expected a 3x3 rotation matrix")
        kw["R0"] = R0
    try:
        return TrajectorySpec(**kw)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"trajectory: {exc}") from None


def _to_tuple(x):
    return tuple(_to_tuple(v) for v in x) if isinstance(x, (list, tuple)) else x


def _parse_noise(d: Any) -> NoiseSpec | None:
    if d is None or d == "none":
        return None
    if d == "benchmark":
        return NoiseSpec.benchmark()
    _require(isinstance(d, dict), "noise", 'expected "none", "benchmark" or an object')
    unknown = set(d) - set(CHANNELS)
    _require(not unknown, "noise", f"unknown channels {sorted(unknown)}")
    kw = {}
    for ch in CHANNELS:
        c = d.get(ch, {})
        where = f"noise.{ch}"
        _require(isinstance(c, dict), where, "expected an object")
        std = _number(c, "std", where, 0.0)
        bias = c.get("bias", [0.0, 0.0, 0.0])
        _require(isinstance(bias, list) and len(bias) == 3, f"{where}.bias", "expected three numbers")
        try:
            kw[ch] = ChannelNoise(std, tuple(float(b) for b in bias))
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"{where}: {exc}") from None
    return NoiseSpec(**kw)


def _parse_estimator(d: Any, i: int) -> EstimatorConfig:
    where = f"estimators[{i}]"
    _require(isinstance(d, dict), where, "expected an object")
    unknown = set(d) - {"name", "kind", "gains", "order", "tilt_output"}
    _require(not unknown, where, f"unknown keys {sorted(unknown)}")
    name = d.get("name")
    _require(isinstance(name, str) and name != "", f"{where}.name", "expected a non-empty string")
    _require("." not in name and "[" not in name and "," not in name, f"{where}.name", "must not contain '.', '[' or ','")
    kind = d.get("kind")
    _require(kind in KINDS, f"{where}.kind", f"unknown estimator kind {kind!r}; expected one of {list(KINDS)}")
    gains = d.get("gains", {})
    _require(isinstance(gains, dict), f"{where}.gains", "expected an object")
    unknown = set(gains) - _GAIN_KEYS[kind]
    _require(not unknown, f"{where}.gains", f"unknown keys {sorted(unknown)} for kind {kind!r}")
    for k, v in gains.items():
        if k == "alphas":
            _require(
                isinstance(v, list) and len(v) > 0 and all(isinstance(a, (int, float)) for a in v),
                f"{where}.gains.alphas",
                "expected a non-empty list of numbers",
            )
        else:
            _number(gains, k, f"{where}.gains")
    order = d.get("order")
    if order is not None:
        _require(isinstance(order, int) and order >= 1, f"{where}.order", "expected a positive integer")
        _require(kind in ("two_step", "hierarchic", "invariant", "attitude"), f"{where}.order", f"not used by kind {kind!r}")
        if "alphas" in gains:
            _require(len(gains["alphas"]) == order, f"{where}.order", "does not match the number of alphas")
    tilt_output = d.get("tilt_output", "xhat2")
    _require(tilt_output in ("xhat2", "xhat2_prime"), f"{where}.tilt_output", 'expected "xhat2" or "xhat2_prime"')
    _require(tilt_output == "xhat2" or kind == "two_step", f"{where}.tilt_output", "only two_step has xhat2_prime")
    return EstimatorConfig(name, kind, dict(gains), order, tilt_output)


def config_from_dict(d: Any) -> ScenarioConfig:
    """Validate and convert a parsed JSON document.

    Raises
    ------
    ConfigError
        With the path of the offending field.
    """
    _require(isinstance(d, dict), "config", "expected a JSON object")
    known = {"trajectory", "noise", "m", "g0", "estimators", "init_policy", "metrics_window", "seed"}
    unknown = set(d) - known
    _require(not unknown, "config", f"unknown keys {sorted(unknown)}")
    kw: dict[str, Any] = {}
    kw["trajectory"] = _parse_trajectory(d.get("trajectory", {}))
    kw["noise"] = _parse_noise(d.get("noise", "none"))
    if "m" in d:
        m = d["m"]
        _require(isinstance(m, list) and len(m) == 3 and all(isinstance(c, (int, float)) for c in m), "m", "expected three numbers")
        kw["m"] = tuple(float(c) for c in m)
    g0 = _number(d, "g0", "config")
    if g0 is not None:
        _require(g0 > 0, "g0", "must be positive")
        kw["g0"] = g0
    if "seed" in d:
        s = d["seed"]
        _require(isinstance(s, int) and not isinstance(s, bool) and s >= 0, "seed", "expected a non-negative integer")
        kw["seed"] = s
    if "metrics_window" in d:
        w = d["metrics_window"]
        _require(isinstance(w, list) and len(w) == 2 and all(isinstance(c, (int, float)) for c in w), "metrics_window", "expected [t0, t1]")
        kw["metrics_window"] = (float(w[0]), float(w[1]))
    init = d.get("init_policy", "truth")
    if isinstance(init, dict):
        _require(set(init) == {"Rhat0"}, "init_policy", 'explicit policy must be {"Rhat0": [[...]]}')
        R = np.asarray(init["Rhat0"], dtype=float)
        _require(R.shape == (3, 3) and is_rotation(R, 1e-9), "init_policy.Rhat0", "expected a 3x3 rotation matrix")
        kw["init_policy"] = R
    else:
        _require(init in ("truth", "undesired_equilibrium"), "init_policy", f"unknown policy {init!r}")
        kw["init_policy"] = init
    ests = d.get("estimators", [])
    _require(isinstance(ests, list), "estimators", "expected a list")
    kw["estimators"] = tuple(_parse_estimator(e, i) for i, e in enumerate(ests))
    return ScenarioConfig(**kw)


def load_config(path: str | Path) -> ScenarioConfig:
    """Read a scenario file; parse errors name the line and column."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror or exc}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    try:
        return config_from_dict(doc)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def save_config(cfg: ScenarioConfig, path: str | Path) -> None:
    Path(path).write_text(json.dumps(cfg.to_dict(), indent=2) + "\n", encoding="utf-8")


def comparison_estimators(gamma: float = DEFAULT_GAMMA, g0: float = G0) -> tuple[EstimatorConfig, ...]:
    """The five-estimator bank of the noisy comparison."""
    a = default_pole(gamma, g0)
    stage = {"alphas": [gamma * g0, a], "gamma": gamma}
    return (
        EstimatorConfig("hierarchic", "hierarchic", {**stage, "rho1": gamma, "mu": 20.0}),
        EstimatorConfig("invariant", "invariant", {**stage, "rho1": gamma, "rho2": 20.0}),
        EstimatorConfig("one_step", "one_step", {"alpha": a, "gamma": gamma}),
        EstimatorConfig("hua2016", "hua_attitude", {"k1v": a, "k2v": a, "k1r": gamma, "k2r": 20.0}),
        EstimatorConfig("martin2016", "martin", {"L": a / 2, "K": a / 2, "M": 20.0}),
    )


def order_estimators(orders=(1, 2, 3), tilt_output: str = "xhat2_prime") -> tuple[EstimatorConfig, ...]:
    """Two-step observers of increasing order with all poles at ``-2 sqrt(gamma g0)``."""
    return tuple(EstimatorConfig(f"two_step_n{n}", "two_step", {}, n, tilt_output) for n in orders)


def default_config(seed: int = 0) -> ScenarioConfig:
    """Noisy comparison from the undesired equilibrium, 10 s at 1 kHz."""
    return ScenarioConfig(
        noise=NoiseSpec.benchmark(),
        estimators=comparison_estimators(),
        init_policy="undesired_equilibrium",
        seed=seed,
    )


def resolve_seed(cfg: ScenarioConfig, seed: int | None = None, env: dict | None = None) -> ScenarioConfig:
    """Apply seed overrides: explicit argument, then ``VELAID_SEED``, then the config."""
    env = os.environ if env is None else env
    if seed is None and env.get(SEED_ENV, "").strip():
        raw = env[SEED_ENV].strip()
        try:
            seed = int(raw)
        except ValueError:
            raise ConfigError(f"{SEED_ENV}: expected a non-negative integer, got {raw!r}") from None
        if seed < 0:
            raise ConfigError(f"{SEED_ENV}: expected a non-negative integer, got {raw!r}")
    return cfg if seed is None else cfg.with_seed(seed)


# -- estimator bank ---------------------------------------------------------------


@dataclass(frozen=True)
class BuiltEstimator:
    """Validated gains for one bank entry."""

    config: EstimatorConfig
    tilt_gains: TwoStepGains | OneStepGains | HuaGains | MartinGains
    att_gains: AttitudeGains | None = None

    @property
    def name(self) -> str:
        return self.config.name

    @property
    def kind(self) -> str:
        return self.config.kind


def _stage_gains(ec: EstimatorConfig, g0: float, default_order: int) -> TwoStepGains:
    g = ec.gains
    gamma = float(g.get("gamma", DEFAULT_GAMMA))
    if "alphas" in g:
        return TwoStepGains(tuple(g["alphas"]), gamma, g0)
    n = ec.order or default_order
    if ec.kind != "two_step" and n == 2:
        return TwoStepGains((gamma * g0, default_pole(gamma, g0)), gamma, g0)
    return TwoStepGains.multiple_pole(n, gamma, g0)


def build_estimator(ec: EstimatorConfig, g0: float = G0) -> BuiltEstimator:
    """Check gain conditions; raises :class:`GainConditionError` or :class:`NotHurwitzError`."""
    g = ec.gains
    a = default_pole(float(g.get("gamma", DEFAULT_GAMMA)), g0)
    if ec.kind == "two_step":
        return BuiltEstimator(ec, _stage_gains(ec, g0, 1))
    if ec.kind == "one_step":
        return BuiltEstimator(ec, OneStepGains(float(g.get("alpha", a)), float(g.get("gamma", DEFAULT_GAMMA)), g0))
    if ec.kind in ("hua", "hua_attitude"):
        k1r = float(g.get("k1r", DEFAULT_GAMMA))
        hg = HuaGains(float(g.get("k1v", a)), float(g.get("k2v", a)), k1r, g0)
        att = AttitudeGains(k1r, 0.0, float(g.get("k2r", 20.0))) if ec.kind == "hua_attitude" else None
        return BuiltEstimator(ec, hg, att)
    if ec.kind == "martin":
        return BuiltEstimator(ec, MartinGains(float(g.get("L", a / 2)), float(g.get("K", a / 2)), float(g.get("M", 20.0)), g0))
    stage = _stage_gains(ec, g0, 2)
    rho1 = float(g.get("rho1", stage.gamma))
    if ec.kind == "hierarchic":
        att = AttitudeGains.hierarchic(rho1, float(g.get("mu", 20.0)))
    elif ec.kind == "invariant":
        att = AttitudeGains.invariant(rho1, float(g.get("rho2", 20.0)))
    else:
        att = AttitudeGains(rho1, float(g.get("rho2", 0.0)), float(g.get("mu", 20.0)))
    return BuiltEstimator(ec, stage, att)


def build_bank(cfg: ScenarioConfig) -> tuple[list[BuiltEstimator], dict[str, str]]:
    """Build every estimator; returns the valid ones and ``{name: reason}`` for the rejected."""
    ok, rejected = [], {}
    for ec in cfg.estimators:
        try:
            ok.append(build_estimator(ec, cfg.g0))
        except VelaidError as exc:
            rejected[ec.name] = f"{type(exc).__name__}: {exc}"
    return ok, rejected


@dataclass
class EstimatorOutput:
    """Per-sample estimator history plus the metric inputs."""

    name: str
    kind: str
    tilt: NDArray[np.float64]
    Rhat: NDArray[np.float64] | None
    blocks: dict[str, NDArray[np.float64]]
    tilt_angle: NDArray[np.float64]
    tilt_valid: NDArray[np.bool_]
    yaw_angle: NDArray[np.float64] | None = None
    yaw_valid: NDArray[np.bool_] | None = None


def initial_rhat(cfg: ScenarioConfig, traj: Trajectory) -> NDArray[np.float64] | None:
    """``Rhat(0)`` for the policy, ``None`` for truth initialization."""
    if isinstance(cfg.init_policy, str):
        if cfg.init_policy == "truth":
            return None
        return undesired_init(cfg.m_unit).T @ traj.R[0]
    return np.asarray(cfg.init_policy, dtype=float)


def _vn_series(psi: NDArray, z2: NDArray, gains: TwoStepGains) -> NDArray[np.float64]:
    P = solve_lyapunov(companion(gains.alphas))
    flat = psi.reshape(len(psi), -1)
    return np.einsum("ij,ki,kj->k", P, flat, flat) + np.einsum("kd,kd->k", z2, z2) / (2.0 * gains.gamma)


def run_estimator(be: BuiltEstimator, cfg: ScenarioConfig, traj: Trajectory, series: ImuSeries) -> EstimatorOutput:
    """Run one bank entry over the shared stream from the configured initial state."""
    m = cfg.m_unit
    dt = traj.dt
    Rh0 = initial_rhat(cfg, traj)
    truth0 = traj[0]
    yv = series.y_v[0]
    if Rh0 is not None:
        x2h, x3h = Rh0.T @ E_Z, Rh0.T @ m
    blocks: dict[str, NDArray] = {}
    Rhat = None
    kind = be.kind
    g = be.tilt_gains

    if kind == "two_step":
        if Rh0 is None:
            st = TwoStepState.from_truth(truth0, g)
        else:
            st = TwoStepState.initial(g, yv, x2h, xhat2_prime=None if g.order == 1 else x2h, y_v=yv)
        tr = run_tilt(st, series, dt, g)
        blocks.update(xhat1=tr.xhat1, xhat2_prime=tr.xhat2_prime, xhat2=tr.xhat2)
        psi, z2 = two_step_errors(traj, tr, g)
        blocks["V"] = _vn_series(psi, z2, g)
        tilt = tr.xhat2_prime if be.config.tilt_output == "xhat2_prime" else tr.xhat2
    elif kind in ("one_step", "hua"):
        cls = OneStepState if kind == "one_step" else HuaState
        st = cls.from_truth(truth0, g) if Rh0 is None else cls(yv, x2h, g)
        tr = run_tilt(st, series, dt)
        blocks.update(xhat1=tr.xhat1, xhat2=tr.xhat2)
        if kind == "one_step":
            z1, z2 = one_step_errors(traj, tr)
            u = g.alpha * z1 + g.g0 * z2
            blocks["V"] = 0.5 * np.einsum("kd,kd->k", u, u) + 0.5 * g.g0**2 * np.einsum("kd,kd->k", z2, z2)
        tilt = tr.xhat2
    elif kind == "martin":
        if Rh0 is None:
            ts = MartinTiltState.from_truth(truth0, g, m)
        else:
            ts = MartinTiltState(yv, x2h, x3h, g)
        mt = run_martin_attitude(MartinAttitudeState.from_chains(ts, m), series, dt)
        Rhat = mt.Rhat
        blocks.update(
            xhat1=mt.tilt.xhat1,
            xhat2_prime=mt.tilt.xhat2_prime,
            xhat3_prime=mt.tilt.xhat3_prime,
            Rhat=Rhat.reshape(len(Rhat), 9),
            valid=mt.valid.astype(float),
        )
        tilt = mt.tilt.xhat2_prime
    else:
        if kind == "hua_attitude":
            stage = HuaState.from_truth(truth0, g) if Rh0 is None else HuaState(yv, x2h, g)
            tg = None
        else:
            stage = TwoStepState.from_truth(truth0, g) if Rh0 is None else TwoStepState.initial(
                g, yv, x2h, xhat2_prime=None if g.order == 1 else x2h, y_v=yv
            )
            tg = g
        R0 = traj.R[0] if Rh0 is None else Rh0
        at = run_attitude(AttitudeObserverState(R0, stage, be.att_gains, tg), series, m, dt)
        Rhat = at.Rhat
        blocks.update(xhat1=at.tilt.xhat1, xhat2=at.tilt.xhat2)
        if at.tilt.xhat2_prime is not None:
            blocks["xhat2_prime"] = at.tilt.xhat2_prime
        blocks["Rhat"] = Rhat.reshape(len(Rhat), 9)
        tilt = at.tilt_of_rhat

    ta, tv = tilt_angle_series(traj, tilt)
    out = EstimatorOutput(be.name, kind, tilt, Rhat, blocks, ta, tv)
    blocks["tilt_angle"] = ta
    if Rhat is not None:
        ya, yvld = yaw_proxy_series(traj.R, Rhat, m)
        out.yaw_angle, out.yaw_valid = ya, yvld
        blocks["yaw_angle"] = ya
    return out


# -- reports ----------------------------------------------------------------------

REPORT_COLUMNS = ("estimator", "mean_tilt_angle_rad", "mean_yaw_proxy_rad", "convergence_time_s", "invalid_samples")


@dataclass(frozen=True)
class ReportRow:
    estimator: str
    mean_tilt_angle_rad: float
    mean_yaw_proxy_rad: float  # NaN for tilt-only estimators
    convergence_time_s: float  # NaN if never converged
    invalid_samples: int


@dataclass(frozen=True)
class ComparisonReport:
    window: tuple[float, float]
    rows: tuple[ReportRow, ...]
    seed: int | None = None

    def row(self, name: str) -> ReportRow:
        for r in self.rows:
            if r.estimator == name:
                return r
        raise KeyError(name)

    @property
    def tilt(self) -> dict[str, float]:
        return {r.estimator: r.mean_tilt_angle_rad for r in self.rows}

    @property
    def yaw(self) -> dict[str, float]:
        return {r.estimator: r.mean_yaw_proxy_rad for r in self.rows if not math.isnan(r.mean_yaw_proxy_rad)}


def _window_mean(t, angle, valid, window) -> tuple[float, int]:
    t0, t1 = window
    sel = (t >= t0 - 1e-12) & (t <= t1 + 1e-12)
    invalid = int(np.count_nonzero(sel & ~valid))
    try:
        mean, _ = mean_error_window(t, angle, t0, t1, valid)
    except ValueError:
        mean = float("nan")
    return mean, invalid


def summarize(out: EstimatorOutput, t: NDArray, window: tuple[float, float]) -> ReportRow:
    tilt, bad = _window_mean(t, out.tilt_angle, out.tilt_valid, window)
    yaw = float("nan")
    if out.yaw_angle is not None:
        yaw, bad_y = _window_mean(t, out.yaw_angle, out.yaw_valid, window)
        bad = max(bad, bad_y)
    conv = convergence_time(t, out.tilt_angle, CONVERGENCE_THRESHOLD, CONVERGENCE_HOLD)
    return ReportRow(out.name, tilt, yaw, conv, bad)


def write_report(rep: ComparisonReport, path: str | Path) -> None:
    """Report CSV; one ``#`` line carries the window and seed."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        fh.write(f"# window={rep.window[0]!r},{rep.window[1]!r} seed={'' if rep.seed is None else rep.seed}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for r in rep.rows:
            w.writerow([r.estimator, "%.17g" % r.mean_tilt_angle_rad, "%.17g" % r.mean_yaw_proxy_rad,
                        "%.17g" % r.convergence_time_s, r.invalid_samples])


def read_report(path: str | Path) -> ComparisonReport:
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror or exc}") from None
    window, seed = None, None
    body = []
    for ln in lines:
        if ln.startswith("#"):
            for tok in ln[1:].split():
                key, _, val = tok.partition("=")
                if key == "window":
                    a, _, b = val.partition(",")
                    window = (float(a), float(b))
                elif key == "seed" and val:
                    seed = int(val)
        elif ln.strip():
            body.append(ln)
    if window is None:
        raise ConfigError(f"{path}: missing window metadata line")
    reader = csv.reader(body)
    header = next(reader, None)
    if header is None or tuple(header) != REPORT_COLUMNS:
        raise ConfigError(f"{path}: expected columns {','.join(REPORT_COLUMNS)}")
    rows = []
    for i, r in enumerate(reader, start=1):
        if len(r) != len(REPORT_COLUMNS):
            raise ConfigError(f"{path}: row {i} has {len(r)} columns")
        try:
            rows.append(ReportRow(r[0], float(r[1]), float(r[2]), float(r[3]), int(r[4])))
        except ValueError:
            raise ConfigError(f"{path}: row {i} is not numeric") from None
    return ComparisonReport(window, tuple(rows), seed)


def format_report(rep: ComparisonReport) -> str:
    lines = [f"{'estimator':<16} {'tilt [rad]':>12} {'yaw proxy [rad]':>16} {'t_conv [s]':>11} {'invalid':>8}"]
    for r in rep.rows:
        yaw = "-" if math.isnan(r.mean_yaw_proxy_rad) else f"{r.mean_yaw_proxy_rad:.4f}"
        conv = "never" if math.isnan(r.convergence_time_s) else f"{r.convergence_time_s:.3f}"
        lines.append(f"{r.estimator:<16} {r.mean_tilt_angle_rad:>12.4f} {yaw:>16} {conv:>11} {r.invalid_samples:>8}")
    return "\n".join(lines)


# -- runs -------------------------------------------------------------------------


@dataclass
class ScenarioRun:
    config: ScenarioConfig
    trajectory: Trajectory
    series: ImuSeries
    outputs: list[EstimatorOutput]
    report: ComparisonReport

    def record(self) -> RunRecord:
        rr = RunRecord.from_run(self.trajectory, self.series)
        for out in self.outputs:
            for fld, arr in out.blocks.items():
                rr.add(f"{out.name}.{fld}", arr)
        return rr


def simulate(cfg: ScenarioConfig) -> tuple[Trajectory, ImuSeries]:
    """Ground truth and the (possibly noisy) measurement stream for ``cfg.seed``."""
    traj = gen_trajectory(cfg.trajectory)
    series = synth_series(traj, cfg.m_unit, cfg.g0)
    spec = cfg.noise_spec()
    if spec is not None:
        series = add_noise_series(series, spec)
    return traj, series


def run_scenario(cfg: ScenarioConfig) -> ScenarioRun:
    """Execute the bank on one shared stream.

    Raises
    ------
    ConfigError
        Listing every estimator whose gains violate a condition; nothing runs.
    """
    bank, rejected = build_bank(cfg)
    if rejected:
        detail = "; ".join(f"{k}: {v}" for k, v in rejected.items())
        raise ConfigError(f"rejected estimator gains: {detail}")
    traj, series = simulate(cfg)
    outputs = [run_estimator(be, cfg, traj, series) for be in bank]
    rows = tuple(summarize(o, traj.t, cfg.metrics_window) for o in outputs)
    return ScenarioRun(cfg, traj, series, outputs, ComparisonReport(cfg.metrics_window, rows, cfg.seed))


def compare_reports(reports: list[ComparisonReport], labels: list[str] | None = None) -> list[tuple[str, ReportRow]]:
    """Rows of all reports sorted by tilt, then yaw proxy (NaN last); ties keep input order.

    Raises
    ------
    ConfigError
        If the reports were computed over different windows.
    """
    if not reports:
        return []
    windows = {tuple(r.window) for r in reports}
    if len(windows) > 1:
        raise ConfigError(f"incompatible metric windows {sorted(windows)}")
    labels = labels or [str(i) for i in range(len(reports))]
    rows = [(lab, row) for lab, rep in zip(labels, reports) for row in rep.rows]

    def key(item):
        r = item[1]
        t, y = r.mean_tilt_angle_rad, r.mean_yaw_proxy_rad
        return (math.isnan(t), 0.0 if math.isnan(t) else t, math.isnan(y), 0.0 if math.isnan(y) else y)

    return sorted(rows, key=key)


__all__ = [
    "KINDS",
    "SEED_ENV",
    "EstimatorConfig",
    "ScenarioConfig",
    "config_from_dict",
    "load_config",
    "save_config",
    "default_config",
    "comparison_estimators",
    "order_estimators",
    "resolve_seed",
    "BuiltEstimator",
    "build_estimator",
    "build_bank",
    "EstimatorOutput",
    "initial_rhat",
    "run_estimator",
    "ReportRow",
    "ComparisonReport",
    "summarize",
    "write_report",
    "read_report",
    "format_report",
    "ScenarioRun",
    "simulate",
    "run_scenario",
    "compare_reports",
]

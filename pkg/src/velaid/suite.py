"""Property suite behind ``velaid stability-check``.

Every check is measured on the scenario's noise-free trajectory (or on the
autonomous error flows) for the configured gains and returns the measured
quantity next to its bound.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from numpy.typing import NDArray

from . import analysis as A
from .attitude import (
    AttitudeGains,
    AttitudeObserverState,
    QuatErrorState,
    integrate_quat_error,
    quat_error_rhs,
    run_attitude,
)
from .bench import BuiltEstimator, ScenarioConfig, _vn_series, build_bank, run_estimator
from .companion import companion, lyapunov_residual, solve_lyapunov
from .measurement import Trajectory, ImuSeries, gen_trajectory, synth_series
from .so3 import E_Z, angle_between, check_skew_identities, geodesic_angle, normalize_s2, random_rotation
from .tilt import (
    HuaState,
    OneStepState,
    TwoStepGains,
    TwoStepState,
    run_tilt,
)

DRIFT_TOL = 1e-9
LYAP_TOL = 1e-8
# Observer runs track the continuous error only down to the interpolation
# error; monotonicity is checked while V exceeds this fraction of V(0).
LYAP_FLOOR = 1e-12
N_RANDOM_STATES = 10_000


@dataclass(frozen=True)
class CheckResult:
    estimator: str
    check: str
    status: str  # "pass" | "fail" | "rejected"
    measured: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status != "fail"

    def line(self) -> str:
        vals = " ".join(f"{k}={_fmt(v)}" for k, v in self.measured.items())
        return f"[{self.status.upper():8}] {self.estimator:<14} {self.check:<24} {vals}"


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return f"{v:.6g}"
    if isinstance(v, (list, tuple, np.ndarray)):
        return "[" + ",".join(_fmt(x) for x in v) + "]"
    return str(v)


@dataclass(frozen=True)
class SuiteReport:
    checks: tuple[CheckResult, ...]

    @property
    def passed(self) -> bool:
        return all(c.ok for c in self.checks)

    def format(self) -> str:
        lines = [c.line() for c in self.checks]
        n_fail = sum(not c.ok for c in self.checks)
        lines.append(f"{len(self.checks)} checks, {n_fail} failed: {'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines)


def _check(est: str, name: str, ok: bool, **measured) -> CheckResult:
    return CheckResult(est, name, "pass" if ok else "fail", measured)


def random_tilt(rng: np.random.Generator, x2: NDArray, exclusion: float = 1e-3) -> NDArray[np.float64]:
    """Uniform unit vector at least ``exclusion`` rad away from the antipode of ``x2``."""
    while True:
        u = normalize_s2(rng.standard_normal(3))
        if angle_between(u, -np.asarray(x2)) > exclusion:
            return u


def random_two_step_state(rng, gains: TwoStepGains, traj: Trajectory, y_v0, exclusion: float = 1e-3) -> TwoStepState:
    x2h = random_tilt(rng, traj.tilt[0], exclusion)
    xhat1 = traj.v[0] + rng.standard_normal(3)
    n = gains.order
    x2p = None if n == 1 else traj.tilt[0] + rng.standard_normal(3)
    p = rng.standard_normal((max(n - 2, 0), 3)) * 0.1
    return TwoStepState.initial(gains, xhat1, x2h, xhat2_prime=x2p, p=p, y_v=y_v0)


def _tilt_final_error(traj: Trajectory, xhat2: NDArray) -> float:
    return angle_between(traj.tilt[-1], xhat2[-1])


def _unit_drift(x: NDArray) -> float:
    return float(np.max(np.abs(np.linalg.norm(x, axis=1) - 1.0)))


def _so3_drift(R: NDArray) -> float:
    E = np.einsum("kji,kjl->kil", R, R) - np.eye(3)
    return float(np.max(np.abs(E)))


def _monotone(V: NDArray) -> float:
    V = np.asarray(V)
    sel = V[:-1] > LYAP_FLOOR * V[0]
    inc = np.diff(V)[sel] / V[:-1][sel]
    return float(np.max(inc, initial=-np.inf))


# -- per-kind checks ----------------------------------------------------------


def _two_step_checks(be: BuiltEstimator, traj, series, rng, n_inits) -> list[CheckResult]:
    g: TwoStepGains = be.tilt_gains
    name = be.name
    out = []
    sys = companion(g.alphas)
    P = solve_lyapunov(sys)
    res = lyapunov_residual(sys, P)
    out.append(_check(name, "lyapunov_equation", res <= 1e-8, residual=res))

    st = random_two_step_state(rng, g, traj, series.y_v[0])
    tr = run_tilt(st, series, traj.dt, g)
    psi, z2 = A.two_step_errors(traj, tr, g)
    nrm = np.linalg.norm(psi.reshape(len(psi), -1), axis=1)
    sel = nrm > 1e-6 * nrm[0]
    slope = A.fit_log_slope(traj.t[sel], nrm[sel])
    if g.order == 1:
        rel = abs(slope / -g.alphas[0] - 1.0)
        out.append(_check(name, "first_stage_rate", rel <= 0.01, slope=slope, expected=-g.alphas[0], rel_err=rel))
    else:
        # |psi(t)| <= sqrt(cond P) |psi(0)| exp(-t / (2 lambda_max P)) from the quadratic bound.
        ev = np.linalg.eigvalsh(P)
        rate = 1.0 / (2.0 * ev[-1])
        keep = nrm > 1e-9 * nrm[0]
        excess = float(np.max(np.log(nrm[keep] / nrm[0]) + rate * traj.t[keep]) - 0.5 * np.log(ev[-1] / ev[0]))
        out.append(_check(name, "first_stage_bound", excess <= 0.0, slope=slope, re_alpha=A.re_alpha(g.alphas), excess=excess))
    V = _vn_series(psi, z2, g)
    inc = _monotone(V)
    out.append(_check(name, "lyapunov_monotone", inc <= LYAP_TOL, max_rel_increase=inc))

    # autonomous flow with z2 on the constraint sphere
    x0 = np.concatenate([rng.standard_normal(3 * g.order) * 0.5, E_Z - normalize_s2(rng.standard_normal(3))])
    n = g.order
    flow = A.integrate_flow(lambda x: A.two_step_error_rhs(x, g.alphas, g.gamma), x0, 1e-3, 3000, slice(3 * n, 3 * n + 3))
    Vf = np.array([A.lyapunov_vn(x[: 3 * n], x[3 * n :], P, g.gamma) for x in flow])
    out.append(_check(name, "flow_lyapunov_monotone", _monotone(Vf) <= LYAP_TOL, max_rel_increase=_monotone(Vf)))

    fails, drift = 0, _unit_drift(tr.xhat2)
    for _ in range(n_inits):
        s = random_two_step_state(rng, g, traj, series.y_v[0])
        t = run_tilt(s, series, traj.dt, g)
        fails += _tilt_final_error(traj, t.xhat2) >= 1e-3
        drift = max(drift, _unit_drift(t.xhat2))
    out.append(_check(name, "convergence", fails == 0, inits=n_inits, not_converged=fails))
    out.append(_check(name, "unit_norm_drift", drift <= DRIFT_TOL, drift=drift))
    return out


def _one_step_checks(be: BuiltEstimator, traj, series, rng, n_inits) -> list[CheckResult]:
    name, kind = be.name, be.kind
    g = be.tilt_gains
    out = []
    cls = OneStepState if kind == "one_step" else HuaState

    def rand_state():
        return cls(traj.v[0] + rng.standard_normal(3), random_tilt(rng, traj.tilt[0]), g)

    if kind == "one_step":
        st = rand_state()
        tr = run_tilt(st, series, traj.dt)
        z1, z2 = A.one_step_errors(traj, tr)
        V = np.array([A.lyapunov_one_step(a, b, g.alpha, g.g0) for a, b in zip(z1, z2)])
        inc = _monotone(V)
        out.append(_check(name, "lyapunov_monotone", inc <= LYAP_TOL, max_rel_increase=inc))
        worst = -np.inf
        for _ in range(N_RANDOM_STATES):
            zz1 = rng.standard_normal(3) * rng.uniform(0, 5)
            zz2 = E_Z - normalize_s2(rng.standard_normal(3))
            worst = max(worst, A.vdot_one_step(zz1, zz2, g.alpha, g.gamma, g.g0))
        out.append(_check(name, "vdot_nonpositive", worst <= 1e-12, states=N_RANDOM_STATES, max_vdot=worst))
    fails, drift = 0, 0.0
    for _ in range(n_inits):
        t = run_tilt(rand_state(), series, traj.dt)
        fails += _tilt_final_error(traj, t.xhat2) >= 1e-3
        drift = max(drift, _unit_drift(t.xhat2))
    out.append(_check(name, "convergence", fails == 0, inits=n_inits, not_converged=fails))
    out.append(_check(name, "unit_norm_drift", drift <= DRIFT_TOL, drift=drift))
    return out


def _attitude_checks(be: BuiltEstimator, cfg: ScenarioConfig, traj, series, rng, n_inits) -> list[CheckResult]:
    name = be.name
    gains: AttitudeGains = be.att_gains
    m = cfg.m_unit
    out = []
    fails, drift_r, drift_x = 0, 0.0, 0.0
    for _ in range(n_inits):
        R0 = random_rotation(rng)
        x2h = R0.T @ E_Z
        if be.kind == "hua_attitude":
            stage, tg = HuaState(traj.v[0] + rng.standard_normal(3), x2h, be.tilt_gains), None
        else:
            tg = be.tilt_gains
            stage = TwoStepState.initial(tg, series.y_v[0], x2h, xhat2_prime=None if tg.order == 1 else x2h, y_v=series.y_v[0])
        at = run_attitude(AttitudeObserverState(R0, stage, gains, tg), series, m, traj.dt)
        err = geodesic_angle(traj.R[-1], at.Rhat[-1])
        fails += err >= 1e-3
        drift_r = max(drift_r, _so3_drift(at.Rhat))
        drift_x = max(drift_x, _unit_drift(at.tilt.xhat2))
    out.append(_check(name, "attitude_convergence", fails == 0, inits=n_inits, not_converged=fails))
    out.append(_check(name, "so3_drift", drift_r <= DRIFT_TOL, drift=drift_r))
    out.append(_check(name, "unit_norm_drift", drift_x <= DRIFT_TOL, drift=drift_x))

    if gains.rho2 > 0:
        w = A.build_wrho(gains.rho1, gains.rho2, m)
        out.append(_check(name, "w_rho_positive", w.lambda_min > 0, eigenvalues=w.eigenvalues))
        tg = be.tilt_gains
        alpha1 = tg.alphas[0] if isinstance(tg, TwoStepGains) and tg.order == 1 else A.re_alpha(getattr(tg, "alphas", (1.0,)))
        D, e_p, _ = w.principal()
        re, fd_err = [], 0.0
        for j in range(3):
            v = np.zeros(3)
            v[j] = 1.0
            lin = A.linearization_A(w, j, gains, alpha1, W=D, e_z=e_p, v=v)
            x = np.concatenate([np.zeros(3), [0.0], v])
            J = A.fd_jacobian(lambda x: quat_error_rhs(x, gains, alpha1, D, e_p), x)
            re.append(lin.max_real)
            fd_err = max(fd_err, float(np.max(np.abs(J - lin.matrix))))
        out.append(_check(name, "undesired_unstable", min(re) > 0, max_real=re))
        out.append(_check(name, "linearization_vs_fd", fd_err <= 1e-5, max_abs_diff=fd_err))
        worst, worst_gap = -np.inf, -np.inf
        for _ in range(N_RANDOM_STATES):
            z = rng.standard_normal(3) * rng.uniform(0, 2)
            q = normalize_s2(rng.standard_normal(4))
            vd = A.vdot_att(z, q, w.matrix, gains)
            worst = max(worst, vd)
            worst_gap = max(worst_gap, vd - A.vdot_att_bound(z, q, w.matrix, gains.rho1))
        out.append(_check(name, "vdot_att_nonpositive", worst <= 1e-12 and worst_gap <= 1e-9,
                          states=N_RANDOM_STATES, max_vdot=worst, max_above_bound=worst_gap))
        q0 = normalize_s2(rng.standard_normal(4))
        xi = QuatErrorState(q0, rng.standard_normal(3))
        flow = integrate_quat_error(xi, gains, alpha1, w.matrix, 1e-3, 5000)
        V = np.array([A.lyapunov_att(x[0:3], x[3:7], w.matrix, gains.rho1, alpha1) for x in flow])
        inc = _monotone(V)
        qd = _unit_drift(flow[:, 3:7])
        out.append(_check(name, "flow_lyapunov_monotone", inc <= LYAP_TOL, max_rel_increase=inc))
        out.append(_check(name, "quaternion_drift", qd <= DRIFT_TOL, drift=qd))
    return out


def run_suite(cfg: ScenarioConfig, n_inits: int = 10, seed: int | None = None) -> SuiteReport:
    """Run all checks for the configured estimators on the noise-free trajectory.

    Estimators whose gains violate a condition are reported as ``rejected``
    and do not fail the suite.
    """
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    traj = gen_trajectory(cfg.trajectory)
    series = synth_series(traj, cfg.m_unit, cfg.g0)
    checks: list[CheckResult] = []

    ok = True
    for _ in range(200):
        v, w = rng.standard_normal(3), rng.standard_normal(3)
        R = random_rotation(rng)
        ok &= check_skew_identities(v, w, R)
    checks.append(_check("-", "skew_identities", bool(ok), samples=200))
    rot_drift = _so3_drift(traj.R)
    checks.append(_check("-", "truth_so3_drift", rot_drift <= DRIFT_TOL, drift=rot_drift))

    bank, rejected = build_bank(cfg)
    for ec in cfg.estimators:
        if ec.name in rejected:
            checks.append(CheckResult(ec.name, "gain_conditions", "rejected", {"reason": rejected[ec.name]}))
    for be in bank:
        checks.append(_check(be.name, "gain_conditions", True, kind=be.kind))
        if be.kind == "two_step":
            checks += _two_step_checks(be, traj, series, rng, n_inits)
        elif be.kind in ("one_step", "hua"):
            checks += _one_step_checks(be, traj, series, rng, n_inits)
        elif be.kind == "martin":
            checks += _martin_checks(be, cfg, traj, series)
        else:
            checks += _attitude_checks(be, cfg, traj, series, rng, n_inits)
    return SuiteReport(tuple(checks))


def _martin_checks(be: BuiltEstimator, cfg: ScenarioConfig, traj: Trajectory, series: ImuSeries) -> list[CheckResult]:
    out = run_estimator(be, replace(cfg, init_policy="truth", noise=None), traj, series)
    err = float(np.nanmax(out.tilt_angle))
    valid = int(np.count_nonzero(out.blocks["valid"]))
    return [_check(be.name, "truth_tracking", err <= 1e-5, max_tilt_error=err, valid_samples=valid)]


__all__ = ["CheckResult", "SuiteReport", "run_suite", "random_tilt", "random_two_step_state"]

import numpy as np
import pytest

from velaid.analysis import build_wrho, lyapunov_att, undesired_init
from velaid.attitude import (
    AttitudeGains,
    AttitudeObserverState,
    MartinAttitudeState,
    QuatErrorState,
    attitude_step,
    consistency_check,
    error_quaternions,
    integrate_quat_error,
    martin_attitude_step,
    quat_error_rhs,
    run_attitude,
    run_martin_attitude,
    triad_series,
    varpi,
)
from velaid.errors import GainConditionError
from velaid.measurement import M_FIELD, ChannelNoise, NoiseSpec, add_noise_series
from velaid.so3 import E_Z, exp_so3, geodesic_angle, rot_to_quat, skew
from velaid.tilt import HuaGains, HuaState, MartinGains, MartinTiltState, TwoStepGains, TwoStepState

ALPHA = 28.0143


def _stage(traj, n=2):
    g = TwoStepGains.multiple_pole(n)
    return TwoStepState.from_truth(traj[0], g), g


def _so3_drift(R):
    E = np.einsum("kji,kjl->kil", R, R) - np.eye(3)
    return float(np.max(np.linalg.norm(E, axis=(1, 2))))


@pytest.mark.parametrize("gains", [AttitudeGains.hierarchic(), AttitudeGains.invariant(), AttitudeGains(20.0, 10.0, 5.0)])
def test_tracks_truth(traj, clean, gains):
    st, g = _stage(traj)
    out = run_attitude(AttitudeObserverState(traj.R[0], st, gains, g), clean, M_FIELD, traj.dt)
    assert np.max(np.linalg.norm(out.Rhat - traj.R, axis=(1, 2))) <= 1e-5
    assert _so3_drift(out.Rhat) <= 1e-9


def test_hua_stage_tracks_truth(traj, clean):
    hs = HuaState.from_truth(traj[0], HuaGains.matched())
    out = run_attitude(AttitudeObserverState(traj.R[0], hs, AttitudeGains(20.0, 0.0, 20.0)), clean, M_FIELD, traj.dt)
    assert np.max(np.linalg.norm(out.Rhat - traj.R, axis=(1, 2))) <= 1e-5


def test_sigma_vanishes_at_truth(traj, clean):
    st, g = _stage(traj)
    obs = AttitudeObserverState(traj.R[0], st, AttitudeGains(20.0, 20.0, 20.0), g)
    assert np.linalg.norm(obs.sigma(clean[0], M_FIELD)) <= 1e-12


def test_sigma_formula(rng, clean):
    from velaid.so3 import random_rotation

    Rh = random_rotation(rng)
    g = TwoStepGains.multiple_pole(2)
    st = TwoStepState.initial(g, rng.standard_normal(3), rng.standard_normal(3), xhat2_prime=rng.standard_normal(3))
    y = clean[17]
    u, mb = Rh.T @ E_Z, Rh.T @ M_FIELD
    for r1, r2, mu in ((20.0, 20.0, 0.0), (20.0, 0.0, 20.0), (3.0, 7.0, 11.0)):
        obs = AttitudeObserverState(Rh, st, AttitudeGains(r1, r2, mu), g)
        ref = r1 * skew(u) @ st.xhat2_prime + r2 * skew(mb) @ y.y_m + mu * u * (u @ (skew(mb) @ y.y_m))
        assert np.allclose(obs.sigma(y, M_FIELD), ref, atol=1e-12)


def test_hierarchic_magnetometer_only_turns_about_vertical(rng, clean):
    from velaid.so3 import random_rotation

    Rh = random_rotation(rng)
    g = TwoStepGains.multiple_pole(2)
    st = TwoStepState.initial(g, np.zeros(3), [0, 0, 1], xhat2_prime=rng.standard_normal(3))
    obs = AttitudeObserverState(Rh, st, AttitudeGains.hierarchic(), g)
    y = clean[3]
    y2 = type(y)(y.t, y.y_v, y.y_g, y.y_a, y.y_m + rng.standard_normal(3))
    d = obs.sigma(y2, M_FIELD) - obs.sigma(y, M_FIELD)
    assert np.linalg.norm(np.cross(d, Rh.T @ E_Z)) <= 1e-12


def test_tilt_decoupling_hierarchic(traj, clean):
    st, g = _stage(traj)
    obs = AttitudeObserverState(undesired_init(M_FIELD).T @ traj.R[0], st, AttitudeGains.hierarchic(), g)
    traces = []
    for seed in (1, 2):
        noisy = add_noise_series(clean, NoiseSpec(y_m=ChannelNoise(0.71, (0.2, 0.2, 0.2)), seed=seed))
        traces.append(run_attitude(obs, noisy, M_FIELD, traj.dt).tilt_of_rhat)
    assert np.max(np.abs(traces[0] - traces[1])) <= 1e-12


def test_invariant_tilt_depends_on_magnetometer(traj, clean):
    st, g = _stage(traj)
    obs = AttitudeObserverState(traj.R[0], st, AttitudeGains.invariant(), g)
    a = run_attitude(obs, add_noise_series(clean, NoiseSpec(y_m=ChannelNoise(0.71), seed=1)), M_FIELD, traj.dt)
    b = run_attitude(obs, add_noise_series(clean, NoiseSpec(y_m=ChannelNoise(0.71), seed=2)), M_FIELD, traj.dt)
    assert np.max(np.abs(a.tilt_of_rhat - b.tilt_of_rhat)) > 1e-4


def test_step_matches_run(traj, clean, rng):
    from velaid.so3 import random_rotation

    st, g = _stage(traj, 3)
    obs = AttitudeObserverState(random_rotation(rng), st, AttitudeGains(20.0, 10.0, 5.0), g)
    out = run_attitude(obs, clean, M_FIELD, traj.dt)
    s = obs
    for k in range(25):
        s = attitude_step(s, clean[k], M_FIELD, traj.dt, clean[k + 1], clean[k - 1] if k else None, clean[k + 2])
    assert np.allclose(s.Rhat, out.Rhat[25], atol=1e-12)


def test_state_validation(traj):
    st, g = _stage(traj)
    with pytest.raises(ValueError):
        AttitudeObserverState(2 * np.eye(3), st, AttitudeGains(), g)
    with pytest.raises(ValueError):
        AttitudeObserverState(np.eye(3), st, AttitudeGains())
    with pytest.raises(GainConditionError):
        AttitudeGains(0.0)
    with pytest.raises(GainConditionError):
        AttitudeGains(1.0, -1.0)


# -- TRIAD pipeline -------------------------------------------------------------


def test_martin_at_truth(traj, clean):
    ch = MartinTiltState.from_truth(traj[0], MartinGains.matched(), M_FIELD)
    st = MartinAttitudeState.from_chains(ch)
    assert np.allclose(st.Rhat, traj.R[0], atol=1e-9)
    out = run_martin_attitude(st, clean, traj.dt)
    assert out.valid.all()
    assert np.max(np.abs(out.Rhat - traj.R)) <= 1e-6
    s1 = martin_attitude_step(st, clean[0], traj.dt, clean[1], y_next2=clean[2])
    assert np.allclose(s1.Rhat, out.Rhat[1], atol=1e-12)


def test_martin_invalid_flags():
    g = MartinGains.matched()
    assert not MartinAttitudeState.from_chains(MartinTiltState(np.zeros(3), np.zeros(3), M_FIELD, g)).valid
    assert not MartinAttitudeState.from_chains(MartinTiltState(np.zeros(3), [1.0, 0, 0], [2.0, 0, 0], g)).valid
    x2 = np.array([[0, 0, 1.0], [0, 0, 0], [0, 0, 1.0], [0, 0, 1.0]])
    x3 = np.array([[1.0, 0, 0], [1.0, 0, 0], [0, 0, -3.0], [1.0, 0, 1.0]])
    R, ok = triad_series(x2, x3, M_FIELD)
    assert ok.tolist() == [True, False, False, True]
    assert np.isnan(R[1]).all() and np.isnan(R[2]).all()
    assert np.allclose(R[3].T @ R[3], np.eye(3))


# -- quaternion error flow -------------------------------------------------------

GAINS = AttitudeGains(20.0, 20.0, 5.0)


@pytest.fixture(scope="module")
def wrho():
    return build_wrho(GAINS.rho1, GAINS.rho2, M_FIELD)


def test_flow_origin_is_equilibrium(wrho):
    for q0 in (1.0, -1.0):
        x = np.array([0, 0, 0, q0, 0, 0, 0.0])
        assert not quat_error_rhs(x, GAINS, ALPHA, wrho.matrix).any()


def test_flow_undesired_equilibria(wrho):
    for j in range(3):
        for s in (1.0, -1.0):
            x = np.concatenate((np.zeros(3), [0.0], s * wrho.eigenvectors[:, j]))
            assert np.max(np.abs(quat_error_rhs(x, GAINS, ALPHA, wrho.matrix))) <= 1e-12


def test_flow_tangent_to_sphere(wrho, rng):
    for _ in range(200):
        q = rng.standard_normal(4)
        x = np.concatenate((rng.standard_normal(3) * 3, q / np.linalg.norm(q)))
        d = quat_error_rhs(x, GAINS, ALPHA, wrho.matrix)
        assert abs(x[3:] @ d[3:]) <= 1e-12


def test_flow_requires_rho2():
    with pytest.raises(GainConditionError):
        quat_error_rhs(np.r_[np.zeros(3), 1.0, 0, 0, 0], AttitudeGains.hierarchic(), ALPHA, np.eye(3))


def test_flow_kernel_matches_python_rhs(wrho, rng):
    q = rng.standard_normal(4)
    xi = QuatErrorState(q / np.linalg.norm(q), rng.standard_normal(3))
    fl = integrate_quat_error(xi, GAINS, ALPHA, wrho.matrix, 1e-3, 1)
    f = lambda x: quat_error_rhs(x, GAINS, ALPHA, wrho.matrix)
    x = xi.vector()
    k1 = f(x); k2 = f(x + 5e-4 * k1); k3 = f(x + 5e-4 * k2); k4 = f(x + 1e-3 * k3)
    ref = x + 1e-3 / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    ref[3:] /= np.linalg.norm(ref[3:])
    assert np.allclose(fl[1], ref, atol=1e-14)


def test_quat_state_validation():
    with pytest.raises(ValueError):
        QuatErrorState([1.0, 1.0, 0, 0], np.zeros(3))


def test_varpi_at_equilibria(wrho):
    assert not varpi(np.array([1.0, 0, 0, 0]), wrho.matrix).any()
    assert np.allclose(varpi(np.r_[0.0, wrho.eigenvectors[:, 0]], wrho.matrix), 0, atol=1e-12)


def _first_order_observer(traj, Rhat0, x2p_offset, gains):
    g = TwoStepGains.multiple_pole(1)
    x1 = traj.v[0] + (g.g0 / g.alphas[0]) * (traj.tilt[0] - x2p_offset)
    st = TwoStepState.initial(g, x1, Rhat0.T @ E_Z, y_v=traj.v[0])
    return AttitudeObserverState(Rhat0, st, gains, g), g


def _flow_for(traj, obs, gains, W):
    z0 = traj.R[0] @ (traj.tilt[0] - obs.tilt_stage.xhat2_prime)
    xi = QuatErrorState(rot_to_quat(traj.R[0] @ obs.Rhat.T), z0)
    return integrate_quat_error(xi, gains, obs.tilt_gains.alphas[0], W, traj.dt, len(traj) - 1)


def test_consistency_truth(traj, clean, wrho):
    obs, _ = _first_order_observer(traj, traj.R[0], np.zeros(3), GAINS)
    out = run_attitude(obs, clean, M_FIELD, traj.dt)
    assert consistency_check(traj, out, _flow_for(traj, obs, GAINS, wrho.matrix)) <= 1e-8


def test_consistency_random_init(traj, clean, wrho, rng):
    from velaid.so3 import random_rotation

    R0 = random_rotation(rng) @ traj.R[0]
    obs, _ = _first_order_observer(traj, R0, np.array([0.3, -0.2, 0.1]), GAINS)
    out = run_attitude(obs, clean, M_FIELD, traj.dt)
    assert consistency_check(traj, out, _flow_for(traj, obs, GAINS, wrho.matrix)) <= 1e-4
    # negative control: the flow of different gains
    other = AttitudeGains(5.0, 3.0, 0.0)
    W2 = build_wrho(other.rho1, other.rho2, M_FIELD).matrix
    assert consistency_check(traj, out, _flow_for(traj, obs, other, W2)) > 1e-2


def test_error_quaternions_sign_continuous(traj):
    Rh = np.einsum("ij,kjl->kil", exp_so3([0, 0, 3.0]), traj.R)
    q = error_quaternions(traj.R, Rh)
    assert np.all(np.einsum("ki,ki->k", q[1:], q[:-1]) > 0)


def test_basin_certificate(wrho, rng):
    lam = wrho.lambda_min
    hits = 0
    while hits < 20:
        axis = rng.standard_normal(3)
        axis /= np.linalg.norm(axis)
        ang = rng.uniform(0, np.pi)
        q = np.r_[np.cos(ang / 2), np.sin(ang / 2) * axis]
        z = rng.standard_normal(3) * rng.uniform(0, 0.2)
        if lyapunov_att(z, q, wrho.matrix, GAINS.rho1, ALPHA) >= 2 * lam:
            continue
        hits += 1
        fl = integrate_quat_error(QuatErrorState(q, z), GAINS, ALPHA, wrho.matrix, 1e-3, 10_000)
        assert 2 * np.arccos(min(1.0, abs(fl[-1, 3]))) < 1e-3
        assert np.max(np.abs(np.linalg.norm(fl[:, 3:], axis=1) - 1)) <= 1e-9


def test_convergence_from_undesired_init_with_noise(traj, clean):
    st, g = _stage(traj)
    R0 = undesired_init(M_FIELD).T @ traj.R[0]
    noisy = add_noise_series(clean, NoiseSpec.benchmark(seed=0))
    out = run_attitude(AttitudeObserverState(R0, st, AttitudeGains.invariant(), g), noisy, M_FIELD, traj.dt)
    assert geodesic_angle(out.Rhat[0], traj.R[0]) == pytest.approx(np.pi)
    assert geodesic_angle(out.Rhat[-1], traj.R[-1]) < 0.3
    assert _so3_drift(out.Rhat) <= 1e-9

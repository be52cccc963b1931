import numpy as np
import pytest

from velaid.analysis import fit_log_slope, one_step_errors, two_step_errors
from velaid.errors import GainConditionError, NearZeroNormError, NotHurwitzError
from velaid.measurement import TrajectorySpec, gen_trajectory, synth_series
from velaid.tilt import (
    HuaGains,
    HuaState,
    MartinGains,
    MartinTiltState,
    OneStepGains,
    OneStepState,
    TwoStepGains,
    TwoStepState,
    hua_step,
    martin_tilt_step,
    one_step_step,
    run_tilt,
    tilt_of,
    two_step_step,
)

ALPHA = 28.0143
STILL = ((0.0, 0.0, 0.0),) * 3


@pytest.fixture(scope="module")
def still():
    """No rotation, default velocity profile."""
    tr = gen_trajectory(TrajectorySpec(duration=1.0, omega_waves=STILL))
    return tr, synth_series(tr)


def _err(a, b):
    return float(np.max(np.linalg.norm(a - b, axis=1)))


@pytest.mark.parametrize("n", [1, 2, 3])
def test_two_step_tracks_truth(traj, clean, n):
    g = TwoStepGains.multiple_pole(n)
    tr = run_tilt(TwoStepState.from_truth(traj[0], g), clean, traj.dt, g)
    assert _err(tr.xhat2, traj.tilt) <= 1e-6
    assert _err(tr.xhat2_prime, traj.tilt) <= 1e-6
    if n > 1:
        assert _err(tr.xhat1, traj.v) <= 1e-6


def test_first_order_closed_form(still):
    tr, se = still
    g = TwoStepGains((2.0,))
    st = TwoStepState.initial(g, tr.v[0] + np.array([1.0, -2.0, 0.5]), tr.tilt[0], y_v=se.y_v[0])
    trace = run_tilt(st, se, tr.dt, g)
    psi, _ = two_step_errors(tr, trace, g)
    norm = np.linalg.norm(psi[:, 0], axis=1)
    assert norm[-1] / norm[0] == pytest.approx(np.exp(-2.0), rel=1e-3)
    assert np.exp(-2.0) == pytest.approx(0.13534, abs=1e-5)


@pytest.fixture(scope="module")
def vertical():
    """No rotation, velocity along e_z only: horizontal errors stay exactly zero."""
    spec = TrajectorySpec(omega_waves=STILL, vel_waves=((0, 0, 0), (0, 0, 0), (0.5, 0.2, np.pi / 2)))
    tr = gen_trajectory(spec)
    return tr, synth_series(tr)


def _at_undesired(traj, g):
    s = TwoStepState.from_truth(traj[0], g)
    return TwoStepState(s.order, s.xhat1, s.xhat2_prime, -traj.tilt[0], s.p)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_undesired_equilibrium_is_stationary(vertical, n):
    traj, clean = vertical
    g = TwoStepGains.multiple_pole(n)
    trace = run_tilt(_at_undesired(traj, g), clean, traj.dt, g)
    psi, z2 = two_step_errors(traj, trace, g)
    assert np.max(np.abs(z2 - [0, 0, 2])) <= 1e-6
    # higher chain coordinates carry a factor alpha1/g0 (about 2e3 for n = 3); compare raw states
    assert np.max(np.abs(psi[:, 0])) <= 1e-6
    if n > 1:
        assert np.max(np.abs(trace.xhat1 - traj.v)) <= 1e-6
    assert np.max(np.abs(trace.xhat2 - trace.xhat2[0])) <= 1e-6


def test_undesired_equilibrium_is_repulsive(traj, clean):
    # truncation error of order 1e-8 grows like exp(gamma t) away from (0, 2 e_z)
    g = TwoStepGains.multiple_pole(2)
    trace = run_tilt(_at_undesired(traj, g), clean, traj.dt, g)
    _, z2 = two_step_errors(traj, trace, g)
    assert np.linalg.norm(z2[100] - [0, 0, 2]) < 1e-6
    assert np.linalg.norm(z2[-1]) < 1e-6


def test_step_matches_run(traj, clean, rng):
    g = TwoStepGains.multiple_pole(3)
    st = TwoStepState.initial(g, rng.standard_normal(3), rng.standard_normal(3), rng.standard_normal(3), rng.standard_normal((1, 3)))
    trace = run_tilt(st, clean, traj.dt, g)
    s = st
    for k in range(20):
        s = two_step_step(s, g, clean[k], traj.dt, clean[k + 1], clean[k - 1] if k else None, clean[k + 2])
    assert np.allclose(s.xhat2, trace.xhat2[20], atol=1e-13)
    assert np.allclose(s.p[0], trace.p[20, 0], atol=1e-12)


def test_step_order_mismatch(clean):
    g1, g2 = TwoStepGains.multiple_pole(1), TwoStepGains.multiple_pole(2)
    st = TwoStepState.initial(g2, np.zeros(3), [0, 0, 1], [0, 0, 1])
    with pytest.raises(ValueError):
        two_step_step(st, g1, clean[0], 1e-3)


def test_two_step_gain_validation():
    with pytest.raises(GainConditionError):
        TwoStepGains((1.0, -1.0))
    with pytest.raises(GainConditionError):
        TwoStepGains((1.0,), gamma=0.0)
    with pytest.raises(NotHurwitzError):
        TwoStepGains((10.0, 1.0, 1.0))  # s^3 + s^2 + s + 10: a2 a1 < a0


def test_state_validation():
    g = TwoStepGains.multiple_pole(1)
    with pytest.raises(ValueError):
        TwoStepState.initial(g, np.zeros(3), [0, 0, 1])
    with pytest.raises(ValueError):
        TwoStepState.initial(TwoStepGains.multiple_pole(2), np.zeros(3), [0, 0, 1])
    with pytest.raises(ValueError):
        TwoStepState(3, np.zeros(3), np.zeros(3), [0, 0, 1], np.zeros((2, 3)))
    st = TwoStepState.initial(g, np.zeros(3), [0, 0, 5.0], y_v=[1.0, 0, 0])
    assert np.linalg.norm(st.xhat2) == pytest.approx(1.0)
    assert np.allclose(st.xhat2_prime, [-ALPHA / 9.81, 0, 0], rtol=1e-4)


def test_one_step_gain_condition():
    OneStepGains(ALPHA, 20.0, 9.81)
    assert 20.0 * 9.81 <= ALPHA**2
    with pytest.raises(GainConditionError, match="exceeds"):
        OneStepGains(10.0, 20.0, 9.81)


def test_one_step_and_hua_track_truth(traj, clean):
    for st in (
        OneStepState.from_truth(traj[0], OneStepGains.double_pole()),
        HuaState.from_truth(traj[0], HuaGains.matched()),
    ):
        tr = run_tilt(st, clean, traj.dt)
        assert _err(tr.xhat2, traj.tilt) <= 1e-6
        assert _err(tr.xhat1, traj.v) <= 1e-6


def test_hua_gains():
    HuaGains(ALPHA, ALPHA, 20.0)
    with pytest.raises(GainConditionError):
        HuaGains(10.0, 10.0, 20.0)
    with pytest.raises(GainConditionError):
        HuaGains(ALPHA, -1.0, 20.0)


def test_hua_reduction_single_step(clean, rng):
    for _ in range(20):
        x1, x2 = rng.standard_normal(3) * 2, rng.standard_normal(3)
        k = int(rng.integers(1, len(clean) - 1))
        a = one_step_step(OneStepState(x1, x2, OneStepGains(ALPHA, 20.0)), clean[k], 1e-3, clean[k + 1])
        b = hua_step(HuaState(x1, x2, HuaGains(ALPHA, 0.0, 20.0)), clean[k], 1e-3, clean[k + 1])
        assert np.max(np.abs(a.vector() - b.vector())) <= 1e-12


def test_hua_reduction_full_run(traj, clean):
    x1, x2 = traj.v[0] + 1.0, np.array([1.0, 0.0, 0.0])
    a = run_tilt(OneStepState(x1, x2, OneStepGains(ALPHA, 20.0)), clean, traj.dt)
    b = run_tilt(HuaState(x1, x2, HuaGains(ALPHA, 0.0, 20.0)), clean, traj.dt)
    assert np.max(np.abs(a.xhat2 - b.xhat2)) <= 1e-12
    assert np.max(np.abs(a.xhat1 - b.xhat1)) <= 1e-12


def test_one_step_converges(traj, clean):
    tr = run_tilt(OneStepState(traj.v[0] + 1.0, [1.0, 0, 0], OneStepGains.double_pole()), clean, traj.dt)
    z1, z2 = one_step_errors(traj, tr)
    assert np.linalg.norm(z2[-1]) < 1e-6 and np.linalg.norm(z1[-1]) < 1e-4


def test_martin_tracks_truth(traj, clean):
    from velaid.measurement import M_FIELD

    st = MartinTiltState.from_truth(traj[0], MartinGains.matched(), M_FIELD)
    tr = run_tilt(st, clean, traj.dt)
    assert _err(tr.xhat2_prime, traj.tilt) <= 1e-6
    assert _err(tr.xhat3_prime, traj.field(M_FIELD)) <= 1e-6


def test_martin_magnetic_decay(still):
    from velaid.measurement import M_FIELD

    tr, se = still
    g = MartinGains(14.0, 14.0, 2.0)
    st = MartinTiltState(tr.v[0], tr.tilt[0], tr.field(M_FIELD)[0] + [0.3, -0.2, 0.1], g)
    out = run_tilt(st, se, tr.dt)
    e = np.linalg.norm(out.xhat3_prime - tr.field(M_FIELD), axis=1)
    assert e[-1] / e[0] == pytest.approx(np.exp(-2.0), rel=1e-3)


def test_martin_gravity_chain_is_second_order_two_step(traj, clean, rng):
    mg = MartinGains.matched()
    g = TwoStepGains(mg.alphas)
    x1, x2p = traj.v[0] + rng.standard_normal(3), rng.standard_normal(3)
    a = run_tilt(MartinTiltState(x1, x2p, [1.0, 0, 0], mg), clean, traj.dt)
    b = run_tilt(TwoStepState.initial(g, x1, [0, 0, 1], xhat2_prime=x2p), clean, traj.dt, g)
    assert np.max(np.abs(a.xhat2_prime - b.xhat2_prime)) <= 1e-12
    assert np.max(np.abs(a.xhat1 - b.xhat1)) <= 1e-12


def test_martin_matched_gains():
    g = MartinGains.matched()
    assert g.L == pytest.approx(ALPHA / 2, abs=1e-4) and g.M == 20.0
    with pytest.raises(GainConditionError):
        MartinGains(0.0, 1.0, 1.0)


def test_tilt_of():
    g = TwoStepGains.multiple_pole(2)
    st = TwoStepState.initial(g, np.zeros(3), [0, 0, 1], xhat2_prime=[0, 0, 2.0])
    inter, con = tilt_of(st)
    assert np.allclose(inter, [0, 0, 2]) and np.allclose(con, [0, 0, 1])
    inter, con = tilt_of(OneStepState(np.zeros(3), [0, 1.0, 0], OneStepGains.double_pole()))
    assert inter is None and np.allclose(con, [0, 1, 0])
    mg = MartinGains.matched()
    _, con = tilt_of(MartinTiltState(np.zeros(3), [0, 0, 3.0], [1, 0, 0], mg))
    assert np.allclose(con, [0, 0, 1])
    with pytest.raises(NearZeroNormError):
        tilt_of(MartinTiltState(np.zeros(3), np.zeros(3), [1, 0, 0], mg))


def test_run_tilt_needs_two_step_gains(clean):
    g = TwoStepGains.multiple_pole(2)
    with pytest.raises(ValueError):
        run_tilt(TwoStepState.initial(g, np.zeros(3), [0, 0, 1], [0, 0, 1]), clean, 1e-3)
    with pytest.raises(TypeError):
        run_tilt(object(), clean, 1e-3)


def test_midpoint_rule_exactness():
    from velaid.tilt import step_samples

    cubic = lambda t: np.array([1.0 + 2 * t - t**2 + 0.5 * t**3] * 12)
    quad = lambda t: np.array([3.0 - t + 2 * t**2] * 12)
    y0, ym, y1 = step_samples(cubic(0), cubic(1), cubic(-1), cubic(2))
    assert np.allclose(ym, cubic(0.5), atol=1e-14)
    assert np.allclose(step_samples(quad(0), quad(1), None, quad(2))[1], quad(0.5), atol=1e-14)
    assert np.allclose(step_samples(quad(0), quad(1), quad(-1))[1], quad(0.5), atol=1e-14)
    assert np.allclose(step_samples(quad(0))[1], quad(0))

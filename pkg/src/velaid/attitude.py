"""Full-attitude observers and the quaternion form of their error flow.

``AttitudeObserverState`` integrates ``Rhat' = Rhat S(y_g - sigma)`` with

    sigma = rho1 S(u) d + rho2 S(Rhat^T m) y_m + mu u u^T S(Rhat^T m) y_m,

where ``u = Rhat^T e_z`` and ``d`` is the drive vector of the tilt stage
(the intermediate tilt ``xhat2_prime`` of a two-step observer, or ``-x~1``
for the Hua stage, which makes ``u`` follow the Hua tilt equation).
``rho2 = 0`` gives the hierarchic observer whose tilt ignores the
magnetometer, ``mu = 0`` the invariant one.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Union

import numpy as np
from numpy.typing import ArrayLike, NDArray

from . import _kernels as K
from .errors import CollinearError, GainConditionError, NearZeroNormError
from .measurement import M_FIELD, ImuSample, ImuSeries, Trajectory
from .so3 import E_Z, geodesic_angle, is_rotation, normalize_s2, quat_to_rot, rot_to_quat, skew, triad
from .tilt import (
    HuaState,
    MartinTiltState,
    TwoStepGains,
    TwoStepState,
    _kind_and_params,
    _trace_from_states,
    martin_tilt_step,
    run_tilt,
    step_samples,
    TiltTrace,
)

TiltStage = Union[TwoStepState, HuaState]


@dataclass(frozen=True)
class AttitudeGains:
    rho1: float = 20.0
    rho2: float = 0.0
    mu: float = 20.0

    def __post_init__(self) -> None:
        if not self.rho1 > 0:
            raise GainConditionError("rho1 must be positive")
        if not (self.rho2 >= 0 and self.mu >= 0):
            raise GainConditionError("rho2 and mu must be non-negative")

    @classmethod
    def hierarchic(cls, rho1: float = 20.0, mu: float = 20.0) -> "AttitudeGains":
        return cls(rho1, 0.0, mu)

    @classmethod
    def invariant(cls, rho1: float = 20.0, rho2: float = 20.0) -> "AttitudeGains":
        return cls(rho1, rho2, 0.0)

    def params(self) -> NDArray[np.float64]:
        return np.array([self.rho1, self.rho2, self.mu])


@dataclass(frozen=True)
class AttitudeObserverState:
    """``tilt_gains`` is required for two-step stages; Hua stages carry their own."""

    Rhat: NDArray[np.float64]
    tilt_stage: TiltStage
    gains: AttitudeGains
    tilt_gains: TwoStepGains | None = None

    def __post_init__(self) -> None:
        R = np.array(self.Rhat, dtype=float)
        if not is_rotation(R, tol=1e-6):
            raise ValueError("Rhat must be a rotation matrix")
        R.setflags(write=False)
        object.__setattr__(self, "Rhat", R)
        if isinstance(self.tilt_stage, TwoStepState) and self.tilt_gains is None:
            raise ValueError("a two-step tilt stage needs tilt_gains")
        if not isinstance(self.tilt_stage, (TwoStepState, HuaState)):
            raise TypeError("tilt stage must be a two-step or Hua observer")

    def _kind_params(self):
        return _kind_and_params(self.tilt_stage, self.tilt_gains)

    def sigma(self, y: ImuSample | ArrayLike, m: ArrayLike = M_FIELD) -> NDArray[np.float64]:
        """Innovation term ``sigma`` (body frame) at the current state."""
        kind, prm = self._kind_params()
        yv = step_samples(y)[0]
        d = K.drive_vector(kind, self.tilt_stage.vector(), prm, yv)
        g = self.gains
        s, c = K._sigma(np.ascontiguousarray(self.Rhat), d, yv, g.rho1, g.rho2, g.mu, np.asarray(m, float))
        return s + c * (self.Rhat.T @ E_Z)


def attitude_step(
    st: AttitudeObserverState,
    y: ImuSample | ArrayLike,
    m: ArrayLike,
    dt: float,
    y_next: ImuSample | ArrayLike | None = None,
    y_prev: ImuSample | ArrayLike | None = None,
    y_next2: ImuSample | ArrayLike | None = None,
) -> AttitudeObserverState:
    """Advance the tilt stage (RK4) and ``Rhat`` (fourth-order Lie group scheme) together."""
    kind, prm = st._kind_params()
    y0, ym, y1 = step_samples(y, y_next, y_prev, y_next2)
    x1, Rn = K.attitude_step(
        kind,
        st.tilt_stage.vector(),
        prm,
        np.ascontiguousarray(st.Rhat),
        st.gains.params(),
        np.asarray(m, float),
        y0,
        ym,
        y1,
        float(dt),
    )
    if isinstance(st.tilt_stage, TwoStepState):
        stage = TwoStepState.from_vector(x1, st.tilt_gains, y1)
    else:
        stage = HuaState(x1[0:3], x1[3:6], st.tilt_stage.gains)
    return replace(st, Rhat=Rn, tilt_stage=stage)


@dataclass(frozen=True)
class AttitudeTrace:
    Rhat: NDArray[np.float64]
    tilt: TiltTrace

    @property
    def tilt_of_rhat(self) -> NDArray[np.float64]:
        """``Rhat^T e_z`` at every sample."""
        return self.Rhat[:, 2, :].copy()


def run_attitude(st: AttitudeObserverState, series: ImuSeries, m: ArrayLike, dt: float) -> AttitudeTrace:
    kind, prm = st._kind_params()
    Y = series.matrix()
    X, Rs = K.attitude_run(
        kind,
        st.tilt_stage.vector(),
        prm,
        np.ascontiguousarray(st.Rhat),
        st.gains.params(),
        np.asarray(m, float),
        Y,
        float(dt),
    )
    return AttitudeTrace(Rs, _trace_from_states(st.tilt_stage, X, st.tilt_gains, Y))


# -- unconstrained chains + TRIAD -----------------------------------------------


@dataclass(frozen=True)
class MartinAttitudeState:
    """``Rhat`` is ``None`` when TRIAD failed on the current chain outputs."""

    tilt: MartinTiltState
    Rhat: NDArray[np.float64] | None
    m: NDArray[np.float64]

    @property
    def valid(self) -> bool:
        return self.Rhat is not None

    @classmethod
    def from_chains(cls, tilt: MartinTiltState, m: ArrayLike = M_FIELD) -> "MartinAttitudeState":
        m = np.asarray(m, dtype=float)
        return cls(tilt, _triad_or_none(tilt.xhat2_prime, tilt.xhat3_prime, m), m)


def _triad_or_none(x2p, x3p, m):
    try:
        return triad(x2p, x3p, E_Z, m)
    except (NearZeroNormError, CollinearError):
        return None


def martin_attitude_step(
    st: MartinAttitudeState,
    y: ImuSample | ArrayLike,
    dt: float,
    y_next: ImuSample | ArrayLike | None = None,
    y_prev: ImuSample | ArrayLike | None = None,
    y_next2: ImuSample | ArrayLike | None = None,
) -> MartinAttitudeState:
    tilt = martin_tilt_step(st.tilt, y, dt, y_next, y_prev, y_next2)
    return MartinAttitudeState(tilt, _triad_or_none(tilt.xhat2_prime, tilt.xhat3_prime, st.m), st.m)


@dataclass(frozen=True)
class MartinAttitudeTrace:
    Rhat: NDArray[np.float64]  # NaN where invalid
    valid: NDArray[np.bool_]
    tilt: TiltTrace


def triad_series(x2p: NDArray, x3p: NDArray, m: ArrayLike) -> tuple[NDArray, NDArray]:
    """Vectorized TRIAD with a validity mask instead of exceptions."""
    m = np.asarray(m, dtype=float)
    n2 = np.linalg.norm(x2p, axis=1)
    n3 = np.linalg.norm(x3p, axis=1)
    ok = (n2 >= 1e-9) & (n3 >= 1e-9)
    b1 = x2p / np.where(ok, n2, 1.0)[:, None]
    b2 = x3p / np.where(ok, n3, 1.0)[:, None]
    cb = np.cross(b1, b2)
    nb = np.linalg.norm(cb, axis=1)
    ok &= nb >= np.sin(1e-6)
    tb = cb / np.where(ok, nb, 1.0)[:, None]
    body = np.stack((b1, tb, np.cross(b1, tb)), axis=2)
    cr = normalize_s2(np.cross(E_Z, m))
    world = np.column_stack((E_Z, cr, np.cross(E_Z, cr)))
    R = np.einsum("ij,kjl->kil", world, np.transpose(body, (0, 2, 1)))
    R[~ok] = np.nan
    return R, ok


def run_martin_attitude(st: MartinAttitudeState, series: ImuSeries, dt: float) -> MartinAttitudeTrace:
    tr = run_tilt(st.tilt, series, dt)
    R, ok = triad_series(tr.xhat2_prime, tr.xhat3_prime, st.m)
    return MartinAttitudeTrace(R, ok, tr)


# -- quaternion error flow ------------------------------------------------------


@dataclass(frozen=True)
class QuatErrorState:
    """``(z_p1, q~)`` with ``q~ = (q0, q)`` the error ``R Rhat^T`` as a quaternion."""

    q_tilde: NDArray[np.float64]
    z_p1: NDArray[np.float64]

    def __post_init__(self) -> None:
        q = np.array(self.q_tilde, dtype=float).reshape(4)
        n = np.linalg.norm(q)
        if abs(n - 1.0) > 1e-9:
            raise ValueError(f"q_tilde must be a unit quaternion (norm {n:.12g})")
        object.__setattr__(self, "q_tilde", q)
        object.__setattr__(self, "z_p1", np.array(self.z_p1, dtype=float).reshape(3))

    def vector(self) -> NDArray[np.float64]:
        return np.concatenate((self.z_p1, self.q_tilde))

    @classmethod
    def from_vector(cls, x: ArrayLike) -> "QuatErrorState":
        x = np.asarray(x, dtype=float)
        return cls(x[3:7], x[0:3])


def varpi(q_tilde: ArrayLike, W: ArrayLike) -> NDArray[np.float64]:
    """``(q0 I - S(q)) W q``."""
    q0, q = q_tilde[0], np.asarray(q_tilde[1:], dtype=float)
    return (q0 * np.eye(3) - skew(q)) @ (np.asarray(W) @ q)


def quat_error_rhs(
    x: ArrayLike,
    gains: AttitudeGains,
    alpha1: float,
    W: ArrayLike,
    e_z: ArrayLike = E_Z,
) -> NDArray[np.float64]:
    """Time derivative of ``(z_p1, q0, q)`` for a first-order tilt stage.

    ``W`` and ``e_z`` may be expressed in any orthonormal world frame; the
    flow is equivariant, so passing the eigenbasis of ``W`` (a diagonal
    ``W``) represents the undesired equilibria exactly.

    Raises
    ------
    GainConditionError
        If ``rho2 == 0``; the flow uses the ratio ``mu / rho2``.
    """
    if not gains.rho2 > 0:
        raise GainConditionError("the quaternion error flow requires rho2 > 0")
    x = np.asarray(x, dtype=float)
    z, q0, q = x[0:3], x[3], x[4:7]
    e = np.asarray(e_z, dtype=float)
    Sq = skew(q)
    Kmat = np.eye(3) + (gains.mu / gains.rho2) * np.outer(e, e)
    w = varpi(x[3:7], W)
    Rt_T = np.eye(3) - 2.0 * q0 * Sq + 2.0 * (Sq @ Sq)
    c = skew(e) @ (Rt_T @ z)
    Kw = Kmat @ w
    out = np.empty(7)
    out[0:3] = -alpha1 * z
    out[3] = q @ Kw + 0.5 * gains.rho1 * (q @ c)
    out[4:7] = -(q0 * np.eye(3) + Sq) @ (Kw + 0.5 * gains.rho1 * c)
    return out


def integrate_quat_error(
    xi0: QuatErrorState,
    gains: AttitudeGains,
    alpha1: float,
    W: ArrayLike,
    dt: float,
    n_steps: int,
    e_z: ArrayLike = E_Z,
) -> NDArray[np.float64]:
    """RK4 trajectory of the error flow, ``(n_steps + 1, 7)``, quaternion renormalized."""
    if not gains.rho2 > 0:
        raise GainConditionError("the quaternion error flow requires rho2 > 0")
    prm = np.array([gains.rho1, gains.rho2, gains.mu, float(alpha1)])
    W = np.ascontiguousarray(W, dtype=float)
    e = np.ascontiguousarray(e_z, dtype=float)
    return K.quat_error_run(xi0.vector(), prm, W, e, float(dt), int(n_steps))


def error_quaternions(R: NDArray, Rhat: NDArray) -> NDArray[np.float64]:
    """``rot_to_quat(R Rhat^T)`` per sample, sign-continuous along the series."""
    out = np.empty((len(R), 4))
    prev = None
    for k in range(len(R)):
        q = rot_to_quat(R[k] @ Rhat[k].T)
        if prev is not None and q @ prev < 0:
            q = -q
        out[k] = q
        prev = q
    return out


def consistency_check(truth: Trajectory, observer: AttitudeTrace, flow: NDArray) -> float:
    """Max geodesic angle between the observer error ``R Rhat^T`` and the flow."""
    dev = 0.0
    for k in range(len(flow)):
        Rt = truth.R[k] @ observer.Rhat[k].T
        dev = max(dev, geodesic_angle(Rt, quat_to_rot(flow[k, 3:7])))
    return dev


__all__ = [
    "AttitudeGains",
    "AttitudeObserverState",
    "attitude_step",
    "AttitudeTrace",
    "run_attitude",
    "MartinAttitudeState",
    "martin_attitude_step",
    "MartinAttitudeTrace",
    "triad_series",
    "run_martin_attitude",
    "QuatErrorState",
    "varpi",
    "quat_error_rhs",
    "integrate_quat_error",
    "error_quaternions",
    "consistency_check",
]

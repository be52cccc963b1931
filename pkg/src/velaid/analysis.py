"""Error metrics, Lyapunov functions, error flows and equilibrium analysis."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .attitude import AttitudeGains, varpi
from .companion import companion
from .errors import CollinearError, GainConditionError
from .measurement import G0, Trajectory
from .so3 import COLLINEAR_ANGLE, E_Z, EPS_NORM, angle_between, normalize_s2, skew
from .tilt import TiltTrace, TwoStepGains

# -- metrics ------------------------------------------------------------------


@dataclass(frozen=True)
class TiltMetrics:
    angle: float
    z2: NDArray[np.float64]
    valid: bool = True


def tilt_metrics(R: ArrayLike, est: ArrayLike) -> TiltMetrics:
    """Angle between ``x2 = R^T e_z`` and ``est``; ``z2 = R (x2 - est)``.

    An unconstrained estimate is normalized for the angle; below 1e-9 the
    sample is flagged invalid and the angle is NaN.
    """
    R = np.asarray(R, dtype=float)
    est = np.asarray(est, dtype=float)
    x2 = R.T @ E_Z
    z2 = R @ (x2 - est)
    if np.linalg.norm(est) < EPS_NORM:
        return TiltMetrics(float("nan"), z2, False)
    return TiltMetrics(angle_between(x2, est), z2, True)


def angle_series(a: NDArray, b: NDArray) -> tuple[NDArray[np.float64], NDArray[np.bool_]]:
    """Row-wise atan2 angles; rows where ``b`` is (near) zero are invalid (NaN)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    ang = np.arctan2(np.linalg.norm(np.cross(a, b), axis=1), np.einsum("ij,ij->i", a, b))
    valid = np.linalg.norm(b, axis=1) >= EPS_NORM
    valid &= np.all(np.isfinite(b), axis=1)
    return np.where(valid, ang, np.nan), valid


def tilt_angle_series(traj: Trajectory, est: NDArray) -> tuple[NDArray[np.float64], NDArray[np.bool_]]:
    return angle_series(traj.tilt, est)


def horizontal_field(m: ArrayLike, e_z: ArrayLike = E_Z) -> NDArray[np.float64]:
    """``m_p``: unit horizontal direction of the world-frame field ``m``.

    Raises
    ------
    CollinearError
        If ``m`` is within 1e-6 rad of vertical.
    """
    m = np.asarray(m, dtype=float)
    e = np.asarray(e_z, dtype=float)
    if np.linalg.norm(np.cross(m, e)) < np.sin(COLLINEAR_ANGLE) * np.linalg.norm(m):
        raise CollinearError("field direction is vertical; its horizontal part is undefined")
    return normalize_s2(m - (e @ m) * e)


def yaw_proxy_angle(R: ArrayLike, Rhat: ArrayLike, m: ArrayLike) -> float:
    """Angle between ``R^T m_p`` and ``Rhat^T m_p``."""
    mp = horizontal_field(m)
    return angle_between(np.asarray(R).T @ mp, np.asarray(Rhat).T @ mp)


def yaw_proxy_series(R: NDArray, Rhat: NDArray, m: ArrayLike) -> tuple[NDArray[np.float64], NDArray[np.bool_]]:
    mp = horizontal_field(m)
    a = np.einsum("kji,j->ki", R, mp)
    b = np.einsum("kji,j->ki", Rhat, mp)
    return angle_series(a, b)


def mean_error_window(
    t: ArrayLike, values: ArrayLike, t0: float, t1: float, valid: ArrayLike | None = None
) -> tuple[float, int]:
    """Mean of valid samples with ``t0 <= t <= t1`` and the number used.

    Raises
    ------
    ValueError
        If the window holds no valid sample.
    """
    t = np.asarray(t, dtype=float)
    v = np.asarray(values, dtype=float)
    if not t0 < t1:
        raise ValueError("window needs t0 < t1")
    sel = (t >= t0 - 1e-12) & (t <= t1 + 1e-12) & np.isfinite(v)
    if valid is not None:
        sel &= np.asarray(valid, dtype=bool)
    count = int(np.count_nonzero(sel))
    if count == 0:
        raise ValueError(f"no valid samples in window [{t0}, {t1}]")
    return float(np.mean(v[sel])), count


def convergence_time(t: ArrayLike, angles: ArrayLike, threshold: float = 0.05, hold: float = 0.5) -> float:
    """First time after which the angle stays below ``threshold`` for ``hold`` seconds.

    Invalid (NaN) samples break a run. Returns NaN if it never happens.
    """
    t = np.asarray(t, dtype=float)
    ok = np.asarray(angles, dtype=float) < threshold
    start = None
    for k in range(len(t)):
        if ok[k]:
            if start is None:
                start = k
            if t[k] - t[start] >= hold - 1e-12:
                return float(t[start])
        else:
            start = None
    return float("nan")


def fit_log_slope(t: ArrayLike, norms: ArrayLike) -> float:
    """Least-squares slope of ``log(norms)`` against ``t``."""
    return float(np.polyfit(np.asarray(t, float), np.log(np.asarray(norms, float)), 1)[0])


def re_alpha(alphas: ArrayLike) -> float:
    """Smallest decay rate ``min |Re lambda|`` of the companion matrix."""
    return companion(alphas).decay_rate


# -- W_rho and equilibria ---------------------------------------------------------


@dataclass(frozen=True)
class Wrho:
    rho1: float
    rho2: float
    m: NDArray[np.float64]
    matrix: NDArray[np.float64]
    eigenvalues: NDArray[np.float64]
    eigenvectors: NDArray[np.float64]  # columns, matching ascending eigenvalues

    @property
    def lambda_min(self) -> float:
        return float(self.eigenvalues[0])

    def principal(self) -> tuple[NDArray[np.float64], NDArray[np.float64], NDArray[np.float64]]:
        """``(diag(lambda), V^T e_z, V^T m)``: the same problem in the eigenbasis.

        There the undesired equilibria ``q = e_j`` are represented exactly.
        """
        V = self.eigenvectors
        return np.diag(self.eigenvalues), V.T @ E_Z, V.T @ self.m


def build_wrho(rho1: float, rho2: float, m: ArrayLike) -> Wrho:
    """``W = -rho1 S(e_z)^2 - rho2 S(m)^2`` with sorted eigenpairs.

    Raises
    ------
    GainConditionError
        If ``rho1`` or ``rho2`` is not positive.
    CollinearError
        If ``m`` is (anti)parallel to ``e_z``.
    """
    if not (rho1 > 0 and rho2 > 0):
        raise GainConditionError("rho1 and rho2 must be positive")
    m = normalize_s2(m)
    if np.linalg.norm(np.cross(m, E_Z)) < np.sin(COLLINEAR_ANGLE):
        raise CollinearError("m must not be collinear with e_z")
    Sz, Sm = skew(E_Z), skew(m)
    W = -rho1 * (Sz @ Sz) - rho2 * (Sm @ Sm)
    W = 0.5 * (W + W.T)
    lam, V = np.linalg.eigh(W)
    return Wrho(float(rho1), float(rho2), m, W, lam, V)


def undesired_init(m: ArrayLike) -> NDArray[np.float64]:
    """Half-turn ``2 u u^T - I`` about ``u = (m x e_z) / |m x e_z|``."""
    m = np.asarray(m, dtype=float)
    c = np.cross(m, E_Z)
    if np.linalg.norm(c) < np.sin(COLLINEAR_ANGLE) * max(np.linalg.norm(m), EPS_NORM):
        raise CollinearError("m must not be collinear with e_z")
    u = c / np.linalg.norm(c)
    return 2.0 * np.outer(u, u) - np.eye(3)


# -- Lyapunov functions ----------------------------------------------------------


def lyapunov_v1(z_p1: ArrayLike, z2: ArrayLike, alpha1: float, gamma: float) -> float:
    z_p1 = np.asarray(z_p1, dtype=float)
    z2 = np.asarray(z2, dtype=float)
    return float(z_p1 @ z_p1 / (2.0 * alpha1) + z2 @ z2 / (2.0 * gamma))


def lyapunov_vn(psi: ArrayLike, z2: ArrayLike, P: ArrayLike, gamma: float) -> float:
    """``psi^T P psi + |z2|^2 / (2 gamma)`` with ``psi = (z_p1, ..., z_pn)`` stacked."""
    psi = np.asarray(psi, dtype=float).ravel()
    z2 = np.asarray(z2, dtype=float)
    return float(psi @ (np.asarray(P) @ psi) + z2 @ z2 / (2.0 * gamma))


def lyapunov_one_step(z1: ArrayLike, z2: ArrayLike, alpha: float, g0: float = G0) -> float:
    u = alpha * np.asarray(z1, float) + g0 * np.asarray(z2, float)
    z2 = np.asarray(z2, float)
    return float(0.5 * u @ u + 0.5 * g0**2 * z2 @ z2)


def vdot_one_step(z1: ArrayLike, z2: ArrayLike, alpha: float, gamma: float, g0: float = G0) -> float:
    """Closed-form derivative of :func:`lyapunov_one_step` along the one-step flow (valid on ``|e_z - z2| = 1``)."""
    z2 = np.asarray(z2, float)
    u = alpha * np.asarray(z1, float) + g0 * z2
    G = gamma * g0 / alpha**2
    Sz = skew(E_Z)
    return float(
        -alpha * (1.0 - G) * (u @ u)
        + alpha * g0**2 * G * (z2 @ (Sz @ Sz @ z2))
        - alpha * G * (u @ (E_Z - z2)) ** 2
    )


def lyapunov_att(z_p1: ArrayLike, q_tilde: ArrayLike, W: ArrayLike, rho1: float, alpha1: float) -> float:
    """``(rho1^2 / alpha1) |z_p1|^2 + 2 q^T W q`` (``q`` the vector part)."""
    z = np.asarray(z_p1, float)
    q = np.asarray(q_tilde, float)[1:]
    return float(rho1**2 / alpha1 * (z @ z) + 2.0 * q @ (np.asarray(W) @ q))


def vdot_att(
    z_p1: ArrayLike, q_tilde: ArrayLike, W: ArrayLike, gains: AttitudeGains, e_z: ArrayLike = E_Z
) -> float:
    """Closed-form derivative of :func:`lyapunov_att` along the quaternion error flow.

    ``-2 rho1^2 |z|^2 - 4 |varpi|^2 - 4 (mu/rho2)(e_z^T varpi)^2
    - 2 rho1 varpi^T S(e_z) R~^T z``; the sign of the last term follows from
    ``q^T W (q0 I + S(q)) = varpi^T`` and does not affect the bound.
    """
    z = np.asarray(z_p1, float)
    qt = np.asarray(q_tilde, float)
    q0, q = qt[0], qt[1:]
    e = np.asarray(e_z, float)
    w = varpi(qt, W)
    Sq = skew(q)
    RtT = np.eye(3) - 2.0 * q0 * Sq + 2.0 * (Sq @ Sq)
    kappa = gains.mu / gains.rho2
    return float(
        -2.0 * gains.rho1**2 * (z @ z)
        - 4.0 * (w @ w)
        - 4.0 * kappa * (e @ w) ** 2
        - 2.0 * gains.rho1 * (w @ (skew(e) @ (RtT @ z)))
    )


def vdot_att_bound(z_p1: ArrayLike, q_tilde: ArrayLike, W: ArrayLike, rho1: float) -> float:
    """``-2 rho1^2 |z|^2 - 4 |varpi|^2 + 2 rho1 |varpi| |z|``, an upper bound on the derivative."""
    a = float(np.linalg.norm(z_p1))
    b = float(np.linalg.norm(varpi(q_tilde, W)))
    return -2.0 * rho1**2 * a * a - 4.0 * b * b + 2.0 * rho1 * a * b


# -- tilt error flows ----------------------------------------------------------


def two_step_error_rhs(x: ArrayLike, alphas: ArrayLike, gamma: float) -> NDArray[np.float64]:
    """Flow of ``(z_p1, ..., z_pn, z2)`` for an n-th order two-step observer."""
    x = np.asarray(x, dtype=float)
    a = np.atleast_1d(np.asarray(alphas, dtype=float))
    n = len(a)
    psi = x[: 3 * n].reshape(n, 3)
    z2 = x[3 * n :]
    d = np.empty_like(x)
    dpsi = d[: 3 * n].reshape(n, 3)
    dpsi[:-1] = psi[1:]
    dpsi[-1] = -(a @ psi)
    h = E_Z - z2
    # S(h)^2 w = h x (h x w)
    w = z2 - psi[0]
    d[3 * n :] = gamma * np.cross(h, np.cross(h, w))
    return d


def one_step_error_rhs(x: ArrayLike, alpha: float, gamma: float, g0: float = G0, k2v: float = 0.0) -> NDArray[np.float64]:
    """Flow of ``(z1, z2)`` for the one-step observer (Hua's when ``k2v > 0``)."""
    x = np.asarray(x, dtype=float)
    z1, z2 = x[0:3], x[3:6]
    h = E_Z - z2
    out = np.empty(6)
    out[0:3] = -alpha * z1 - g0 * z2 + k2v * np.cross(h, np.cross(h, z1))
    out[3:6] = -gamma * np.cross(h, np.cross(h, z1))
    return out


def integrate_flow(
    f: Callable[[NDArray], NDArray], x0: ArrayLike, dt: float, n_steps: int, sphere: slice | None = None
) -> NDArray[np.float64]:
    """RK4 trajectory ``(n_steps + 1, len(x0))``.

    ``sphere`` selects the ``z2`` block, which is projected back onto
    ``|e_z - z2| = 1`` after every step.
    """
    x = np.array(x0, dtype=float)
    out = np.empty((n_steps + 1, len(x)))
    out[0] = x
    for k in range(n_steps):
        k1 = f(x)
        k2 = f(x + 0.5 * dt * k1)
        k3 = f(x + 0.5 * dt * k2)
        k4 = f(x + dt * k3)
        x = x + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if sphere is not None:
            h = E_Z - x[sphere]
            x[sphere] = E_Z - h / np.linalg.norm(h)
        out[k + 1] = x
    return out


def two_step_errors(traj: Trajectory, trace: TiltTrace, gains: TwoStepGains) -> tuple[NDArray, NDArray]:
    """``psi`` of shape ``(N, n, 3)`` and ``z2`` of shape ``(N, 3)`` from an observer run.

    ``z_p1 = R (x2 - xhat2')``, ``z_pi = (alpha1 / g0) R p_i`` with
    ``p_n = x1 - xhat1``, and ``z2 = R (x2 - xhat2)``.
    """
    R = traj.R
    x2 = traj.tilt
    n = gains.order
    psi = np.empty((len(R), n, 3))
    psi[:, 0] = np.einsum("kij,kj->ki", R, x2 - trace.xhat2_prime)
    c = gains.alphas[0] / gains.g0
    for i in range(1, n - 1):
        psi[:, i] = c * np.einsum("kij,kj->ki", R, trace.p[:, i - 1])
    if n >= 2:
        psi[:, n - 1] = c * np.einsum("kij,kj->ki", R, traj.v - trace.xhat1)
    z2 = np.einsum("kij,kj->ki", R, x2 - trace.xhat2)
    return psi, z2


def one_step_errors(traj: Trajectory, trace: TiltTrace) -> tuple[NDArray, NDArray]:
    """``z1 = R (x1 - xhat1)`` and ``z2 = R (x2 - xhat2)``."""
    z1 = np.einsum("kij,kj->ki", traj.R, traj.v - trace.xhat1)
    z2 = np.einsum("kij,kj->ki", traj.R, traj.tilt - trace.xhat2)
    return z1, z2


def lyapunov_increase(V: ArrayLike) -> float:
    """Largest per-step increase of a sampled Lyapunov function relative to its value."""
    V = np.asarray(V, dtype=float)
    inc = np.diff(V) / np.maximum(V[:-1], np.finfo(float).tiny)
    return float(np.max(inc, initial=-np.inf))


# -- linearization at the undesired attitude equilibria --------------------------


@dataclass(frozen=True)
class LinearizationA:
    """Jacobian of the error flow at ``(0, (0, v))`` in coordinates ``(z_p1, q0, q)``."""

    matrix: NDArray[np.float64]
    v: NDArray[np.float64]
    lam: float

    @property
    def eigenvalues(self) -> NDArray[np.complex128]:
        return np.linalg.eigvals(self.matrix)

    @property
    def max_real(self) -> float:
        return float(np.max(self.eigenvalues.real))


def linearization_A(
    w: Wrho,
    j: int,
    gains: AttitudeGains,
    alpha1: float,
    W: ArrayLike | None = None,
    e_z: ArrayLike | None = None,
    v: ArrayLike | None = None,
) -> LinearizationA:
    """Assemble the 7x7 block matrix at the ``j``-th eigenvector (``j = 0, 1, 2``).

    ``W``, ``e_z`` and ``v`` override the world-frame quantities, e.g. with the
    principal-frame representation of :meth:`Wrho.principal`.
    """
    if not gains.rho2 > 0:
        raise GainConditionError("the linearization requires rho2 > 0")
    if j not in (0, 1, 2):
        raise ValueError("eigen index must be 0, 1 or 2")
    Wm = w.matrix if W is None else np.asarray(W, float)
    e = E_Z if e_z is None else np.asarray(e_z, float)
    v = w.eigenvectors[:, j] if v is None else np.asarray(v, float)
    lam = float(w.eigenvalues[j])
    kappa = gains.mu / gains.rho2
    rho1 = gains.rho1
    vp = np.cross(v, e)
    ve = float(v @ e)
    L = lam * np.eye(3) - Wm
    A = np.zeros((7, 7))
    A[0:3, 0:3] = -alpha1 * np.eye(3)
    A[3, 0:3] = -0.5 * rho1 * vp
    A[3, 3] = lam * (1.0 + kappa * ve**2)
    A[3, 4:7] = -kappa * ve * (vp @ L)
    A[4:7, 0:3] = 0.5 * rho1 * skew(v) @ skew(e) @ (np.eye(3) - 2.0 * np.outer(v, v))
    A[4:7, 3] = -lam * kappa * ve * vp
    A[4:7, 4:7] = (np.eye(3) + kappa * np.outer(vp, vp)) @ L
    return LinearizationA(A, v, lam)


def fd_jacobian(f: Callable[[NDArray], NDArray], x: ArrayLike, h: float = 1e-6) -> NDArray[np.float64]:
    """Central-difference Jacobian of ``f`` at ``x``."""
    x = np.asarray(x, dtype=float)
    cols = []
    for i in range(len(x)):
        dx = np.zeros_like(x)
        dx[i] = h
        cols.append((np.asarray(f(x + dx)) - np.asarray(f(x - dx))) / (2.0 * h))
    return np.column_stack(cols)


__all__ = [
    "TiltMetrics",
    "tilt_metrics",
    "angle_series",
    "tilt_angle_series",
    "horizontal_field",
    "yaw_proxy_angle",
    "yaw_proxy_series",
    "mean_error_window",
    "convergence_time",
    "fit_log_slope",
    "re_alpha",
    "Wrho",
    "build_wrho",
    "undesired_init",
    "lyapunov_v1",
    "lyapunov_vn",
    "lyapunov_one_step",
    "vdot_one_step",
    "lyapunov_att",
    "vdot_att",
    "vdot_att_bound",
    "two_step_error_rhs",
    "one_step_error_rhs",
    "integrate_flow",
    "two_step_errors",
    "one_step_errors",
    "lyapunov_increase",
    "LinearizationA",
    "linearization_A",
    "fd_jacobian",
]

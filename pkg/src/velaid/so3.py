"""Rotation, quaternion and unit-sphere helpers.

Conventions
-----------
- ``R`` maps body (local) coordinates to world coordinates, ``Rdot = R S(omega)``
  with ``omega`` expressed in the body frame.
- Quaternions are Hamilton, scalar first, stored as ``(q0, qx, qy, qz)``.
  ``quat_mul`` is chosen so that ``quat_to_rot(a * b) == quat_to_rot(a) @ quat_to_rot(b)``.
- ``E_Z`` is the upward vertical of the world frame.
"""

from __future__ import annotations

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import CollinearError, DegenerateMatrixError, NearZeroNormError

E_Z = np.array([0.0, 0.0, 1.0])
EPS_NORM = 1e-9
IDENTITY_TOL = 1e-10
COLLINEAR_ANGLE = 1e-6


def skew(v: ArrayLike) -> NDArray[np.float64]:
    """Cross-product matrix, ``skew(v) @ w == np.cross(v, w)``."""
    x, y, z = np.asarray(v, dtype=float)
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def vee(S: ArrayLike) -> NDArray[np.float64]:
    """Inverse of :func:`skew` (antisymmetric part)."""
    S = np.asarray(S, dtype=float)
    return 0.5 * np.array([S[2, 1] - S[1, 2], S[0, 2] - S[2, 0], S[1, 0] - S[0, 1]])


def skew_identity_residuals(v: ArrayLike, w: ArrayLike, R: ArrayLike) -> dict[str, float]:
    """Max-abs residual of each skew-matrix identity for the given arguments."""
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    R = np.asarray(R, dtype=float)
    Sv, Sw = skew(v), skew(w)
    eye = np.eye(3)
    res = {
        "SvSw": Sv @ Sw - (np.outer(w, v) - (v @ w) * eye),
        "SvSwSv": Sv @ Sw @ Sv + (v @ w) * Sv,
        "conjugation": R @ Sv @ Sw @ R.T - skew(R @ v) @ skew(R @ w),
        "S_of_cross": skew(Sv @ w) - (Sv @ Sw - Sw @ Sv),
        "S_of_cross_outer": skew(Sv @ w) - (np.outer(w, v) - np.outer(v, w)),
        "S_cubed": Sv @ Sv @ Sv + (v @ v) * Sv,
    }
    return {k: float(np.max(np.abs(r))) for k, r in res.items()}


def check_skew_identities(v: ArrayLike, w: ArrayLike, R: ArrayLike, tol: float = 1e-10) -> bool:
    """True iff every skew identity holds to ``tol`` (scaled by the operand size)."""
    scale = max(1.0, float(np.linalg.norm(v)), float(np.linalg.norm(w))) ** 3
    return all(r <= tol * scale for r in skew_identity_residuals(v, w, R).values())


def exp_so3(omega_dt: ArrayLike) -> NDArray[np.float64]:
    """Rodrigues formula for the rotation ``exp(S(omega_dt))``."""
    phi = np.asarray(omega_dt, dtype=float)
    theta2 = float(phi @ phi)
    K = skew(phi)
    if theta2 < 1e-12:
        # Taylor expansion, exact to double precision below this threshold
        a = 1.0 - theta2 / 6.0 + theta2 * theta2 / 120.0
        b = 0.5 - theta2 / 24.0 + theta2 * theta2 / 720.0
    else:
        theta = np.sqrt(theta2)
        a = np.sin(theta) / theta
        b = (1.0 - np.cos(theta)) / theta2
    return np.eye(3) + a * K + b * (K @ K)


def log_so3(R: ArrayLike) -> NDArray[np.float64]:
    """Rotation vector of ``R`` (angle in [0, pi])."""
    q = rot_to_quat(R)
    if q[0] < 0.0:
        q = -q
    s = float(np.linalg.norm(q[1:]))
    if s < 1e-15:
        return 2.0 * q[1:]
    angle = 2.0 * np.arctan2(s, q[0])
    return angle * q[1:] / s


def project_so3(M: ArrayLike, tol: float = 1e-15, max_iter: int = 50) -> NDArray[np.float64]:
    """Nearest rotation in Frobenius norm (orthogonal polar factor).

    Uses the Newton iteration ``X <- (X + X^{-T}) / 2`` which converges
    quadratically for non-singular ``M``.

    Raises
    ------
    DegenerateMatrixError
        If ``det(M) <= 1e-6``.
    """
    X = np.array(M, dtype=float)
    if not np.all(np.isfinite(X)):
        raise DegenerateMatrixError("matrix has non-finite entries")
    det = np.linalg.det(X)
    if det <= 1e-6:
        raise DegenerateMatrixError(f"cannot project matrix with det={det:.3g} onto SO(3)")
    for _ in range(max_iter):
        X_new = 0.5 * (X + np.linalg.inv(X).T)
        delta = np.max(np.abs(X_new - X))
        X = X_new
        if delta <= tol:
            break
    return X


def is_rotation(R: ArrayLike, tol: float = 1e-9) -> bool:
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3) or not np.all(np.isfinite(R)):
        return False
    ortho = np.linalg.norm(R.T @ R - np.eye(3))
    return bool(ortho <= tol and abs(np.linalg.det(R) - 1.0) <= tol)


def normalize_s2(v: ArrayLike, eps: float = EPS_NORM) -> NDArray[np.float64]:
    """Project a vector onto the unit sphere.

    Raises
    ------
    NearZeroNormError
        If ``|v| < eps``; normalization is undefined there.
    """
    v = np.asarray(v, dtype=float)
    n = float(np.linalg.norm(v))
    if not n >= eps:
        raise NearZeroNormError(f"cannot normalize vector of norm {n:.3g}")
    return v / n


def angle_between(a: ArrayLike, b: ArrayLike) -> float:
    """Angle in [0, pi] between two non-zero vectors (atan2 form)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return float(np.arctan2(np.linalg.norm(np.cross(a, b)), a @ b))


# -- quaternions ----------------------------------------------------------


def quat_mul(a: ArrayLike, b: ArrayLike) -> NDArray[np.float64]:
    """Hamilton product ``a * b`` (scalar first)."""
    a0, av = a[0], np.asarray(a[1:], dtype=float)
    b0, bv = b[0], np.asarray(b[1:], dtype=float)
    return np.concatenate(([a0 * b0 - av @ bv], a0 * bv + b0 * av + np.cross(av, bv)))


def quat_conj(q: ArrayLike) -> NDArray[np.float64]:
    q = np.asarray(q, dtype=float)
    return np.concatenate(([q[0]], -q[1:]))


def quat_to_rot(q: ArrayLike) -> NDArray[np.float64]:
    """``I + 2 q0 S(q) + 2 S(q)^2`` for a unit quaternion ``(q0, q)``."""
    q = np.asarray(q, dtype=float)
    Sq = skew(q[1:])
    return np.eye(3) + 2.0 * q[0] * Sq + 2.0 * (Sq @ Sq)


def rot_to_quat(R: ArrayLike) -> NDArray[np.float64]:
    """Unit quaternion of a rotation matrix (Shepperd's method), ``q0 >= 0``.

    Raises
    ------
    DegenerateMatrixError
        If ``R`` is not a rotation to 1e-6.
    """
    R = np.asarray(R, dtype=float)
    if not is_rotation(R, tol=1e-6):
        raise DegenerateMatrixError("input is not a rotation matrix")
    tr = np.trace(R)
    d = np.array([tr, R[0, 0], R[1, 1], R[2, 2]])
    k = int(np.argmax(d))
    if k == 0:
        q0 = 0.5 * np.sqrt(1.0 + tr)
        f = 0.25 / q0
        q = np.array([q0, (R[2, 1] - R[1, 2]) * f, (R[0, 2] - R[2, 0]) * f, (R[1, 0] - R[0, 1]) * f])
    elif k == 1:
        qx = 0.5 * np.sqrt(1.0 + 2.0 * R[0, 0] - tr)
        f = 0.25 / qx
        q = np.array([(R[2, 1] - R[1, 2]) * f, qx, (R[0, 1] + R[1, 0]) * f, (R[0, 2] + R[2, 0]) * f])
    elif k == 2:
        qy = 0.5 * np.sqrt(1.0 + 2.0 * R[1, 1] - tr)
        f = 0.25 / qy
        q = np.array([(R[0, 2] - R[2, 0]) * f, (R[0, 1] + R[1, 0]) * f, qy, (R[1, 2] + R[2, 1]) * f])
    else:
        qz = 0.5 * np.sqrt(1.0 + 2.0 * R[2, 2] - tr)
        f = 0.25 / qz
        q = np.array([(R[1, 0] - R[0, 1]) * f, (R[0, 2] + R[2, 0]) * f, (R[1, 2] + R[2, 1]) * f, qz])
    if q[0] < 0.0:
        q = -q
    return q / np.linalg.norm(q)


def random_rotation(rng: np.random.Generator) -> NDArray[np.float64]:
    """Uniformly distributed rotation (normalized Gaussian quaternion)."""
    q = rng.standard_normal(4)
    return quat_to_rot(q / np.linalg.norm(q))


def geodesic_angle(R1: ArrayLike, R2: ArrayLike) -> float:
    """Rotation angle of ``R1 R2^T``."""
    E = np.asarray(R1) @ np.asarray(R2).T
    c = np.clip(0.5 * (np.trace(E) - 1.0), -1.0, 1.0)
    s = 0.5 * np.linalg.norm(vee(E) * 2.0)
    return float(np.arctan2(s, c))


# -- attitude reconstruction -----------------------------------------------


def triad(tilt: ArrayLike, mag: ArrayLike, e_z: ArrayLike = E_Z, m: ArrayLike | None = None) -> NDArray[np.float64]:
    """TRIAD attitude from a prioritized pair of body-frame directions.

    ``tilt`` and ``mag`` are the body-frame observations of the world
    directions ``e_z`` and ``m``. The result ``R`` satisfies
    ``R.T @ e_z == tilt`` (up to normalization) and places ``R.T @ m`` in the
    half-plane spanned by ``tilt`` and ``mag``.

    Raises
    ------
    CollinearError
        If either pair spans an angle below 1e-6 rad.
    """
    if m is None:
        raise TypeError("world-frame field direction m is required")
    b1 = normalize_s2(tilt)
    b2 = normalize_s2(mag)
    r1 = normalize_s2(e_z)
    r2 = normalize_s2(m)
    cb = np.cross(b1, b2)
    cr = np.cross(r1, r2)
    nb, nr = np.linalg.norm(cb), np.linalg.norm(cr)
    lim = np.sin(COLLINEAR_ANGLE)
    if nb < lim or nr < lim:
        raise CollinearError("TRIAD needs two non-collinear directions")
    tb2 = cb / nb
    tr2 = cr / nr
    body = np.column_stack((b1, tb2, np.cross(b1, tb2)))
    world = np.column_stack((r1, tr2, np.cross(r1, tr2)))
    return world @ body.T

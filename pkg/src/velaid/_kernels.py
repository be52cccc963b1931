"""Compiled inner loops shared by the simulator and the observers.

Every observer state is a flat float64 vector and every measurement sample a
12-vector ``[y_v, y_g, y_a, y_m]``. Parameters travel as float64 arrays whose
layout is fixed per observer kind (see ``tilt.py``).
"""

import numpy as np
from numba import njit

KIND_TWO_STEP = 0
KIND_ONE_STEP = 1
KIND_HUA = 2
KIND_MARTIN = 3


@njit(cache=True)
def cross(a, b):
    out = np.empty(3)
    out[0] = a[1] * b[2] - a[2] * b[1]
    out[1] = a[2] * b[0] - a[0] * b[2]
    out[2] = a[0] * b[1] - a[1] * b[0]
    return out


@njit(cache=True)
def dot(a, b):
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]


@njit(cache=True)
def matvec(M, v):
    out = np.empty(3)
    for i in range(3):
        out[i] = M[i, 0] * v[0] + M[i, 1] * v[1] + M[i, 2] * v[2]
    return out


@njit(cache=True)
def matTvec(M, v):
    out = np.empty(3)
    for i in range(3):
        out[i] = M[0, i] * v[0] + M[1, i] * v[1] + M[2, i] * v[2]
    return out


@njit(cache=True)
def matmul(A, B):
    out = np.empty((3, 3))
    for i in range(3):
        for j in range(3):
            out[i, j] = A[i, 0] * B[0, j] + A[i, 1] * B[1, j] + A[i, 2] * B[2, j]
    return out


@njit(cache=True)
def rodrigues(phi):
    theta2 = dot(phi, phi)
    if theta2 < 1e-12:
        a = 1.0 - theta2 / 6.0 + theta2 * theta2 / 120.0
        b = 0.5 - theta2 / 24.0 + theta2 * theta2 / 720.0
    else:
        theta = np.sqrt(theta2)
        a = np.sin(theta) / theta
        b = (1.0 - np.cos(theta)) / theta2
    x, y, z = phi[0], phi[1], phi[2]
    R = np.empty((3, 3))
    R[0, 0] = 1.0 - b * (y * y + z * z)
    R[1, 1] = 1.0 - b * (x * x + z * z)
    R[2, 2] = 1.0 - b * (x * x + y * y)
    R[0, 1] = -a * z + b * x * y
    R[1, 0] = a * z + b * x * y
    R[0, 2] = a * y + b * x * z
    R[2, 0] = -a * y + b * x * z
    R[1, 2] = -a * x + b * y * z
    R[2, 1] = a * x + b * y * z
    return R


@njit(cache=True)
def rot_z(angle):
    c = np.cos(angle)
    s = np.sin(angle)
    R = np.zeros((3, 3))
    R[0, 0] = c
    R[0, 1] = -s
    R[1, 0] = s
    R[1, 1] = c
    R[2, 2] = 1.0
    return R


@njit(cache=True)
def inv_transpose(X):
    # adjugate formula: inv(X).T = cof(X) / det(X)
    c = np.empty((3, 3))
    c[0, 0] = X[1, 1] * X[2, 2] - X[1, 2] * X[2, 1]
    c[0, 1] = X[1, 2] * X[2, 0] - X[1, 0] * X[2, 2]
    c[0, 2] = X[1, 0] * X[2, 1] - X[1, 1] * X[2, 0]
    c[1, 0] = X[0, 2] * X[2, 1] - X[0, 1] * X[2, 2]
    c[1, 1] = X[0, 0] * X[2, 2] - X[0, 2] * X[2, 0]
    c[1, 2] = X[0, 1] * X[2, 0] - X[0, 0] * X[2, 1]
    c[2, 0] = X[0, 1] * X[1, 2] - X[0, 2] * X[1, 1]
    c[2, 1] = X[0, 2] * X[1, 0] - X[0, 0] * X[1, 2]
    c[2, 2] = X[0, 0] * X[1, 1] - X[0, 1] * X[1, 0]
    det = X[0, 0] * c[0, 0] + X[0, 1] * c[0, 1] + X[0, 2] * c[0, 2]
    return c / det


@njit(cache=True)
def polar_project(M):
    X = M.copy()
    for _ in range(50):
        Y = 0.5 * (X + inv_transpose(X))
        delta = np.max(np.abs(Y - X))
        X = Y
        if delta <= 1e-15:
            break
    return X


@njit(cache=True)
def normalize3(v):
    n = np.sqrt(dot(v, v))
    return v / n


# -- ground truth -----------------------------------------------------------


@njit(cache=True)
def integrate_attitude(R0, increments):
    """``R_{k+1} = project(R_k exp(S(increments[k])))``."""
    n = increments.shape[0] + 1
    out = np.empty((n, 3, 3))
    out[0] = R0
    R = R0.copy()
    for k in range(n - 1):
        R = polar_project(matmul(R, rodrigues(increments[k])))
        out[k + 1] = R
    return out


# -- tilt observers -----------------------------------------------------------


@njit(cache=True)
def _two_step_rhs(x, prm, y):
    n = int(prm[0])
    gamma = prm[1]
    g0 = prm[2]
    a1 = prm[3]
    yv = y[0:3]
    yg = y[3:6]
    ya = y[6:9]
    d = np.empty_like(x)
    xh1 = x[0:3]
    xh2 = x[x.shape[0] - 3 :]
    if n == 1:
        x2p = -(a1 / g0) * (yv - xh1)
        d[0:3] = -cross(yg, xh1) + ya - g0 * x2p
    else:
        x2p = x[3:6]
        pn = yv - xh1
        d[3:6] = -cross(yg, x2p) - (a1 / g0) * (x[6:9] if n > 2 else pn)
        acc = np.zeros(3)
        for i in range(2, n):
            pi = x[6 + 3 * (i - 2) : 9 + 3 * (i - 2)]
            nxt = x[9 + 3 * (i - 2) : 12 + 3 * (i - 2)] if i + 1 < n else pn
            d[6 + 3 * (i - 2) : 9 + 3 * (i - 2)] = -cross(yg, pi) + nxt
            acc += prm[2 + i] * pi
        acc += prm[2 + n] * pn
        d[0:3] = -cross(yg, xh1) + ya + acc - g0 * x2p
    w = yg - gamma * cross(xh2, x2p)
    d[x.shape[0] - 3 :] = -cross(w, xh2)
    return d


@njit(cache=True)
def _one_step_rhs(x, prm, y):
    alpha = prm[0]
    gamma = prm[1]
    g0 = prm[2]
    yv = y[0:3]
    yg = y[3:6]
    ya = y[6:9]
    xh1 = x[0:3]
    xh2 = x[3:6]
    xt1 = yv - xh1
    d = np.empty(6)
    d[0:3] = -cross(yg, xh1) - g0 * xh2 + ya + alpha * xt1
    w = yg + gamma * cross(xh2, xt1)
    d[3:6] = -cross(w, xh2)
    return d


@njit(cache=True)
def _hua_rhs(x, prm, y):
    k1v = prm[0]
    k2v = prm[1]
    k1r = prm[2]
    g0 = prm[3]
    yv = y[0:3]
    yg = y[3:6]
    ya = y[6:9]
    xh1 = x[0:3]
    xh2 = x[3:6]
    xt1 = yv - xh1
    d = np.empty(6)
    # S^2(u) w = u x (u x w)
    d[0:3] = -cross(yg, xh1) - g0 * xh2 + ya + k1v * xt1 - k2v * cross(xh2, cross(xh2, xt1))
    w = yg + k1r * cross(xh2, xt1)
    d[3:6] = -cross(w, xh2)
    return d


@njit(cache=True)
def _martin_rhs(x, prm, y):
    a1 = prm[0]
    a2 = prm[1]
    M = prm[2]
    g0 = prm[3]
    yv = y[0:3]
    yg = y[3:6]
    ya = y[6:9]
    ym = y[9:12]
    xh1 = x[0:3]
    x2p = x[3:6]
    x3p = x[6:9]
    p2 = yv - xh1
    d = np.empty(9)
    d[0:3] = -cross(yg, xh1) + ya + a2 * p2 - g0 * x2p
    d[3:6] = -cross(yg, x2p) - (a1 / g0) * p2
    d[6:9] = -cross(yg, x3p) - M * (x3p - ym)
    return d


@njit(cache=True)
def tilt_rhs(kind, x, prm, y):
    if kind == KIND_TWO_STEP:
        return _two_step_rhs(x, prm, y)
    elif kind == KIND_ONE_STEP:
        return _one_step_rhs(x, prm, y)
    elif kind == KIND_HUA:
        return _hua_rhs(x, prm, y)
    return _martin_rhs(x, prm, y)


@njit(cache=True)
def midpoint_sample(yp, y0, y1, y2, has_prev, has_next2):
    """Interpolated sample at ``t + dt/2`` from the samples around the step.

    Cubic through k-1..k+2 when both neighbours exist, otherwise the
    one-sided quadratic through the three available samples.
    """
    if has_prev and has_next2:
        return 0.5625 * (y0 + y1) - 0.0625 * (yp + y2)
    if has_prev:
        return -0.125 * yp + 0.75 * y0 + 0.375 * y1
    if has_next2:
        return 0.375 * y0 + 0.75 * y1 - 0.125 * y2
    return 0.5 * (y0 + y1)


@njit(cache=True)
def stream_midpoint(Y, k):
    """Midpoint sample of step ``k -> k+1`` of a stored stream."""
    n = Y.shape[0]
    has_prev = k > 0
    has_next2 = k + 2 < n
    yp = Y[k - 1] if has_prev else Y[k]
    y2 = Y[k + 2] if has_next2 else Y[k + 1]
    return midpoint_sample(yp, Y[k], Y[k + 1], y2, has_prev, has_next2)


@njit(cache=True)
def tilt_stages(kind, x, prm, y0, ym, y1, dt):
    """RK4 stage states and slopes with samples at the start, middle and end of the step."""
    X = np.empty((4, x.shape[0]))
    F = np.empty((4, x.shape[0]))
    X[0] = x
    F[0] = tilt_rhs(kind, X[0], prm, y0)
    X[1] = x + 0.5 * dt * F[0]
    F[1] = tilt_rhs(kind, X[1], prm, ym)
    X[2] = x + 0.5 * dt * F[1]
    F[2] = tilt_rhs(kind, X[2], prm, ym)
    X[3] = x + dt * F[2]
    F[3] = tilt_rhs(kind, X[3], prm, y1)
    return X, F


@njit(cache=True)
def tilt_combine(kind, x, F, dt):
    xn = x + (dt / 6.0) * (F[0] + 2.0 * F[1] + 2.0 * F[2] + F[3])
    if kind != KIND_MARTIN:
        m = xn.shape[0]
        xn[m - 3 :] = normalize3(xn[m - 3 :])
    return xn


@njit(cache=True)
def tilt_step(kind, x, prm, y0, ym, y1, dt):
    """One RK4 step, then renormalization of the unit-sphere estimate."""
    X, F = tilt_stages(kind, x, prm, y0, ym, y1, dt)
    return tilt_combine(kind, x, F, dt)


@njit(cache=True)
def tilt_run(kind, x0, prm, Y, dt):
    n = Y.shape[0]
    out = np.empty((n, x0.shape[0]))
    out[0] = x0
    x = x0.copy()
    for k in range(n - 1):
        x = tilt_step(kind, x, prm, Y[k], stream_midpoint(Y, k), Y[k + 1], dt)
        out[k + 1] = x
    return out


@njit(cache=True)
def drive_vector(kind, x, prm, y):
    """Vector the attitude correction aligns ``Rhat^T e_z`` with.

    Two-step observers return the intermediate tilt; the Hua observer returns
    ``-x~1`` so that ``rho1 S(u) drive`` reproduces its tilt correction.
    """
    if kind == KIND_TWO_STEP:
        n = int(prm[0])
        if n == 1:
            return -(prm[3] / prm[2]) * (y[0:3] - x[0:3])
        return x[3:6].copy()
    elif kind == KIND_MARTIN:
        return x[3:6].copy()
    return x[0:3] - y[0:3]


# -- attitude observers -------------------------------------------------------


@njit(cache=True)
def _sigma(R, drive, y, rho1, rho2, mu, m):
    """Body part of the correction and the yaw rate of the mu term."""
    u = matTvec(R, np.array([0.0, 0.0, 1.0]))
    mb = matTvec(R, m)
    ym = y[9:12]
    mxy = cross(mb, ym)
    sigma_body = rho1 * cross(u, drive) + rho2 * mxy
    c = mu * dot(u, mxy)
    return sigma_body, c


@njit(cache=True)
def _att_slopes(Rb, phi, d, y, prm, m):
    """Right (body) and left (yaw) rates of ``Rhat = Rz(phi) Rb``."""
    R = matmul(rot_z(phi), Rb)
    s, c = _sigma(R, d, y, prm[0], prm[1], prm[2], m)
    return y[3:6] - s, -c


@njit(cache=True)
def attitude_stages(kind, x, tprm, Rb, phi, prm, m, y0, ym, y1, dt):
    """One joint step of the tilt stage (RK4) and the attitude (CF4).

    ``Rhat = Rz(phi) Rb``: the mu term is a world-frame rotation about
    ``e_z`` and is accumulated in ``phi``, so ``Rb`` (hence ``Rhat^T e_z``)
    does not see it. ``Rb`` uses the fourth-order commutator-free Lie group
    scheme of Celledoni, Marthinsen and Owren, whose stages coincide with
    the RK4 stages of the tilt stage.
    """
    X, F = tilt_stages(kind, x, tprm, y0, ym, y1, dt)
    xn = tilt_combine(kind, x, F, dt)
    ys = (y0, ym, ym, y1)
    f1, c1 = _att_slopes(Rb, phi, drive_vector(kind, X[0], tprm, ys[0]), ys[0], prm, m)
    R2 = matmul(Rb, rodrigues(0.5 * dt * f1))
    p2 = phi + 0.5 * dt * c1
    f2, c2 = _att_slopes(R2, p2, drive_vector(kind, X[1], tprm, ys[1]), ys[1], prm, m)
    R3 = matmul(Rb, rodrigues(0.5 * dt * f2))
    p3 = phi + 0.5 * dt * c2
    f3, c3 = _att_slopes(R3, p3, drive_vector(kind, X[2], tprm, ys[2]), ys[2], prm, m)
    R4 = matmul(R2, rodrigues(dt * (f3 - 0.5 * f1)))
    p4 = phi + dt * c3
    f4, c4 = _att_slopes(R4, p4, drive_vector(kind, X[3], tprm, ys[3]), ys[3], prm, m)
    b1 = 0.25 * f1 + (f2 + f3) / 6.0 - f4 / 12.0
    b2 = -f1 / 12.0 + (f2 + f3) / 6.0 + 0.25 * f4
    Rn = polar_project(matmul(Rb, matmul(rodrigues(dt * b1), rodrigues(dt * b2))))
    pn = phi + (dt / 6.0) * (c1 + 2.0 * c2 + 2.0 * c3 + c4)
    return xn, Rn, pn


@njit(cache=True)
def wrap_angle(a):
    return np.arctan2(np.sin(a), np.cos(a))


@njit(cache=True)
def attitude_step(kind, x, tprm, R, prm, m, y0, ym, y1, dt):
    xn, Rb, phi = attitude_stages(kind, x, tprm, R, 0.0, prm, m, y0, ym, y1, dt)
    return xn, polar_project(matmul(rot_z(phi), Rb))


@njit(cache=True)
def attitude_run(kind, x0, tprm, R0, aprm, m, Y, dt):
    n = Y.shape[0]
    xs = np.empty((n, x0.shape[0]))
    Rs = np.empty((n, 3, 3))
    xs[0] = x0
    Rs[0] = R0
    x = x0.copy()
    Rb = R0.copy()
    phi = 0.0
    for k in range(n - 1):
        x, Rb, phi = attitude_stages(kind, x, tprm, Rb, phi, aprm, m, Y[k], stream_midpoint(Y, k), Y[k + 1], dt)
        phi = wrap_angle(phi)
        xs[k + 1] = x
        Rs[k + 1] = matmul(rot_z(phi), Rb)
    return xs, Rs


# -- error flows ----------------------------------------------------------------


@njit(cache=True)
def quat_error_rhs(x, prm, W, e):
    """``(z_p1, q0, q)`` flow; ``prm = [rho1, rho2, mu, alpha1]``."""
    rho1, rho2, mu, a1 = prm[0], prm[1], prm[2], prm[3]
    z = x[0:3]
    q0 = x[3]
    q = x[4:7]
    Wq = matvec(W, q)
    w = q0 * Wq - cross(q, Wq)
    Kw = w + (mu / rho2) * dot(e, w) * e
    # R~^T z = z - 2 q0 q x z + 2 q x (q x z)
    qz = cross(q, z)
    Rtz = z - 2.0 * q0 * qz + 2.0 * cross(q, qz)
    c = cross(e, Rtz)
    v = Kw + 0.5 * rho1 * c
    out = np.empty(7)
    out[0:3] = -a1 * z
    out[3] = dot(q, v)
    out[4:7] = -(q0 * v + cross(q, v))
    return out


@njit(cache=True)
def quat_error_run(x0, prm, W, e, dt, n_steps):
    out = np.empty((n_steps + 1, 7))
    out[0] = x0
    x = x0.copy()
    for k in range(n_steps):
        k1 = quat_error_rhs(x, prm, W, e)
        k2 = quat_error_rhs(x + 0.5 * dt * k1, prm, W, e)
        k3 = quat_error_rhs(x + 0.5 * dt * k2, prm, W, e)
        k4 = quat_error_rhs(x + dt * k3, prm, W, e)
        x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        n = np.sqrt(x[3] ** 2 + dot(x[4:7], x[4:7]))
        x[3:7] = x[3:7] / n
        out[k + 1] = x
    return out

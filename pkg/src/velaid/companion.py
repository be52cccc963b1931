"""Companion-form filter matrices and their Lyapunov certificates."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
from numpy.typing import ArrayLike, NDArray

from .errors import NotHurwitzError

HURWITZ_MARGIN = 1e-12


@dataclass(frozen=True)
class CompanionSystem:
    """Error chain ``psi' = M_alpha psi`` of an n-th order first stage.

    ``A_alpha`` has ones on the superdiagonal and ``-(alpha_1 ... alpha_n)``
    on its last row, so its characteristic polynomial is
    ``s^n + alpha_n s^(n-1) + ... + alpha_2 s + alpha_1``.
    """

    alphas: NDArray[np.float64]
    A_alpha: NDArray[np.float64]
    M_alpha: NDArray[np.float64]

    @property
    def n(self) -> int:
        return len(self.alphas)

    @property
    def eigenvalues(self) -> NDArray[np.complex128]:
        return np.linalg.eigvals(self.A_alpha)

    @property
    def decay_rate(self) -> float:
        """``min -Re(lambda)`` over the eigenvalues of ``A_alpha``."""
        return float(-np.max(self.eigenvalues.real))


def companion_matrix(alphas: ArrayLike) -> NDArray[np.float64]:
    a = np.atleast_1d(np.asarray(alphas, dtype=float))
    n = len(a)
    A = np.eye(n, k=1)
    A[-1, :] -= a
    return A


def companion(alphas: ArrayLike) -> CompanionSystem:
    """Build and validate the companion system for the given gains.

    Raises
    ------
    NotHurwitzError
        If some eigenvalue of ``A_alpha`` has real part >= -1e-12.
    """
    a = np.atleast_1d(np.asarray(alphas, dtype=float)).copy()
    if a.ndim != 1 or len(a) < 1:
        raise NotHurwitzError("need at least one gain")
    if not np.all(np.isfinite(a)):
        raise NotHurwitzError("gains must be finite")
    A = companion_matrix(a)
    lam = np.linalg.eigvals(A)
    if np.max(lam.real) >= -HURWITZ_MARGIN:
        raise NotHurwitzError(f"gains {a.tolist()} give eigenvalues {lam} (not Hurwitz)")
    a.setflags(write=False)
    return CompanionSystem(alphas=a, A_alpha=A, M_alpha=np.kron(A, np.eye(3)))


def solve_lyapunov(sys: CompanionSystem, refine: int = 4) -> NDArray[np.float64]:
    """Symmetric positive-definite ``P`` with ``M^T P + P M = -I``.

    Since ``M = A kron I3`` the solution is ``P_A kron I3``. ``P_A`` comes from
    Bartels-Stewart followed by ``refine`` steps of iterative refinement (the
    best iterate is kept); high-order multiple-pole gains are ill-conditioned
    enough that the plain solve leaves residuals around 1e-8 at n = 4.
    """
    A = sys.A_alpha
    if np.max(np.linalg.eigvals(A).real) >= -HURWITZ_MARGIN:
        raise NotHurwitzError("Lyapunov equation needs a Hurwitz system")
    eye = np.eye(sys.n)
    P = scipy.linalg.solve_continuous_lyapunov(A.T, -eye)
    P = 0.5 * (P + P.T)
    best, best_res = P, np.linalg.norm(A.T @ P + P @ A + eye)
    for _ in range(refine):
        R = A.T @ P + P @ A + eye
        E = scipy.linalg.solve_continuous_lyapunov(A.T, -R)
        P = P + 0.5 * (E + E.T)
        res = np.linalg.norm(A.T @ P + P @ A + eye)
        if res < best_res:
            best, best_res = P, res
    return np.kron(best, np.eye(3))


def lyapunov_residual(sys: CompanionSystem, P: ArrayLike) -> float:
    P = np.asarray(P)
    M = sys.M_alpha
    return float(np.linalg.norm(M.T @ P + P @ M + np.eye(M.shape[0])))


def pole_placement_gains(pole: float, n: int) -> NDArray[np.float64]:
    """Gains placing an n-fold pole at ``-pole``.

    Coefficients of ``(s + pole)^n`` in ascending order, without the leading 1:
    ``alpha_i = C(n, i-1) pole^(n-i+1)``.
    """
    from math import comb

    return np.array([comb(n, i - 1) * pole ** (n - i + 1) for i in range(1, n + 1)], dtype=float)

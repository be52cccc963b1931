"""Tilt observers driven by gyro, accelerometer and body-frame velocity.

Four designs share the same integration scheme (RK4 with the midpoint
measurement interpolated quadratically from three samples, then renormalization of any estimate
that lives on the unit sphere):

- ``TwoStepState``: unconstrained n-th order intermediate tilt ``xhat2_prime``
  followed by a complementary filter on the sphere.
- ``OneStepState``: single-stage observer on R^3 x S^2.
- ``HuaState``: the same structure with an extra velocity-error term.
- ``MartinTiltState``: unconstrained gravity and magnetic-field chains.

Step functions are pure: they take a state and return a new one.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np
from numpy.typing import ArrayLike, NDArray

from . import _kernels as K
from .companion import companion, pole_placement_gains
from .errors import GainConditionError
from .measurement import G0, ImuSample, ImuSeries, TrueState
from .so3 import normalize_s2

DEFAULT_GAMMA = 20.0


def default_pole(gamma: float = DEFAULT_GAMMA, g0: float = G0) -> float:
    """``2 sqrt(gamma g0)``: the double pole of the one-step error dynamics."""
    return 2.0 * np.sqrt(gamma * g0)


def _vec(v: ArrayLike) -> NDArray[np.float64]:
    a = np.array(v, dtype=float).reshape(3)
    a.setflags(write=False)
    return a


def _sample_vector(y: ImuSample | ArrayLike) -> NDArray[np.float64]:
    if isinstance(y, ImuSample):
        return y.as_vector()
    return np.ascontiguousarray(y, dtype=float).reshape(12)


def step_samples(y, y_next=None, y_prev=None, y_next2=None):
    """Samples ``(k, k+1/2, k+1)`` for one step.

    The midpoint is the cubic through ``k-1 .. k+2`` when both ``y_prev``
    and ``y_next2`` are given, otherwise the quadratic through the three
    available samples (the rule :func:`run_tilt` applies at the stream ends).
    Without ``y_next`` the measurements are held constant over the step.
    """
    y0 = _sample_vector(y)
    if y_next is None:
        return y0, y0, y0
    y1 = _sample_vector(y_next)
    yp = y0 if y_prev is None else _sample_vector(y_prev)
    y2 = y1 if y_next2 is None else _sample_vector(y_next2)
    return y0, K.midpoint_sample(yp, y0, y1, y2, y_prev is not None, y_next2 is not None), y1


# -- two-step observer ----------------------------------------------------------


@dataclass(frozen=True)
class TwoStepGains:
    alphas: tuple[float, ...]
    gamma: float = DEFAULT_GAMMA
    g0: float = G0

    def __post_init__(self) -> None:
        object.__setattr__(self, "alphas", tuple(float(a) for a in np.atleast_1d(self.alphas)))
        if not self.gamma > 0:
            raise GainConditionError("gamma must be positive")
        if any(not a > 0 for a in self.alphas):
            raise GainConditionError("all alpha gains must be positive")
        companion(self.alphas)  # raises NotHurwitzError

    @classmethod
    def multiple_pole(cls, order: int, gamma: float = DEFAULT_GAMMA, g0: float = G0, pole: float | None = None):
        """Gains placing every first-stage pole at ``-2 sqrt(gamma g0)``."""
        if pole is None:
            pole = default_pole(gamma, g0)
        return cls(tuple(pole_placement_gains(pole, order)), gamma, g0)

    @property
    def order(self) -> int:
        return len(self.alphas)

    def params(self) -> NDArray[np.float64]:
        return np.array([self.order, self.gamma, self.g0, *self.alphas], dtype=float)


@dataclass(frozen=True)
class TwoStepState:
    """``p`` holds the internal chain states ``p_2 ... p_{n-1}`` (empty for n <= 2)."""

    order: int
    xhat1: NDArray[np.float64]
    xhat2_prime: NDArray[np.float64]
    xhat2: NDArray[np.float64]
    p: NDArray[np.float64] = field(default_factory=lambda: np.zeros((0, 3)))

    def __post_init__(self) -> None:
        if self.order < 1:
            raise ValueError("order must be at least 1")
        for name in ("xhat1", "xhat2_prime"):
            object.__setattr__(self, name, _vec(getattr(self, name)))
        object.__setattr__(self, "xhat2", _vec(normalize_s2(self.xhat2)))
        p = np.array(self.p, dtype=float).reshape(-1, 3)
        if len(p) != max(self.order - 2, 0):
            raise ValueError(f"order {self.order} needs {max(self.order - 2, 0)} chain states")
        p.setflags(write=False)
        object.__setattr__(self, "p", p)

    @classmethod
    def initial(
        cls,
        gains: TwoStepGains,
        xhat1: ArrayLike,
        xhat2: ArrayLike,
        xhat2_prime: ArrayLike | None = None,
        p: ArrayLike | None = None,
        y_v: ArrayLike | None = None,
    ) -> "TwoStepState":
        """Initial state; for order 1 ``xhat2_prime`` follows from ``xhat1`` and ``y_v``."""
        n = gains.order
        if n == 1:
            if y_v is None:
                raise ValueError("order-1 observers need y_v to evaluate the intermediate tilt")
            xhat2_prime = -(gains.alphas[0] / gains.g0) * (np.asarray(y_v) - np.asarray(xhat1))
        elif xhat2_prime is None:
            raise ValueError("xhat2_prime is a state for order >= 2")
        if p is None:
            p = np.zeros((max(n - 2, 0), 3))
        return cls(n, xhat1, xhat2_prime, xhat2, p)

    @classmethod
    def from_truth(cls, truth: TrueState, gains: TwoStepGains) -> "TwoStepState":
        """State at the origin of the error dynamics."""
        x2 = truth.tilt
        xhat1 = truth.v + (gains.g0 / gains.alphas[0]) * x2 if gains.order == 1 else truth.v
        return cls.initial(gains, xhat1, x2, xhat2_prime=x2, y_v=truth.v)

    def vector(self) -> NDArray[np.float64]:
        if self.order == 1:
            return np.concatenate((self.xhat1, self.xhat2))
        return np.concatenate((self.xhat1, self.xhat2_prime, self.p.ravel(), self.xhat2))

    @classmethod
    def from_vector(cls, x: NDArray, gains: TwoStepGains, y: NDArray) -> "TwoStepState":
        n = gains.order
        xhat1 = x[0:3]
        if n == 1:
            x2p = -(gains.alphas[0] / gains.g0) * (y[0:3] - xhat1)
            return cls(1, xhat1, x2p, x[3:6])
        return cls(n, xhat1, x[3:6], x[-3:], x[6:-3].reshape(-1, 3))


def two_step_step(
    st: TwoStepState,
    g: TwoStepGains,
    y: ImuSample | ArrayLike,
    dt: float,
    y_next: ImuSample | ArrayLike | None = None,
    y_prev: ImuSample | ArrayLike | None = None,
    y_next2: ImuSample | ArrayLike | None = None,
) -> TwoStepState:
    """Advance by ``dt`` from the sample ``y`` to ``y_next``.

    See :func:`step_samples` for how missing neighbouring samples are handled.
    """
    if st.order != g.order:
        raise ValueError("state and gains have different orders")
    y0, ym, y1 = step_samples(y, y_next, y_prev, y_next2)
    x = K.tilt_step(K.KIND_TWO_STEP, st.vector(), g.params(), y0, ym, y1, float(dt))
    return TwoStepState.from_vector(x, g, y1)


# -- one-step and Hua observers -----------------------------------------------


@dataclass(frozen=True)
class OneStepGains:
    alpha: float
    gamma: float = DEFAULT_GAMMA
    g0: float = G0

    def __post_init__(self) -> None:
        if not (self.alpha > 0 and self.gamma > 0):
            raise GainConditionError("alpha and gamma must be positive")
        if self.gamma * self.g0 > self.alpha**2:
            raise GainConditionError(
                f"gamma*g0 = {self.gamma * self.g0:.4g} exceeds alpha^2 = {self.alpha**2:.4g}"
            )

    @classmethod
    def double_pole(cls, gamma: float = DEFAULT_GAMMA, g0: float = G0) -> "OneStepGains":
        return cls(default_pole(gamma, g0), gamma, g0)

    def params(self) -> NDArray[np.float64]:
        return np.array([self.alpha, self.gamma, self.g0])


@dataclass(frozen=True)
class OneStepState:
    xhat1: NDArray[np.float64]
    xhat2: NDArray[np.float64]
    gains: OneStepGains

    def __post_init__(self) -> None:
        object.__setattr__(self, "xhat1", _vec(self.xhat1))
        object.__setattr__(self, "xhat2", _vec(normalize_s2(self.xhat2)))

    @classmethod
    def from_truth(cls, truth: TrueState, gains: OneStepGains) -> "OneStepState":
        return cls(truth.v, truth.tilt, gains)

    def vector(self) -> NDArray[np.float64]:
        return np.concatenate((self.xhat1, self.xhat2))


def one_step_step(
    st: OneStepState, y: ImuSample | ArrayLike, dt: float,
    y_next: ImuSample | ArrayLike | None = None,
    y_prev: ImuSample | ArrayLike | None = None,
    y_next2: ImuSample | ArrayLike | None = None,
) -> OneStepState:
    y0, ym, y1 = step_samples(y, y_next, y_prev, y_next2)
    x = K.tilt_step(K.KIND_ONE_STEP, st.vector(), st.gains.params(), y0, ym, y1, float(dt))
    return OneStepState(x[0:3], x[3:6], st.gains)


@dataclass(frozen=True)
class HuaGains:
    k1v: float
    k2v: float
    k1r: float
    g0: float = G0

    def __post_init__(self) -> None:
        if not (self.k1v > 0 and self.k1r > 0 and self.k2v >= 0):
            raise GainConditionError("k1v, k1r must be positive and k2v non-negative")
        if self.k1r * self.g0 > self.k1v * self.k2v and not (
            self.k2v == 0 and self.k1r * self.g0 <= self.k1v**2
        ):
            raise GainConditionError(
                f"k1r*g0 = {self.k1r * self.g0:.4g} exceeds k1v*k2v = {self.k1v * self.k2v:.4g}"
            )

    @classmethod
    def matched(cls, gamma: float = DEFAULT_GAMMA, g0: float = G0) -> "HuaGains":
        """``k1v = k2v = 2 sqrt(gamma g0)``, ``k1r = gamma``."""
        a = default_pole(gamma, g0)
        return cls(a, a, gamma, g0)

    def params(self) -> NDArray[np.float64]:
        return np.array([self.k1v, self.k2v, self.k1r, self.g0])


@dataclass(frozen=True)
class HuaState:
    xhat1: NDArray[np.float64]
    xhat2: NDArray[np.float64]
    gains: HuaGains

    def __post_init__(self) -> None:
        object.__setattr__(self, "xhat1", _vec(self.xhat1))
        object.__setattr__(self, "xhat2", _vec(normalize_s2(self.xhat2)))

    @classmethod
    def from_truth(cls, truth: TrueState, gains: HuaGains) -> "HuaState":
        return cls(truth.v, truth.tilt, gains)

    def vector(self) -> NDArray[np.float64]:
        return np.concatenate((self.xhat1, self.xhat2))


def hua_step(
    st: HuaState, y: ImuSample | ArrayLike, dt: float,
    y_next: ImuSample | ArrayLike | None = None,
    y_prev: ImuSample | ArrayLike | None = None,
    y_next2: ImuSample | ArrayLike | None = None,
) -> HuaState:
    y0, ym, y1 = step_samples(y, y_next, y_prev, y_next2)
    x = K.tilt_step(K.KIND_HUA, st.vector(), st.gains.params(), y0, ym, y1, float(dt))
    return HuaState(x[0:3], x[3:6], st.gains)


# -- unconstrained two-chain baseline -------------------------------------------


@dataclass(frozen=True)
class MartinGains:
    """Gravity chain with poles ``-L, -K``; first-order field chain with rate ``M``."""

    L: float
    K: float
    M: float
    g0: float = G0

    def __post_init__(self) -> None:
        if not (self.L > 0 and self.K > 0 and self.M > 0):
            raise GainConditionError("L, K, M must be positive")

    @classmethod
    def matched(cls, gamma: float = DEFAULT_GAMMA, g0: float = G0, mu: float = 20.0) -> "MartinGains":
        a = default_pole(gamma, g0)
        return cls(a / 2.0, a / 2.0, mu, g0)

    @property
    def alphas(self) -> tuple[float, float]:
        return (self.L * self.K, self.L + self.K)

    def params(self) -> NDArray[np.float64]:
        a1, a2 = self.alphas
        return np.array([a1, a2, self.M, self.g0])


@dataclass(frozen=True)
class MartinTiltState:
    xhat1: NDArray[np.float64]
    xhat2_prime: NDArray[np.float64]
    xhat3_prime: NDArray[np.float64]
    gains: MartinGains

    def __post_init__(self) -> None:
        for name in ("xhat1", "xhat2_prime", "xhat3_prime"):
            object.__setattr__(self, name, _vec(getattr(self, name)))

    @classmethod
    def from_truth(cls, truth: TrueState, gains: MartinGains, m: ArrayLike) -> "MartinTiltState":
        return cls(truth.v, truth.tilt, truth.field(m), gains)

    def vector(self) -> NDArray[np.float64]:
        return np.concatenate((self.xhat1, self.xhat2_prime, self.xhat3_prime))


def martin_tilt_step(
    st: MartinTiltState, y: ImuSample | ArrayLike, dt: float,
    y_next: ImuSample | ArrayLike | None = None,
    y_prev: ImuSample | ArrayLike | None = None,
    y_next2: ImuSample | ArrayLike | None = None,
) -> MartinTiltState:
    y0, ym, y1 = step_samples(y, y_next, y_prev, y_next2)
    x = K.tilt_step(K.KIND_MARTIN, st.vector(), st.gains.params(), y0, ym, y1, float(dt))
    return MartinTiltState(x[0:3], x[3:6], x[6:9], st.gains)


TiltState = Union[TwoStepState, OneStepState, HuaState, MartinTiltState]


def tilt_of(state: TiltState) -> tuple[NDArray[np.float64] | None, NDArray[np.float64]]:
    """``(intermediate, constrained)`` tilt estimates of any observer.

    For the unconstrained baseline the constrained output is the normalized
    intermediate, which raises :class:`NearZeroNormError` near the origin.
    """
    if isinstance(state, TwoStepState):
        return state.xhat2_prime, state.xhat2
    if isinstance(state, MartinTiltState):
        return state.xhat2_prime, normalize_s2(state.xhat2_prime)
    return None, state.xhat2


# -- whole-run integration --------------------------------------------------------


@dataclass(frozen=True)
class TiltTrace:
    """Observer history on the measurement grid.

    ``xhat2`` is the constrained estimate; for the unconstrained baseline it is
    the raw intermediate (callers normalize it, see :func:`tilt_of`).
    """

    xhat1: NDArray[np.float64]
    xhat2: NDArray[np.float64]
    xhat2_prime: NDArray[np.float64] | None = None
    xhat3_prime: NDArray[np.float64] | None = None
    p: NDArray[np.float64] | None = None


def _kind_and_params(state: TiltState, gains: TwoStepGains | None):
    if isinstance(state, TwoStepState):
        if gains is None:
            raise ValueError("two-step observers need their gains")
        return K.KIND_TWO_STEP, gains.params()
    if isinstance(state, OneStepState):
        return K.KIND_ONE_STEP, state.gains.params()
    if isinstance(state, HuaState):
        return K.KIND_HUA, state.gains.params()
    if isinstance(state, MartinTiltState):
        return K.KIND_MARTIN, state.gains.params()
    raise TypeError(f"unknown observer state {type(state).__name__}")


def _trace_from_states(state: TiltState, X: NDArray, gains, Y: NDArray) -> TiltTrace:
    if isinstance(state, TwoStepState):
        if state.order == 1:
            x2p = -(gains.alphas[0] / gains.g0) * (Y[:, 0:3] - X[:, 0:3])
            return TiltTrace(X[:, 0:3], X[:, 3:6], x2p)
        n = state.order
        p = X[:, 6:-3].reshape(len(X), n - 2, 3)
        return TiltTrace(X[:, 0:3], X[:, -3:], X[:, 3:6], p=p)
    if isinstance(state, MartinTiltState):
        return TiltTrace(X[:, 0:3], X[:, 3:6], X[:, 3:6], X[:, 6:9])
    return TiltTrace(X[:, 0:3], X[:, 3:6])


def run_tilt(state: TiltState, series: ImuSeries, dt: float, gains: TwoStepGains | None = None) -> TiltTrace:
    """Integrate an observer over a whole measurement stream from ``state``."""
    kind, prm = _kind_and_params(state, gains)
    Y = series.matrix()
    X = K.tilt_run(kind, state.vector(), prm, Y, float(dt))
    return _trace_from_states(state, X, gains, Y)

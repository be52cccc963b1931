"""Ground-truth trajectories, ideal IMU/velocity measurements and sensor noise."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterator, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from . import _kernels as K
from .so3 import E_Z

G0 = 9.81
M_FIELD = np.array([1.0, 0.0, 1.0]) / np.sqrt(2.0)

Wave = tuple[float, float, float]  # (amplitude, frequency [Hz], phase [rad])


def _waves3(waves: Sequence[Sequence[Wave]] | Sequence[Wave]) -> list[list[Wave]]:
    """Normalize to one list of sinusoids per axis."""
    out = []
    for axis in waves:
        if len(axis) == 3 and all(np.isscalar(c) for c in axis):
            out.append([tuple(float(c) for c in axis)])
        else:
            out.append([tuple(float(c) for c in w) for w in axis])
    if len(out) != 3:
        raise ValueError("need one wave specification per axis")
    return out


@dataclass(frozen=True)
class TrajectorySpec:
    """Sinusoidal body rates and velocities integrated into an attitude history.

    Each axis of ``omega_waves`` / ``vel_waves`` is a sum of terms
    ``A sin(2 pi f t + phi)``; a term with ``f = 0`` and ``phi = pi/2`` is a
    constant.
    """

    duration: float = 10.0
    dt: float = 1e-3
    omega_waves: tuple = (
        (1.2, 0.3, 0.0),
        (0.8, 0.5, np.pi / 3),
        (1.0, 0.7, np.pi / 5),
    )
    vel_waves: tuple = (
        (1.5, 0.4, np.pi / 4),
        (1.0, 0.6, 0.0),
        (0.5, 0.2, np.pi / 2),
    )
    R0: NDArray[np.float64] = field(default_factory=lambda: np.eye(3))
    seed: int = 0

    def __post_init__(self) -> None:
        if not self.duration > 0:
            raise ValueError("duration must be positive")
        if not 0 < self.dt <= 0.01:
            raise ValueError("dt must lie in (0, 0.01]")
        for w in _waves3(self.omega_waves) + _waves3(self.vel_waves):
            if not np.all(np.isfinite(w)):
                raise ValueError("wave parameters must be finite")

    @property
    def n_samples(self) -> int:
        return int(round(self.duration / self.dt)) + 1

    @property
    def times(self) -> NDArray[np.float64]:
        return np.arange(self.n_samples) * self.dt


def _eval_waves(waves, t: NDArray[np.float64]) -> tuple[NDArray, NDArray]:
    val = np.zeros((len(t), 3))
    der = np.zeros((len(t), 3))
    for i, axis in enumerate(_waves3(waves)):
        for amp, freq, phase in axis:
            w = 2.0 * np.pi * freq
            val[:, i] += amp * np.sin(w * t + phase)
            der[:, i] += amp * w * np.cos(w * t + phase)
    return val, der


@dataclass(frozen=True)
class TrueState:
    t: float
    R: NDArray[np.float64]
    v: NDArray[np.float64]
    omega: NDArray[np.float64]
    vdot: NDArray[np.float64]

    @property
    def tilt(self) -> NDArray[np.float64]:
        """``x2 = R^T e_z``."""
        return self.R.T @ E_Z

    def field(self, m: ArrayLike = M_FIELD) -> NDArray[np.float64]:
        """``x3 = R^T m``."""
        return self.R.T @ np.asarray(m, dtype=float)


@dataclass(frozen=True)
class Trajectory:
    """Ground truth sampled on a uniform grid (struct of arrays)."""

    t: NDArray[np.float64]
    R: NDArray[np.float64]
    v: NDArray[np.float64]
    omega: NDArray[np.float64]
    vdot: NDArray[np.float64]

    def __len__(self) -> int:
        return len(self.t)

    def __getitem__(self, k: int) -> TrueState:
        return TrueState(float(self.t[k]), self.R[k], self.v[k], self.omega[k], self.vdot[k])

    def __iter__(self) -> Iterator[TrueState]:
        return (self[k] for k in range(len(self)))

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0]) if len(self.t) > 1 else 0.0

    @property
    def tilt(self) -> NDArray[np.float64]:
        return self.R[:, 2, :].copy()

    def field(self, m: ArrayLike = M_FIELD) -> NDArray[np.float64]:
        return np.einsum("kji,j->ki", self.R, np.asarray(m, dtype=float))


def gen_trajectory(spec: TrajectorySpec) -> Trajectory:
    """Analytic rates and velocities; attitude by the fourth-order Magnus rule.

    Each step uses the rate at the two Gauss points ``t + (1/2 -+ sqrt(3)/6) dt``:
    ``R_{k+1} = R_k exp(S(dt/2 (w1 + w2) + sqrt(3) dt^2 / 12 w1 x w2))``.
    """
    t = spec.times
    h = spec.dt
    omega, _ = _eval_waves(spec.omega_waves, t)
    v, vdot = _eval_waves(spec.vel_waves, t)
    c = np.sqrt(3.0) / 6.0
    w1, _ = _eval_waves(spec.omega_waves, t[:-1] + (0.5 - c) * h)
    w2, _ = _eval_waves(spec.omega_waves, t[:-1] + (0.5 + c) * h)
    inc = 0.5 * h * (w1 + w2) + (np.sqrt(3.0) * h * h / 12.0) * np.cross(w1, w2)
    R0 = np.ascontiguousarray(spec.R0, dtype=float)
    R = K.integrate_attitude(R0, np.ascontiguousarray(inc))
    return Trajectory(t=t, R=R, v=v, omega=omega, vdot=vdot)


# -- measurements -------------------------------------------------------------


@dataclass(frozen=True)
class ImuSample:
    t: float
    y_v: NDArray[np.float64]
    y_g: NDArray[np.float64]
    y_a: NDArray[np.float64]
    y_m: NDArray[np.float64]

    def as_vector(self) -> NDArray[np.float64]:
        return np.concatenate((self.y_v, self.y_g, self.y_a, self.y_m))


@dataclass(frozen=True)
class ImuSeries:
    """Measurement stream on a uniform grid, one row per sample."""

    t: NDArray[np.float64]
    y_v: NDArray[np.float64]
    y_g: NDArray[np.float64]
    y_a: NDArray[np.float64]
    y_m: NDArray[np.float64]

    def __len__(self) -> int:
        return len(self.t)

    def __getitem__(self, k: int) -> ImuSample:
        return ImuSample(float(self.t[k]), self.y_v[k], self.y_g[k], self.y_a[k], self.y_m[k])

    def matrix(self) -> NDArray[np.float64]:
        """``(N, 12)`` array ``[y_v, y_g, y_a, y_m]`` as consumed by the kernels."""
        return np.ascontiguousarray(np.hstack((self.y_v, self.y_g, self.y_a, self.y_m)))


def synth_measurements(s: TrueState, m: ArrayLike = M_FIELD, g0: float = G0) -> ImuSample:
    """Ideal sensor outputs for one true state."""
    m = np.asarray(m, dtype=float)
    y_a = np.cross(s.omega, s.v) + s.vdot + g0 * (s.R.T @ E_Z)
    return ImuSample(s.t, s.v.copy(), s.omega.copy(), y_a, s.R.T @ m)


def synth_series(traj: Trajectory, m: ArrayLike = M_FIELD, g0: float = G0) -> ImuSeries:
    """Vectorized :func:`synth_measurements` over a trajectory."""
    m = np.asarray(m, dtype=float)
    y_a = np.cross(traj.omega, traj.v) + traj.vdot + g0 * traj.tilt
    return ImuSeries(traj.t.copy(), traj.v.copy(), traj.omega.copy(), y_a, traj.field(m))


# -- noise --------------------------------------------------------------------

CHANNELS = ("y_a", "y_g", "y_m", "y_v")


@dataclass(frozen=True)
class ChannelNoise:
    std: float = 0.0
    bias: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self) -> None:
        if not self.std >= 0:
            raise ValueError("noise std must be non-negative")


@dataclass(frozen=True)
class NoiseSpec:
    """Per-channel white Gaussian noise plus constant bias."""

    y_a: ChannelNoise = ChannelNoise()
    y_g: ChannelNoise = ChannelNoise()
    y_m: ChannelNoise = ChannelNoise()
    y_v: ChannelNoise = ChannelNoise()
    seed: int = 0

    @classmethod
    def benchmark(cls, seed: int = 0) -> "NoiseSpec":
        """Accelerometer 0.31, gyro 0.1, magnetometer 0.71 + 0.2 bias, velocity 0.31."""
        return cls(
            y_a=ChannelNoise(0.31),
            y_g=ChannelNoise(0.1),
            y_m=ChannelNoise(0.71, (0.2, 0.2, 0.2)),
            y_v=ChannelNoise(0.31),
            seed=seed,
        )

    def with_seed(self, seed: int) -> "NoiseSpec":
        return replace(self, seed=seed)


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based Philox stream; identical draws on every platform."""
    return np.random.Generator(np.random.Philox(seed))


def add_noise(sample: ImuSample, spec: NoiseSpec, rng: np.random.Generator) -> ImuSample:
    """Corrupt one sample. Channels are drawn in the fixed order a, g, m, v."""
    vals = {}
    for ch in CHANNELS:
        c: ChannelNoise = getattr(spec, ch)
        vals[ch] = getattr(sample, ch) + c.std * rng.standard_normal(3) + np.asarray(c.bias)
    return ImuSample(sample.t, vals["y_v"], vals["y_g"], vals["y_a"], vals["y_m"])


def add_noise_series(series: ImuSeries, spec: NoiseSpec, rng: np.random.Generator | None = None) -> ImuSeries:
    """Corrupt a whole stream; same draw order as repeated :func:`add_noise`."""
    if rng is None:
        rng = make_rng(spec.seed)
    n = len(series)
    z = rng.standard_normal((n, len(CHANNELS), 3))
    vals = {}
    for j, ch in enumerate(CHANNELS):
        c: ChannelNoise = getattr(spec, ch)
        vals[ch] = getattr(series, ch) + c.std * z[:, j, :] + np.asarray(c.bias)
    return ImuSeries(series.t.copy(), vals["y_v"], vals["y_g"], vals["y_a"], vals["y_m"])


def unit_field_check(series: ImuSeries) -> float:
    """Largest deviation of ``|y_m|`` from one (zero for noise-free streams)."""
    return float(np.max(np.abs(np.linalg.norm(series.y_m, axis=1) - 1.0)))


__all__ = [
    "G0",
    "M_FIELD",
    "TrajectorySpec",
    "TrueState",
    "Trajectory",
    "gen_trajectory",
    "ImuSample",
    "ImuSeries",
    "synth_measurements",
    "synth_series",
    "ChannelNoise",
    "NoiseSpec",
    "make_rng",
    "add_noise",
    "add_noise_series",
]

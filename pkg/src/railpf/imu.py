"""IMU preprocessing: gravity compensation, bias handling and stand-still detection.

Per sample the order is fixed: stand-still check on the raw window,
gravity removal using the map orientation, bias estimate update (only
while standing still), bias subtraction. Only the three channels the
filters consume (a_x, a_y, omega_z) carry a bias estimate.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .exceptions import WindowTooShort
from .geometry import Orientation, rotation_matrix

G = 9.81
BIAS_AXES = ("a_x", "a_y", "omega_z")
DEFAULT_BIAS_WINDOW = 1000
# A handful of stand-still readings average to something noisier than the
# bias itself; below this count the estimate stays at zero.
DEFAULT_BIAS_MIN_SAMPLES = 50


@dataclass(frozen=True)
class ImuSample:
    t: float
    a: np.ndarray
    omega: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "a", np.asarray(self.a, dtype=float).reshape(3))
        object.__setattr__(self, "omega", np.asarray(self.omega, dtype=float).reshape(3))


@dataclass(frozen=True)
class ImuLog:
    """Column-oriented IMU stream: ``acc`` and ``gyro`` are (n, 3)."""

    t: np.ndarray
    acc: np.ndarray
    gyro: np.ndarray

    def __len__(self):
        return len(self.t)

    def __getitem__(self, k) -> ImuSample:
        return ImuSample(float(self.t[k]), self.acc[k], self.gyro[k])

    def __iter__(self):
        for k in range(len(self)):
            yield self[k]


@dataclass(frozen=True)
class ZvuConfig:
    window: int = 10
    accel_var_threshold: float = 0.01
    rate_threshold: float = 0.005

    def __post_init__(self):
        if self.window < 2 or self.accel_var_threshold <= 0 or self.rate_threshold <= 0:
            raise ValueError("ZVU window must be >= 2 and thresholds positive")

    @classmethod
    def for_rate(cls, hz: float, seconds: float = 1.0, **kw):
        return cls(window=max(2, int(round(hz * seconds))), **kw)


def compensate_gravity(sample: ImuSample, o: Orientation, g: float = G) -> np.ndarray:
    """Remove gravity from a raw specific-force reading.

    a = a_raw - R(o)^T [0, 0, g]
    """
    return sample.a - rotation_matrix(o).T @ np.array([0.0, 0.0, g])


def detect_standstill(window, cfg: ZvuConfig) -> bool:
    """Combined acceleration-variance and angular-rate stand-still test.

    ``window`` is a sequence of :class:`ImuSample`; the last
    ``cfg.window`` samples are used.
    """
    if len(window) < cfg.window:
        raise WindowTooShort(f"need {cfg.window} samples, got {len(window)}")
    samples = list(window)[-cfg.window :]
    acc = np.array([s.a for s in samples])
    gyro = np.array([s.omega for s in samples])
    return _standstill(acc, gyro, cfg)


def _standstill(acc, gyro, cfg):
    var_a = np.var(np.linalg.norm(acc, axis=1), ddof=1)
    mean_w = np.mean(np.linalg.norm(gyro, axis=1))
    return bool(var_a < cfg.accel_var_threshold and mean_w < cfg.rate_threshold)


@dataclass
class BiasState:
    """Moving-average bias estimates for a_x, a_y and omega_z.

    Each axis keeps a ring buffer of the last ``n`` accepted stand-still
    readings; the estimate is the buffer mean, or 0 while the buffer holds
    fewer than ``min_samples`` readings.
    """

    n: int = DEFAULT_BIAS_WINDOW
    min_samples: int = 1
    buffers: dict = field(default_factory=dict)
    _sums: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("bias window length must be >= 1")
        if not 1 <= self.min_samples <= self.n:
            raise ValueError("min_samples must lie in [1, n]")
        for ax in BIAS_AXES:
            buf = self.buffers.setdefault(ax, deque(maxlen=self.n))
            self._sums[ax] = float(sum(buf))

    def push(self, axis: str, value: float):
        buf = self.buffers[axis]
        if len(buf) == buf.maxlen:
            self._sums[axis] -= buf[0]
        buf.append(value)
        self._sums[axis] += value

    def estimate(self, axis: str) -> float:
        buf = self.buffers[axis]
        return self._sums[axis] / len(buf) if len(buf) >= self.min_samples else 0.0

    @property
    def B(self) -> dict:
        return {ax: self.estimate(ax) for ax in BIAS_AXES}

    def count(self, axis: str) -> int:
        return len(self.buffers[axis])


def update_bias(state: BiasState, axis: str, value: float) -> BiasState:
    """Push a stand-still reading into ``axis``'s buffer (in place)."""
    state.push(axis, float(value))
    return state


def apply_bias(state: BiasState, values: dict) -> dict:
    """Subtract the current estimate from each biased channel in ``values``."""
    return {k: v - state.estimate(k) if k in BIAS_AXES else v for k, v in values.items()}


@dataclass(frozen=True)
class ProcessedImu:
    t: float
    a_x: float
    a_y: float
    omega_z: float
    standstill: bool
    compensated: np.ndarray
    bias: dict


class ImuPreprocessor:
    """Stateful per-session IMU pipeline.

    Stand-still readings enter the bias buffers with a lag of one ZVU
    window, and only once the stand-still has lasted that long, so the
    samples at the edge of motion that can still pass the detector never
    contaminate the estimate.
    """

    def __init__(self, zvu: ZvuConfig | None = None, bias_window: int = DEFAULT_BIAS_WINDOW,
                 g: float = G, bias: BiasState | None = None,
                 bias_min_samples: int = DEFAULT_BIAS_MIN_SAMPLES):
        self.zvu = zvu or ZvuConfig()
        self.g = g
        if bias is None:
            bias = BiasState(bias_window, min_samples=min(bias_min_samples, bias_window))
        self.bias = bias
        self._raw_acc = deque(maxlen=self.zvu.window)
        self._raw_gyro = deque(maxlen=self.zvu.window)
        self._history = deque(maxlen=self.zvu.window + 1)
        self._still_run = 0

    def process(self, sample: ImuSample, o: Orientation) -> ProcessedImu:
        self._raw_acc.append(sample.a)
        self._raw_gyro.append(sample.omega)
        still = False
        if len(self._raw_acc) == self.zvu.window:
            still = _standstill(np.array(self._raw_acc), np.array(self._raw_gyro), self.zvu)

        comp = compensate_gravity(sample, o, self.g)
        raw = {"a_x": comp[0], "a_y": comp[1], "omega_z": sample.omega[2]}
        self._history.append(raw)
        self._still_run = self._still_run + 1 if still else 0
        if self._still_run > self.zvu.window:
            lagged = self._history[0]
            for ax in BIAS_AXES:
                update_bias(self.bias, ax, lagged[ax])

        corrected = apply_bias(self.bias, raw)
        if still:
            corrected = {ax: 0.0 for ax in BIAS_AXES}
        return ProcessedImu(
            t=sample.t,
            a_x=float(corrected["a_x"]),
            a_y=float(corrected["a_y"]),
            omega_z=float(corrected["omega_z"]),
            standstill=still,
            compensated=comp,
            bias=self.bias.B,
        )

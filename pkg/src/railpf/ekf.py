"""Extended Kalman filter baseline with map matching.

The state is planar position, heading and speed. A constant turn rate
and acceleration (CTRA) model driven by the bias-corrected a_x and
omega_z propagates it; GNSS fixes update position and speed, and an
across-track pseudo-measurement pulls the estimate onto the mapped
centerline.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, replace

import numpy as np

from .exceptions import NoNearbyTrack, PriorOutsideMap
from .gnss import GnssSample, align_to_steps, gnss_sigmas
from .imu import DEFAULT_BIAS_MIN_SAMPLES, DEFAULT_BIAS_WINDOW, G, ImuPreprocessor, ImuSample, ZvuConfig
from .track_map import TrackMap, orientation_at
from .pf import DEG

# Below this |w T| the closed-form arc integrals cancel badly; use the series.
SERIES_LIMIT = 0.1
SERIES_TERMS = 12
_PSD_TOL = 1e-9


@dataclass(frozen=True)
class EkfConfig:
    """EKF parameters; sensor defaults are the tighter EKF noise levels."""

    T: float = 0.1
    sigma_ax: float = 0.005 * G
    sigma_wz: float = 0.05 * DEG
    sigma_px: float = 2.04
    sigma_py: float = 3.45
    sigma_v: float = 0.35
    sigma_map: float = 0.01
    map_gate: float = 50.0
    # "always" matches every step, "gnss" only on steps with a fix, "off" never.
    map_match: str = "always"
    sigma_zvu: float = 0.01
    sigma_heading0: float = 1.0 * DEG
    gnss_sigma: str = "fix"
    g: float = G
    zvu_window: int = 10
    zvu_accel_var: float = 0.01
    zvu_rate: float = 0.005
    bias_window: int = DEFAULT_BIAS_WINDOW
    bias_min_samples: int = DEFAULT_BIAS_MIN_SAMPLES

    def __post_init__(self):
        sig = (self.sigma_ax, self.sigma_wz, self.sigma_px, self.sigma_py, self.sigma_v,
               self.sigma_map, self.sigma_zvu, self.sigma_heading0)
        if min(sig) <= 0 or self.T <= 0 or self.map_gate <= 0:
            raise ValueError("all sigmas, T and map_gate must be positive")
        if self.map_match not in ("always", "gnss", "off"):
            raise ValueError("map_match must be 'always', 'gnss' or 'off'")
        if self.gnss_sigma not in ("fix", "config"):
            raise ValueError("gnss_sigma must be 'fix' or 'config'")

    def zvu(self) -> ZvuConfig:
        return ZvuConfig(self.zvu_window, self.zvu_accel_var, self.zvu_rate)


@dataclass(frozen=True)
class EkfState:
    """x = (p_x, p_y, theta_z, v) with covariance P."""

    x: np.ndarray
    P: np.ndarray
    # Outcome of the last map-matching attempt: None if not attempted.
    map_matched: bool | None = None

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float).reshape(4)
        P = np.asarray(self.P, dtype=float).reshape(4, 4)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "P", P)

    @property
    def p_x(self):
        return float(self.x[0])

    @property
    def p_y(self):
        return float(self.x[1])

    @property
    def theta(self):
        return float(self.x[2])

    @property
    def v(self):
        return float(self.x[3])


def _symmetrize(P):
    P = 0.5 * (P + P.T)
    w, V = np.linalg.eigh(P)
    if w.min() < -_PSD_TOL * max(1.0, abs(w.max())):
        raise np.linalg.LinAlgError(f"covariance lost positive semi-definiteness (min eig {w.min():.3g})")
    if w.min() < 0:
        P = (V * np.maximum(w, 0.0)) @ V.T
        P = 0.5 * (P + P.T)
    return P


def _moments(w, T, m_max=2):
    """I_m = integral over [0, T] of t^m exp(i w t) dt for m = 0..m_max.

    A power series in w*T covers small turn rates, including w = 0; the
    closed form takes over once it no longer cancels catastrophically.
    """
    x = w * T
    if abs(x) < SERIES_LIMIT:
        out = []
        for m in range(m_max + 1):
            term, total = 1.0 + 0j, 0j
            for n in range(SERIES_TERMS):
                total += term / (n + m + 1)
                term *= 1j * x / (n + 1)
            out.append(total * T ** (m + 1))
        return out
    e = cmath.exp(1j * x)
    iw = 1j * w
    out = [(e - 1.0) / iw]
    for m in range(1, m_max + 1):
        out.append((T**m * e - m * out[-1]) / iw)
    return out


def ctra_displacement(theta, v, a, w, T):
    """Planar displacement over T for heading theta, speed v, accel a and rate w.

    The displacement is the integral of (v + a t) exp(i (theta + w t)).
    """
    i0, i1, _ = _moments(w, T)
    z = cmath.exp(1j * theta) * (v * i0 + a * i1)
    return z.real, z.imag


def ctra_step(x, a, w, T):
    th, v = x[2], x[3]
    dx, dy = ctra_displacement(th, v, a, w, T)
    return np.array([x[0] + dx, x[1] + dy, th + w * T, v + a * T])


def ctra_jacobian(x, a, w, T):
    """d f / d x for the CTRA transition."""
    th, v = x[2], x[3]
    i0, i1, _ = _moments(w, T)
    rot = cmath.exp(1j * th)
    z = rot * (v * i0 + a * i1)
    dv = rot * i0
    F = np.eye(4)
    # Displacement is a rotation of a heading-free vector, so d/dtheta is a quarter turn.
    F[0, 2], F[1, 2] = -z.imag, z.real
    F[0, 3], F[1, 3] = dv.real, dv.imag
    return F


def ctra_input_jacobian(x, a, w, T):
    """d f / d (a, w) for the CTRA transition."""
    th, v = x[2], x[3]
    i0, i1, i2 = _moments(w, T)
    rot = cmath.exp(1j * th)
    da = rot * i1
    dw = rot * 1j * (v * i1 + a * i2)
    return np.array([[da.real, dw.real],
                     [da.imag, dw.imag],
                     [0.0, T],
                     [T, 0.0]])


def ekf_predict(state: EkfState, a_x: float, omega_z: float, T: float, cfg: EkfConfig) -> EkfState:
    """CTRA time update; input noise maps into the state through dF/du."""
    if not all(map(math.isfinite, (a_x, omega_z, T))):
        raise ValueError("non-finite EKF input")
    x = state.x
    F = ctra_jacobian(x, a_x, omega_z, T)
    Gu = ctra_input_jacobian(x, a_x, omega_z, T)
    Q = Gu @ np.diag([cfg.sigma_ax**2, cfg.sigma_wz**2]) @ Gu.T
    P = F @ state.P @ F.T + Q
    return EkfState(ctra_step(x, a_x, omega_z, T), _symmetrize(P))


def _update(state: EkfState, H, innov, R) -> EkfState:
    """Joseph-form linear update."""
    P = state.P
    S = H @ P @ H.T + R
    K = np.linalg.solve(S.T, (P @ H.T).T).T
    x = state.x + K @ innov
    I_KH = np.eye(4) - K @ H
    P = I_KH @ P @ I_KH.T + K @ R @ K.T
    return replace(state, x=x, P=_symmetrize(P))


def ekf_update_gnss(state: EkfState, gnss: GnssSample, cfg: EkfConfig | None = None) -> EkfState:
    """Linear update with the fix's position and speed.

    Components with a non-finite sigma carry no information and are
    dropped.
    """
    cfg = cfg or EkfConfig()
    sig = np.array(gnss_sigmas(gnss, (cfg.sigma_px, cfg.sigma_py, cfg.sigma_v), cfg.gnss_sigma), float)
    z = np.array([gnss.p_x, gnss.p_y, gnss.v])
    rows = np.array([0, 1, 3])
    keep = np.isfinite(sig)
    if not keep.any():
        return state
    H = np.zeros((3, 4))
    H[np.arange(3), rows] = 1.0
    H, z, sig = H[keep], z[keep], sig[keep]
    return _update(state, H, z - H @ state.x, np.diag(sig**2))


def across_track(track: TrackMap, x: float, y: float, gate: float):
    """(d, offset, heading) of the nearest track point; NoNearbyTrack beyond ``gate``."""
    d, off, heading = track.project(x, y)
    if abs(off) > gate:
        raise NoNearbyTrack(f"nearest track {abs(off):.1f} m away exceeds gate {gate} m")
    return d, off, heading


def ekf_map_match(state: EkfState, track: TrackMap, sigma_map: float = 0.01,
                  gate: float = 50.0) -> EkfState:
    """Observe "across-track offset = 0" with noise ``sigma_map``.

    Beyond the gate the state is returned unchanged with
    ``map_matched=False``.
    """
    try:
        _, off, heading = across_track(track, state.p_x, state.p_y, gate)
    except NoNearbyTrack:
        return replace(state, map_matched=False)
    n = np.array([-math.sin(heading), math.cos(heading)])
    H = np.array([[n[0], n[1], 0.0, 0.0]])
    out = _update(state, H, np.array([-off]), np.array([[sigma_map**2]]))
    return replace(out, map_matched=True)


def ekf_zero_velocity(state: EkfState, sigma: float) -> EkfState:
    """Pseudo-measurement v = 0 during a detected stand-still."""
    H = np.array([[0.0, 0.0, 0.0, 1.0]])
    return _update(state, H, np.array([-state.v]), np.array([[sigma**2]]))


@dataclass(frozen=True)
class EkfEstimate:
    t: float
    p_x: float
    p_y: float
    d: float
    v: float
    sigma_d: float
    trace_P: float
    zvu: bool
    map_matched: bool | None = None


def ekf_init_from_gnss(fix: GnssSample, track: TrackMap, cfg: EkfConfig) -> EkfState:
    d, _, heading = track.project(fix.p_x, fix.p_y)
    yaw = orientation_at(track, d).yaw
    spx, spy, sv = gnss_sigmas(fix, (cfg.sigma_px, cfg.sigma_py, cfg.sigma_v), cfg.gnss_sigma)
    x = np.array([fix.p_x, fix.p_y, yaw, fix.v])
    P = np.diag([spx**2, spy**2, cfg.sigma_heading0**2, sv**2])
    return EkfState(x, P)


class ExtendedKalmanFilter:
    """One EKF session over a time-ordered IMU stream."""

    def __init__(self, track: TrackMap, cfg: EkfConfig | None = None):
        self.track = track
        self.cfg = cfg or EkfConfig()
        self.imu = ImuPreprocessor(self.cfg.zvu(), self.cfg.bias_window, self.cfg.g,
                                   bias_min_samples=self.cfg.bias_min_samples)
        self.state: EkfState | None = None
        self._stepped = False

    def initialize(self, state: EkfState):
        self.state = state
        self._stepped = False

    def _along(self, x, y):
        d, _, heading = self.track.project(x, y)
        return d, heading

    def step(self, sample: ImuSample, gnss: GnssSample | None = None) -> EkfEstimate:
        if self.state is None:
            raise RuntimeError("initialize() must be called before step()")
        cfg = self.cfg
        st = self.state
        d_prev, _ = self._along(st.p_x, st.p_y)
        proc = self.imu.process(sample, orientation_at(self.track, d_prev))
        if self._stepped:
            st = ekf_predict(st, proc.a_x, proc.omega_z, cfg.T, cfg)
        self._stepped = True
        if proc.standstill:
            st = ekf_zero_velocity(st, cfg.sigma_zvu)
        if gnss is not None:
            st = ekf_update_gnss(st, gnss, cfg)
        if cfg.map_match == "always" or (cfg.map_match == "gnss" and gnss is not None):
            st = ekf_map_match(st, self.track, cfg.sigma_map, cfg.map_gate)
        else:
            st = replace(st, map_matched=None)
        if proc.standstill:
            st = replace(st, x=np.array([st.x[0], st.x[1], st.x[2], 0.0]))
        self.state = st

        d, heading = self._along(st.p_x, st.p_y)
        t_hat = np.array([math.cos(heading), math.sin(heading)])
        var_d = float(t_hat @ st.P[:2, :2] @ t_hat)
        return EkfEstimate(
            t=sample.t, p_x=st.p_x, p_y=st.p_y, d=d, v=st.v,
            sigma_d=math.sqrt(max(var_d, 0.0)), trace_P=float(np.trace(st.P)),
            zvu=proc.standstill, map_matched=st.map_matched,
        )


def run_ekf(track: TrackMap, imu_log, fixes, cfg: EkfConfig | None = None,
            init: EkfState | None = None):
    """Run a full session; one :class:`EkfEstimate` per IMU sample."""
    cfg = cfg or EkfConfig()
    ekf = ExtendedKalmanFilter(track, cfg)
    per_step = align_to_steps(imu_log.t, fixes)
    if init is None:
        if per_step and per_step[0] is not None:
            init = ekf_init_from_gnss(per_step[0], track, cfg)
        else:
            raise PriorOutsideMap("no initial state given and no GNSS fix at the first IMU sample")
    ekf.initialize(init)
    return [ekf.step(imu_log[k], per_step[k]) for k in range(len(imu_log))]

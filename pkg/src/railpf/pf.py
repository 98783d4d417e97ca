"""Map-constrained particle filter on a one-dimensional track state.

Each particle is (d, v): distance along the track and speed. Particles
move with a constant-acceleration model driven by the bias-corrected
tangential acceleration. The track map turns each particle into
predicted measurements (position, speed, yaw rate v*kappa and lateral
acceleration v^2*kappa) which weight it against the IMU and, when
available, GNSS.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .exceptions import AllWeightsZero, DegenerateSet, FilterDivergence, PriorOutsideMap
from .gnss import GnssSample, align_to_steps, gnss_sigmas
from .imu import DEFAULT_BIAS_MIN_SAMPLES, DEFAULT_BIAS_WINDOW, G, ImuPreprocessor, ImuSample, ZvuConfig
from .track_map import KAPPA, PX, PY, YAW, TrackMap, lookup, orientation_at

DEG = math.pi / 180.0


@dataclass(frozen=True)
class FilterConfig:
    """Particle filter parameters; sensor defaults are the particle-filter noise levels."""

    n_particles: int = 1000
    n_threshold: float | None = None
    T: float = 0.1
    sigma_u: float | None = None
    sigma_ax: float = 0.01 * G
    sigma_ay: float = 0.01 * G
    sigma_wz: float = 0.2 * DEG
    sigma_px: float = 2.45
    sigma_py: float = 4.13
    sigma_v: float = 0.4
    sigma_bias: float = 5e-6
    g: float = G
    curve_resample: bool = False
    curve_threshold: float = 1.0 / 2000.0
    estimator: str = "mean"
    # "fix" uses each receiver-reported sigma, "config" the fixed values above.
    gnss_sigma: str = "fix"
    zvu_window: int = 10
    zvu_accel_var: float = 0.01
    zvu_rate: float = 0.005
    bias_window: int = DEFAULT_BIAS_WINDOW
    bias_min_samples: int = DEFAULT_BIAS_MIN_SAMPLES

    def __post_init__(self):
        if self.n_particles < 1:
            raise ValueError("n_particles must be >= 1")
        if not 1 <= self.threshold <= self.n_particles:
            raise ValueError("n_threshold must lie in [1, n_particles]")
        sigmas = (self.sigma_ax, self.sigma_ay, self.sigma_wz, self.sigma_px,
                  self.sigma_py, self.sigma_v, self.process_sigma)
        if min(sigmas) <= 0 or self.T <= 0:
            raise ValueError("all sigmas and T must be positive")
        if self.estimator not in ("mean", "max-weight"):
            raise ValueError("estimator must be 'mean' or 'max-weight'")
        if self.gnss_sigma not in ("fix", "config"):
            raise ValueError("gnss_sigma must be 'fix' or 'config'")

    @property
    def threshold(self) -> float:
        return self.n_particles / 2 if self.n_threshold is None else self.n_threshold

    @property
    def process_sigma(self) -> float:
        # Bias instability adds to the input noise; at 5e-6 m/s^2 it is cosmetic.
        base = self.sigma_ax if self.sigma_u is None else self.sigma_u
        return math.hypot(base, self.sigma_bias)

    def zvu(self) -> ZvuConfig:
        return ZvuConfig(self.zvu_window, self.zvu_accel_var, self.zvu_rate)


@dataclass(frozen=True)
class ParticleSet:
    d: np.ndarray
    v: np.ndarray
    w: np.ndarray
    rng: np.random.Generator = field(repr=False, compare=False)

    def __len__(self):
        return len(self.d)


@dataclass(frozen=True)
class Measurement:
    omega_z: float
    a_y: float
    gnss: GnssSample | None = None


@dataclass(frozen=True)
class Prior:
    """Gaussian prior on (d, v), or uniform when ``d_range`` is set."""

    d_mean: float = 0.0
    d_sigma: float = 0.0
    v_mean: float = 0.0
    v_sigma: float = 0.0
    d_range: tuple | None = None
    v_range: tuple | None = None


@dataclass(frozen=True)
class PositionEstimate:
    p_x: float
    p_y: float
    d: float
    v: float
    sigma_d: float
    # 3-sigma interval end points along the local tangent, in the plane.
    interval: tuple = ()


def initialize(cfg: FilterConfig, prior: Prior, track: TrackMap, rng=None) -> ParticleSet:
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    n = cfg.n_particles
    if prior.d_range is not None:
        lo, hi = prior.d_range
        if hi < track.d_min or lo > track.d_max or hi < lo:
            raise PriorOutsideMap(f"prior range [{lo}, {hi}] misses map [{track.d_min}, {track.d_max}]")
        d = rng.uniform(lo, hi, n)
    else:
        reach = 3.0 * prior.d_sigma
        if prior.d_mean + reach < track.d_min or prior.d_mean - reach > track.d_max:
            raise PriorOutsideMap(f"prior mean {prior.d_mean} is off the map")
        d = prior.d_mean + prior.d_sigma * rng.standard_normal(n)
    if prior.v_range is not None:
        v = rng.uniform(*prior.v_range, n)
    else:
        v = prior.v_mean + prior.v_sigma * rng.standard_normal(n)
    return ParticleSet(d, v, np.full(n, 1.0 / n), rng)


def predict(ps: ParticleSet, u: float, cfg: FilterConfig, noise: bool = True) -> ParticleSet:
    """Constant-acceleration diffusion; the input noise enters through [T^2/2, T]."""
    T = cfg.T
    acc = np.full(len(ps), float(u))
    if noise:
        acc = acc + cfg.process_sigma * ps.rng.standard_normal(len(ps))
    d = ps.d + T * ps.v + 0.5 * T * T * acc
    v = ps.v + T * acc
    return replace(ps, d=d, v=v)


def predict_measurement(d, v, track: TrackMap, with_position: bool = True):
    """Predicted [p_x, p_y, v, v*kappa, v^2*kappa] per state.

    Returns ``(zhat, valid)``; ``zhat`` has shape (n, 5) and ``valid``
    is False for states off the map.
    """
    d = np.atleast_1d(np.asarray(d, dtype=float))
    v = np.broadcast_to(np.asarray(v, dtype=float), d.shape)
    cols = [PX, PY, KAPPA] if with_position else [KAPPA]
    vals, valid = track.interp(d, cols)
    kappa = vals[:, -1]
    zhat = np.empty((len(d), 5))
    if with_position:
        zhat[:, 0] = vals[:, 0]
        zhat[:, 1] = vals[:, 1]
    else:
        zhat[:, :2] = np.nan
    zhat[:, 2] = v
    zhat[:, 3] = v * kappa
    zhat[:, 4] = v * v * kappa
    return zhat, valid


def log_likelihood(ps: ParticleSet, z: Measurement, track: TrackMap, cfg: FilterConfig):
    gnss = z.gnss
    zhat, valid = predict_measurement(ps.d, ps.v, track, with_position=gnss is not None)
    ll = -0.5 * (((z.omega_z - zhat[:, 3]) / cfg.sigma_wz) ** 2
                 + ((z.a_y - zhat[:, 4]) / cfg.sigma_ay) ** 2)
    if gnss is not None:
        spx, spy, sv = gnss_sigmas(gnss, (cfg.sigma_px, cfg.sigma_py, cfg.sigma_v), cfg.gnss_sigma)
        ll -= 0.5 * (((gnss.p_x - zhat[:, 0]) / spx) ** 2
                     + ((gnss.p_y - zhat[:, 1]) / spy) ** 2
                     + ((gnss.v - zhat[:, 2]) / sv) ** 2)
    return np.where(valid, ll, -np.inf)


def weight(ps: ParticleSet, z: Measurement, track: TrackMap, cfg: FilterConfig) -> ParticleSet:
    """Multiply weights by the Gaussian likelihood and normalize.

    Off-map particles get zero weight. Raises :class:`AllWeightsZero`
    when nothing survives.
    """
    with np.errstate(divide="ignore"):
        logw = np.log(ps.w) + log_likelihood(ps, z, track, cfg)
    top = np.max(logw)
    if not np.isfinite(top):
        raise AllWeightsZero("all particle weights are zero")
    w = np.exp(logw - top)
    return replace(ps, w=w / w.sum())


def effective_sample_size(w) -> float:
    w = np.asarray(w, dtype=float)
    return float(1.0 / np.sum(w * w))


def systematic_indices(w, u0: float) -> np.ndarray:
    n = len(w)
    positions = (u0 + np.arange(n)) / n
    idx = np.searchsorted(np.cumsum(w), positions, side="right")
    return np.minimum(idx, n - 1)


def resample(ps: ParticleSet, cfg: FilterConfig | None = None) -> ParticleSet:
    """Systematic resampling: one uniform offset, N evenly spaced strata."""
    idx = systematic_indices(ps.w, ps.rng.uniform())
    n = len(ps)
    return replace(ps, d=ps.d[idx], v=ps.v[idx], w=np.full(n, 1.0 / n))


def estimate(ps: ParticleSet, track: TrackMap, cfg: FilterConfig) -> PositionEstimate:
    w = ps.w
    total = w.sum()
    if not np.isfinite(total) or abs(total - 1.0) > 1e-9 or len(ps) == 0:
        raise DegenerateSet("weights are not normalized")
    if cfg.estimator == "max-weight":
        j = int(np.argmax(w))
        d_hat, v_hat = float(ps.d[j]), float(ps.v[j])
    else:
        d_hat, v_hat = float(w @ ps.d), float(w @ ps.v)
    sigma_d = float(np.sqrt(max(w @ (ps.d - d_hat) ** 2, 0.0)))
    d_hat = min(max(d_hat, track.d_min), track.d_max)
    vals, _ = track.interp(d_hat, [PX, PY, YAW])
    px, py, yaw = vals[0]
    along = 3.0 * sigma_d * np.array([math.cos(yaw), math.sin(yaw)])
    interval = (tuple(np.array([px, py]) - along), tuple(np.array([px, py]) + along))
    return PositionEstimate(float(px), float(py), d_hat, v_hat, sigma_d, interval)


@dataclass(frozen=True)
class StepResult:
    t: float
    estimate: PositionEstimate
    n_eff: float
    resampled: bool
    zvu: bool
    reinitialized: bool = False


def prior_from_gnss(fix: GnssSample, track: TrackMap) -> Prior:
    d, _, _ = track.project(fix.p_x, fix.p_y)
    return Prior(d_mean=d, d_sigma=max(fix.sigma_px, fix.sigma_py),
                 v_mean=fix.v, v_sigma=fix.sigma_v)


class ParticleFilter:
    """One filtering session over a time-ordered IMU stream."""

    def __init__(self, track: TrackMap, cfg: FilterConfig | None = None, seed=None):
        self.track = track
        self.cfg = cfg or FilterConfig()
        self.rng = np.random.default_rng(seed)
        self.imu = ImuPreprocessor(self.cfg.zvu(), self.cfg.bias_window, self.cfg.g,
                                   bias_min_samples=self.cfg.bias_min_samples)
        self.particles: ParticleSet | None = None
        self.last: PositionEstimate | None = None
        self._stepped = False
        self._on_curve = False

    def initialize(self, prior: Prior):
        self.particles = initialize(self.cfg, prior, self.track, self.rng)
        self.last = None
        self._stepped = False
        return self.particles

    def _prev_d(self):
        if self.last is not None:
            return self.last.d
        ps = self.particles
        return float(np.clip(ps.w @ ps.d, self.track.d_min, self.track.d_max))

    def step(self, sample: ImuSample, gnss: GnssSample | None = None) -> StepResult:
        if self.particles is None:
            raise RuntimeError("initialize() must be called before step()")
        cfg = self.cfg
        proc = self.imu.process(sample, orientation_at(self.track, self._prev_d()))
        ps = self.particles
        if proc.standstill:
            ps = replace(ps, v=np.zeros(len(ps)))
        elif self._stepped:
            ps = predict(ps, proc.a_x, cfg)
        self._stepped = True

        z = Measurement(proc.omega_z, proc.a_y, gnss)
        reinit = False
        try:
            ps = weight(ps, z, self.track, cfg)
        except AllWeightsZero:
            if gnss is None:
                raise FilterDivergence(
                    f"all particle weights vanished at t={sample.t} with no GNSS fix to recover from"
                ) from None
            ps = initialize(cfg, prior_from_gnss(gnss, self.track), self.track, self.rng)
            reinit = True

        n_eff = effective_sample_size(ps.w)
        est = estimate(ps, self.track, cfg)
        do_resample = n_eff < cfg.threshold
        if cfg.curve_resample:
            on_curve = abs(lookup(self.track, est.d).kappa) > cfg.curve_threshold
            do_resample |= on_curve and not self._on_curve
            self._on_curve = on_curve
        if do_resample:
            ps = resample(ps, cfg)
        if proc.standstill:
            est = replace(est, v=0.0)
        self.particles = ps
        self.last = est
        return StepResult(sample.t, est, n_eff, bool(do_resample), proc.standstill, reinit)


def gnss_map_residuals(track: TrackMap, fixes, d_hat=None) -> dict:
    """Mean disagreement between GNSS fixes and the map.

    ``across_offset`` is the mean signed distance of each fix from the
    track centreline. With ``d_hat`` (one estimate per fix), ``along`` and
    ``across`` are the mean fix-minus-map residuals at the estimate, in
    the local track frame. A persistent nonzero mean hints at a datum
    offset between receiver and map; it is reported, not corrected.
    """
    fixes = list(fixes)
    out = {"n_fixes": len(fixes)}
    if not fixes:
        return out
    out["across_offset"] = float(np.mean([track.project(f.p_x, f.p_y)[1] for f in fixes]))
    if d_hat is not None:
        vals, _ = track.interp(np.clip(np.asarray(d_hat, float), track.d_min, track.d_max), [PX, PY, YAW])
        ex = np.array([f.p_x for f in fixes]) - vals[:, 0]
        ey = np.array([f.p_y for f in fixes]) - vals[:, 1]
        c, s = np.cos(vals[:, 2]), np.sin(vals[:, 2])
        out["along"] = float(np.mean(ex * c + ey * s))
        out["across"] = float(np.mean(-ex * s + ey * c))
    return out


def run_particle_filter(track: TrackMap, imu_log, fixes, cfg: FilterConfig | None = None,
                        seed=None, prior: Prior | None = None):
    """Run a full session; returns one :class:`StepResult` per IMU sample.

    Without an explicit prior the filter starts from the first GNSS fix
    that arrives with the first IMU sample.
    """
    pf = ParticleFilter(track, cfg, seed)
    per_step = align_to_steps(imu_log.t, fixes)
    if prior is None:
        if per_step and per_step[0] is not None:
            prior = prior_from_gnss(per_step[0], track)
        else:
            raise PriorOutsideMap("no prior given and no GNSS fix at the first IMU sample")
    pf.initialize(prior)
    return [pf.step(imu_log[k], per_step[k]) for k in range(len(imu_log))]

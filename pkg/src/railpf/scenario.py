"""Synthetic tracks, trips and sensor streams for desk-scale outage experiments.

A scenario is fully determined by a :class:`ScenarioSpec` and a seed.
Tracks are chains of straights, circular arcs and clothoid transitions;
trips are station-to-station legs with constant acceleration and
braking. Ground truth lies on the generated track map, and the noise-free
IMU channels satisfy omega_z = v*kappa and a_y = v^2*kappa against the
map curvature.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .exceptions import InvalidSpec, ProfileMismatch
from .geometry import rotation_matrix
from .gnss import GnssSample
from .imu import G, ImuLog
from .pf import DEG
from .track_map import KAPPA, PITCH, PX, PY, ROLL, YAW, TrackMap, build_map

SEGMENT_KINDS = ("straight", "arc", "clothoid")
# Speeds below this count as standing still for the vibration model.
ROLLING_SPEED = 1e-3


@dataclass(frozen=True)
class Segment:
    kind: str
    length: float
    radius: float | None = None
    turn: int = 1
    grade: float = 0.0


@dataclass(frozen=True)
class TrackSpec:
    """Ordered segment chain; ``turn`` is +1 for left (CCW) arcs, -1 for right."""

    segments: tuple
    spacing: float = 1.0

    def validate(self, path="track"):
        if not self.segments:
            raise InvalidSpec(f"{path}.segments", "at least one segment required")
        if not self.spacing > 0:
            raise InvalidSpec(f"{path}.spacing", "must be > 0")
        for i, s in enumerate(self.segments):
            p = f"{path}.segments[{i}]"
            if s.kind not in SEGMENT_KINDS:
                raise InvalidSpec(f"{p}.kind", f"must be one of {SEGMENT_KINDS}")
            if not s.length > 0:
                raise InvalidSpec(f"{p}.length", "must be > 0")
            if s.kind == "arc":
                if s.radius is None or not s.radius > 0:
                    raise InvalidSpec(f"{p}.radius", "arc radius must be > 0")
                if s.turn not in (1, -1):
                    raise InvalidSpec(f"{p}.turn", "must be +1 or -1")
            if s.kind == "clothoid" and i > 0 and self.segments[i - 1].kind == "clothoid":
                raise InvalidSpec(f"{p}.kind", "two clothoids in a row")
            if abs(s.grade) >= 0.1:
                raise InvalidSpec(f"{p}.grade", "grade must be below 10%")


def _end_curvature(seg):
    return seg.turn / seg.radius if seg.kind == "arc" else 0.0


def curvature_breakpoints(spec: TrackSpec):
    """Piecewise-linear curvature as (s, kappa) breakpoints over horizontal length."""
    segs = spec.segments
    s_pts, k_pts = [0.0], []
    s = 0.0
    for i, seg in enumerate(segs):
        if seg.kind == "clothoid":
            k0 = _end_curvature(segs[i - 1]) if i > 0 else 0.0
            k1 = _end_curvature(segs[i + 1]) if i + 1 < len(segs) else 0.0
        else:
            k0 = k1 = _end_curvature(seg)
        if not k_pts:
            k_pts.append(k0)
        else:
            # Duplicate abscissa encodes a curvature step between segments.
            s_pts.append(s)
            k_pts.append(k0)
        s += seg.length
        s_pts.append(s)
        k_pts.append(k1)
    return np.array(s_pts), np.array(k_pts)


def _eval_breakpoints(s_pts, k_pts, s):
    """Evaluate the piecewise-linear profile, right-continuous at steps."""
    s = np.asarray(s, float)
    idx = np.clip(np.searchsorted(s_pts, s, side="right") - 1, 0, len(s_pts) - 2)
    s0, s1 = s_pts[idx], s_pts[idx + 1]
    span = np.where(s1 > s0, s1 - s0, 1.0)
    r = np.clip((s - s0) / span, 0.0, 1.0)
    return k_pts[idx] + r * (k_pts[idx + 1] - k_pts[idx])


@dataclass(frozen=True)
class GeneratedTrack:
    points: np.ndarray
    s: np.ndarray
    kappa: np.ndarray
    segment_bounds: np.ndarray
    map: TrackMap

    def segment_index(self, d):
        """Index of the spec segment containing map distance ``d``."""
        s = np.interp(d, self.map.d, self.s)
        return np.clip(np.searchsorted(self.segment_bounds, s, side="right") - 1,
                       0, len(self.segment_bounds) - 2)


def generate_track(spec: TrackSpec, spacing: float | None = None, heading0: float = 0.0,
                   rdp_epsilon: float = 0.05, map_id: str = "") -> GeneratedTrack:
    """Sample the segment chain as a polyline and build its track map."""
    spec.validate()
    spacing = spec.spacing if spacing is None else spacing
    s_pts, k_pts = curvature_breakpoints(spec)
    total = s_pts[-1]
    n = int(round(total / spacing))
    s = np.linspace(0.0, total, n + 1)
    fine = np.union1d(np.linspace(0.0, total, 20 * n + 1), s_pts)
    k_fine = _eval_breakpoints(s_pts, k_pts, fine)
    heading = heading0 + cumulative_trapezoid(k_fine, fine, initial=0.0)
    x = cumulative_trapezoid(np.cos(heading), fine, initial=0.0)
    y = cumulative_trapezoid(np.sin(heading), fine, initial=0.0)
    bounds = np.concatenate([[0.0], np.cumsum([seg.length for seg in spec.segments])])
    seg_idx = np.clip(np.searchsorted(bounds, fine, side="right") - 1, 0, len(spec.segments) - 1)
    grade = np.array([seg.grade for seg in spec.segments])[seg_idx]
    z = cumulative_trapezoid(grade, fine, initial=0.0)
    take = np.minimum(np.searchsorted(fine, s - 1e-9 * max(total, 1.0)), len(fine) - 1)
    pts = np.column_stack([x[take], y[take], z[take]])
    kappa = _eval_breakpoints(s_pts, k_pts, s)
    track_map = build_map(pts, rdp_epsilon=rdp_epsilon, map_id=map_id)
    return GeneratedTrack(pts, s, kappa, bounds, track_map)


@dataclass(frozen=True)
class Leg:
    distance: float
    speed: float
    dwell: float = 0.0


@dataclass(frozen=True)
class TripSpec:
    """Station-to-station trip starting at rest after ``start_dwell`` seconds."""

    legs: tuple
    start_dwell: float = 30.0
    accel: float = 0.5
    decel: float = 0.6
    start_offset: float = 50.0

    def validate(self, path="trip"):
        if not self.legs:
            raise InvalidSpec(f"{path}.legs", "at least one leg required")
        for name in ("accel", "decel"):
            if not getattr(self, name) > 0:
                raise InvalidSpec(f"{path}.{name}", "must be > 0")
        if self.start_dwell < 0:
            raise InvalidSpec(f"{path}.start_dwell", "must be >= 0")
        for i, leg in enumerate(self.legs):
            p = f"{path}.legs[{i}]"
            if not leg.speed > 0:
                raise InvalidSpec(f"{p}.speed", "must be > 0")
            if not leg.distance > 0:
                raise InvalidSpec(f"{p}.distance", "must be > 0")
            if leg.dwell < 0:
                raise InvalidSpec(f"{p}.dwell", "must be >= 0")


@dataclass(frozen=True)
class VelocityProfile:
    """Piecewise-constant acceleration phases ``(duration, accel)`` from ``v0``."""

    phases: tuple
    v0: float = 0.0

    @classmethod
    def from_trip(cls, trip: TripSpec, T: float):
        trip.validate()
        phases = []
        if trip.start_dwell > 0:
            phases.append((round(trip.start_dwell / T) * T, 0.0))
        for i, leg in enumerate(trip.legs):
            n_acc = math.ceil(leg.speed / trip.accel / T - 1e-9)
            n_dec = math.ceil(leg.speed / trip.decel / T - 1e-9)
            ramps = 0.5 * leg.speed * (n_acc + n_dec) * T
            n_cruise = round((leg.distance - ramps) / (leg.speed * T))
            if n_cruise < 0:
                raise InvalidSpec(f"trip.legs[{i}].distance",
                                  f"too short to reach {leg.speed} m/s and stop")
            phases.append((n_acc * T, leg.speed / (n_acc * T)))
            if n_cruise:
                phases.append((n_cruise * T, 0.0))
            phases.append((n_dec * T, -leg.speed / (n_dec * T)))
            if leg.dwell > 0:
                phases.append((round(leg.dwell / T) * T, 0.0))
        return cls(tuple(phases), 0.0)

    def step_accelerations(self, T: float) -> np.ndarray:
        out = []
        for duration, a in self.phases:
            n = round(duration / T)
            if abs(n * T - duration) > 1e-9 * max(1.0, duration):
                raise ProfileMismatch(f"phase duration {duration} is not a multiple of T={T}")
            out.extend([a] * n)
        return np.array(out, dtype=float)


@dataclass(frozen=True)
class Truth:
    t: np.ndarray
    d: np.ndarray
    v: np.ndarray
    a: np.ndarray
    kappa: np.ndarray
    p_x: np.ndarray
    p_y: np.ndarray
    roll: np.ndarray
    pitch: np.ndarray
    yaw: np.ndarray

    def __len__(self):
        return len(self.t)

    @property
    def T(self) -> float:
        return float(self.t[1] - self.t[0]) if len(self.t) > 1 else 0.0


def generate_truth(track_map: TrackMap, profile: VelocityProfile, T: float,
                   d0: float | None = None) -> Truth:
    """Integrate the profile along the track.

    ``a[k]`` is the acceleration over (t[k-1], t[k]], so the discrete
    kinematics are exact: v[k] = v[k-1] + T a[k] and
    d[k] = d[k-1] + T v[k-1] + T^2/2 a[k].
    """
    acc = np.concatenate([[0.0], profile.step_accelerations(T)])
    n = len(acc)
    v = profile.v0 + T * np.cumsum(acc)
    v[0] = profile.v0
    v = np.where(np.abs(v) < 1e-9, 0.0, v)
    if np.any(v < 0):
        raise ProfileMismatch("profile drives the speed negative")
    v_prev = np.concatenate([[profile.v0], v[:-1]])
    steps = T * v_prev + 0.5 * T * T * acc
    steps[0] = 0.0
    start = track_map.d_min if d0 is None else d0
    d = start + np.cumsum(steps)
    if d[-1] > track_map.d_max or start < track_map.d_min:
        raise ProfileMismatch(
            f"trip covers [{start:.1f}, {d[-1]:.1f}] m but the map spans "
            f"[{track_map.d_min:.1f}, {track_map.d_max:.1f}] m"
        )
    vals, _ = track_map.interp(d, [PX, PY, KAPPA, ROLL, PITCH, YAW])
    t = T * np.arange(n)
    return Truth(t, d, v, acc, vals[:, 2], vals[:, 0], vals[:, 1], vals[:, 3], vals[:, 4], vals[:, 5])


@dataclass(frozen=True)
class SensorSpec:
    """IMU and GNSS error model.

    IMU readings follow reading = truth + bias + drift + noise; the bias
    drift is a random walk with per-sample step ``bias_drift`` on the
    biased channels. ``vibration`` is extra per-axis accelerometer noise
    present whenever the train rolls. GNSS fixes report a per-fix sigma
    scattered around ``gnss_sigma`` and are dropped inside ``outages``.
    """

    imu_rate: float = 10.0
    accel_noise: tuple = (0.005 * G,) * 3
    gyro_noise: tuple = (0.05 * DEG,) * 3
    accel_bias: tuple = (0.02, 0.01, 0.0)
    gyro_bias: tuple = (0.0, 0.0, 1e-4)
    bias_drift: float = 5e-6
    vibration: tuple = (0.0, 0.0, 1.0)
    gnss_rate: float = 1.0
    gnss_sigma: tuple = (2.04, 3.45, 0.35)
    gnss_sigma_jitter: float = 0.2
    outages: tuple = ()
    g: float = G

    def validate(self, path="sensors"):
        for name in ("imu_rate", "gnss_rate"):
            if not getattr(self, name) > 0:
                raise InvalidSpec(f"{path}.{name}", "must be > 0")
        for name in ("accel_noise", "gyro_noise", "vibration", "gnss_sigma"):
            vals = getattr(self, name)
            if len(vals) != 3 or min(vals) < 0:
                raise InvalidSpec(f"{path}.{name}", "needs three values >= 0")
        if min(self.gnss_sigma) <= 0:
            raise InvalidSpec(f"{path}.gnss_sigma", "must be > 0")
        if self.bias_drift < 0 or self.gnss_sigma_jitter < 0:
            raise InvalidSpec(f"{path}.bias_drift", "must be >= 0")
        wins = sorted(tuple(w) for w in self.outages)
        for i, (a, b) in enumerate(wins):
            if not b > a:
                raise InvalidSpec(f"{path}.outages[{i}]", "end must be after start")
            if i and a < wins[i - 1][1]:
                raise InvalidSpec(f"{path}.outages[{i}]", "outage windows overlap")

    def in_outage(self, t) -> np.ndarray:
        t = np.asarray(t, float)
        out = np.zeros(t.shape, dtype=bool)
        for a, b in self.outages:
            out |= (t >= a) & (t < b)
        return out


def noise_free_imu(truth: Truth, g: float = G):
    """Exact specific force (sensor frame) and angular rate along the truth."""
    R = rotation_matrix(roll=truth.roll, pitch=truth.pitch, yaw=truth.yaw)
    kinematic = np.column_stack([truth.a, truth.v**2 * truth.kappa, np.zeros(len(truth))])
    gravity = np.einsum("nji,j->ni", R, np.array([0.0, 0.0, g]))
    acc = kinematic + gravity
    gyro = np.column_stack([np.zeros(len(truth)), np.zeros(len(truth)), truth.v * truth.kappa])
    return acc, gyro


def synthesize_sensors(truth: Truth, spec: SensorSpec, seed=None):
    """Noisy IMU stream and GNSS fixes for ``truth``; seed-deterministic."""
    spec.validate()
    if len(truth) > 1 and abs(truth.T * spec.imu_rate - 1.0) > 1e-9:
        raise ProfileMismatch(f"truth step {truth.T} s does not match IMU rate {spec.imu_rate} Hz")
    rng = np.random.default_rng(seed)
    n = len(truth)
    acc, gyro = noise_free_imu(truth, spec.g)

    acc_bias = np.asarray(spec.accel_bias, float)
    gyro_bias = np.asarray(spec.gyro_bias, float)
    acc_drift = np.cumsum(spec.bias_drift * rng.standard_normal((n, 3)), axis=0)
    gyro_drift = np.cumsum(spec.bias_drift * rng.standard_normal((n, 3)), axis=0)
    acc_drift[:, acc_bias == 0] = 0.0
    gyro_drift[:, gyro_bias == 0] = 0.0
    rolling = (np.abs(truth.v) > ROLLING_SPEED)[:, None]
    acc = (acc + acc_bias + acc_drift
           + np.asarray(spec.accel_noise) * rng.standard_normal((n, 3))
           + rolling * np.asarray(spec.vibration) * rng.standard_normal((n, 3)))
    gyro = (gyro + gyro_bias + gyro_drift
            + np.asarray(spec.gyro_noise) * rng.standard_normal((n, 3)))
    imu = ImuLog(truth.t.copy(), acc, gyro)

    every = max(1, round(spec.imu_rate / spec.gnss_rate))
    ks = np.arange(0, n, every)
    ks = ks[~spec.in_outage(truth.t[ks])]
    scale = np.exp(spec.gnss_sigma_jitter * rng.standard_normal((len(ks), 3))
                   - 0.5 * spec.gnss_sigma_jitter**2)
    sig = np.asarray(spec.gnss_sigma) * scale
    err = sig * rng.standard_normal((len(ks), 3))
    fixes = [
        GnssSample(float(truth.t[k]), float(truth.p_x[k] + e[0]), float(truth.p_y[k] + e[1]),
                   float(abs(truth.v[k]) + e[2]), float(s[0]), float(s[1]), float(s[2]))
        for k, e, s in zip(ks, err, sig)
    ]
    return imu, fixes


@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    track: TrackSpec
    trip: TripSpec
    sensors: SensorSpec = field(default_factory=SensorSpec)

    def validate(self):
        self.track.validate()
        self.trip.validate()
        self.sensors.validate()

    def to_dict(self) -> dict:
        d = asdict(self)
        d["track"]["segments"] = [
            {k: v for k, v in seg.items() if v is not None} for seg in d["track"]["segments"]
        ]
        d["sensors"]["outages"] = [list(w) for w in self.sensors.outages]
        for key in ("accel_noise", "gyro_noise", "accel_bias", "gyro_bias", "vibration", "gnss_sigma"):
            d["sensors"][key] = list(d["sensors"][key])
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioSpec":
        def build(kind, raw, path):
            if not isinstance(raw, dict):
                raise InvalidSpec(path, "expected a table")
            names = kind.__dataclass_fields__
            extra = set(raw) - set(names)
            if extra:
                raise InvalidSpec(f"{path}.{sorted(extra)[0]}", "unknown key")
            return raw

        try:
            name = str(data.get("name", "custom"))
            t = build(TrackSpec, data.get("track", {}), "track")
            segs = []
            for i, s in enumerate(t.get("segments", [])):
                build(Segment, s, f"track.segments[{i}]")
                segs.append(Segment(**s))
            track = TrackSpec(tuple(segs), float(t.get("spacing", 1.0)))
            tr = build(TripSpec, data.get("trip", {}), "trip")
            legs = []
            for i, leg in enumerate(tr.get("legs", [])):
                build(Leg, leg, f"trip.legs[{i}]")
                legs.append(Leg(**leg))
            trip = TripSpec(tuple(legs), **{k: float(v) for k, v in tr.items() if k != "legs"})
            se = dict(build(SensorSpec, data.get("sensors", {}), "sensors"))
            for key, val in se.items():
                if isinstance(val, list):
                    se[key] = tuple(tuple(x) if isinstance(x, list) else x for x in val)
            sensors = SensorSpec(**se)
        except TypeError as exc:
            raise InvalidSpec("scenario", str(exc)) from None
        spec = cls(name, track, trip, sensors)
        spec.validate()
        return spec


@dataclass(frozen=True)
class Scenario:
    name: str
    spec: ScenarioSpec
    seed: int
    track: GeneratedTrack
    truth: Truth
    imu: ImuLog
    gnss: list

    @property
    def map(self) -> TrackMap:
        return self.track.map

    @property
    def outages(self):
        return self.spec.sensors.outages


def build_scenario(spec: ScenarioSpec, seed: int = 0) -> Scenario:
    spec.validate()
    T = 1.0 / spec.sensors.imu_rate
    track = generate_track(spec.track, map_id=spec.name)
    profile = VelocityProfile.from_trip(spec.trip, T)
    truth = generate_truth(track.map, profile, T, d0=track.map.d_min + spec.trip.start_offset)
    imu, fixes = synthesize_sensors(truth, spec.sensors, seed)
    return Scenario(spec.name, spec, int(seed), track, truth, imu, fixes)


def _chain(*parts):
    """Expand ('S', L) / ('A', L, R, turn) shorthand, adding clothoids between."""
    segs = []
    for p in parts:
        if p[0] == "S":
            segs.append(Segment("straight", float(p[1])))
        elif p[0] == "C":
            segs.append(Segment("clothoid", float(p[1])))
        else:
            segs.append(Segment("arc", float(p[1]), radius=float(p[2]), turn=int(p[3])))
    return tuple(segs)


def curvy_track() -> TrackSpec:
    return TrackSpec(_chain(
        ("S", 250), ("C", 60), ("A", 300, 400, 1), ("C", 60), ("S", 80),
        ("C", 60), ("A", 350, 350, -1), ("C", 60), ("S", 100),
        ("C", 60), ("A", 400, 500, 1), ("C", 60), ("S", 80),
        ("C", 60), ("A", 250, 300, -1), ("C", 60), ("S", 120),
        ("C", 60), ("A", 450, 450, 1), ("C", 60), ("S", 90),
        ("C", 60), ("A", 300, 380, -1), ("C", 60), ("S", 100),
        ("C", 60), ("A", 350, 420, 1), ("C", 60), ("S", 400),
    ))


def straight_track() -> TrackSpec:
    return TrackSpec(_chain(
        ("S", 2600), ("C", 80), ("A", 350, 700, 1), ("C", 80), ("S", 1400),
        ("C", 80), ("A", 300, 600, -1), ("C", 80), ("S", 1200),
        ("C", 80), ("A", 300, 800, 1), ("C", 80), ("S", 800),
    ))


def _indefinite(t_cut=50.0):
    return ((t_cut, math.inf),)


# Preset speeds are synthetic regional-line values, not measured ones.
PRESETS = {
    "mixed-outages": lambda: ScenarioSpec(
        "mixed-outages",
        curvy_track(),
        # The log starts just before departure, so the accelerometer bias is
        # unknown until the first station stop.
        TripSpec((Leg(1500, 15, 25), Leg(1350, 18, 20), Leg(1300, 15, 10)), start_dwell=2.0),
        SensorSpec(outages=((75.0, 95.0), (130.0, 165.0), (215.0, 240.0),
                            (290.0, 320.0), (370.0, 395.0))),
    ),
    "straight-indefinite": lambda: ScenarioSpec(
        "straight-indefinite",
        straight_track(),
        TripSpec((Leg(3300, 22, 20), Leg(1700, 20, 20), Leg(1600, 20, 10))),
        SensorSpec(outages=_indefinite()),
    ),
    "curvy-indefinite": lambda: ScenarioSpec(
        "curvy-indefinite",
        curvy_track(),
        TripSpec((Leg(1500, 15, 20), Leg(2600, 16, 10))),
        SensorSpec(outages=_indefinite()),
    ),
}


def preset_spec(name: str) -> ScenarioSpec:
    try:
        return PRESETS[name]()
    except KeyError:
        raise InvalidSpec("preset", f"unknown preset {name!r}; valid: {', '.join(PRESETS)}") from None


def preset_scenarios(seed: int = 0) -> dict:
    return {name: build_scenario(preset_spec(name), seed) for name in PRESETS}

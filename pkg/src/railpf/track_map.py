"""Discrete track map used as a look-up table.

A :class:`TrackMap` stores, for each surveyed point, its along-track
distance ``d`` and seven features: position (p_x, p_y, p_z), signed
curvature and orientation (roll, pitch, yaw). Queries between stored
points blend the two bracketing points linearly; angles blend along the
shorter arc.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import uniform_filter1d
from scipy.spatial import cKDTree

from .exceptions import DegenerateGeometry, OutOfMapRange, TooFewPoints
from .geometry import Orientation, arc_length, curvature_at, fit_spline, rdp_indices, wrap_angle

FEATURES = ("p_x", "p_y", "p_z", "kappa", "theta_x", "theta_y", "theta_z")
PX, PY, PZ, KAPPA, ROLL, PITCH, YAW = range(7)
_ANGLE_COLS = (ROLL, PITCH, YAW)

DEFAULT_RDP_EPSILON = 0.05
DEFAULT_MAX_KNOT_SPACING = 25.0
CHORD_SLACK = 1e-6


@dataclass(frozen=True)
class MapFeatures:
    p_x: float
    p_y: float
    p_z: float
    kappa: float
    theta_x: float
    theta_y: float
    theta_z: float

    @property
    def orientation(self) -> Orientation:
        return Orientation(self.theta_x, self.theta_y, self.theta_z)


@dataclass(frozen=True)
class TrackMap:
    """Immutable arc-length indexed track table.

    ``features`` has one row per point with columns ordered as
    :data:`FEATURES`.
    """

    d: np.ndarray
    features: np.ndarray
    map_id: str = ""
    _tree: cKDTree = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        d = np.ascontiguousarray(self.d, dtype=float)
        f = np.ascontiguousarray(self.features, dtype=float)
        if d.ndim != 1 or f.shape != (len(d), 7):
            raise ValueError("features must have shape (M, 7) matching d")
        if len(d) < 2:
            raise TooFewPoints("a track map needs at least two points")
        if not (np.all(np.isfinite(d)) and np.all(np.isfinite(f))):
            raise ValueError("track map contains non-finite values")
        if np.any(np.diff(d) <= 0):
            raise DegenerateGeometry("map distances must be strictly increasing")
        chords = np.hypot(np.diff(f[:, PX]), np.diff(f[:, PY]))
        bad = np.flatnonzero(chords > np.diff(d) + CHORD_SLACK)
        if len(bad):
            i = int(bad[0])
            raise DegenerateGeometry(
                f"planar chord {chords[i]:.6f} m exceeds along-track step "
                f"{d[i + 1] - d[i]:.6f} m between points {i} and {i + 1}"
            )
        d.flags.writeable = False
        f.flags.writeable = False
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "features", f)
        object.__setattr__(self, "_tree", cKDTree(f[:, :2]))

    @property
    def d_min(self) -> float:
        return float(self.d[0])

    @property
    def d_max(self) -> float:
        return float(self.d[-1])

    @property
    def length(self) -> float:
        return self.d_max - self.d_min

    @property
    def size(self) -> int:
        return len(self.d)

    def column(self, name: str) -> np.ndarray:
        return self.features[:, FEATURES.index(name)]

    def interp(self, d, cols=None):
        """Vectorized look-up.

        Returns ``(values, valid)`` where ``values`` has shape
        ``(n, len(cols))`` and ``valid`` flags queries inside the map.
        Invalid rows hold the value at the nearest map end.
        """
        dq = np.atleast_1d(np.asarray(d, dtype=float))
        cols = list(range(7)) if cols is None else list(cols)
        valid = (dq >= self.d[0]) & (dq <= self.d[-1])
        dc = np.clip(np.nan_to_num(dq, nan=self.d[0]), self.d[0], self.d[-1])
        i = np.clip(np.searchsorted(self.d, dc, side="right") - 1, 0, len(self.d) - 2)
        d1 = self.d[i]
        r = (dc - d1) / (self.d[i + 1] - d1)
        f1 = self.features[i][:, cols]
        f2 = self.features[i + 1][:, cols]
        out = np.empty_like(f1)
        for j, c in enumerate(cols):
            if c in _ANGLE_COLS:
                th = f1[:, j] + r * wrap_angle(f2[:, j] - f1[:, j])
                out[:, j] = np.where(np.abs(th) > np.pi, wrap_angle(th), th)
            else:
                out[:, j] = (1.0 - r) * f1[:, j] + r * f2[:, j]
        return out, valid

    def project(self, x: float, y: float, k: int = 4):
        """Nearest point on the mapped polyline to planar position (x, y).

        Returns ``(d, offset, heading)``: along-track distance of the
        foot point, signed across-track offset (positive to the left of
        the direction of increasing d) and the segment heading.
        """
        p = np.array([x, y], dtype=float)
        k = min(k, self.size)
        _, idx = self._tree.query(p, k=k)
        idx = np.atleast_1d(idx)
        segs = np.unique(np.clip(np.concatenate([idx - 1, idx]), 0, self.size - 2))
        a = self.features[segs, :2]
        b = self.features[segs + 1, :2]
        ab = b - a
        t = np.clip(np.einsum("ij,ij->i", p - a, ab) / np.einsum("ij,ij->i", ab, ab), 0.0, 1.0)
        foot = a + t[:, None] * ab
        dist = np.linalg.norm(p - foot, axis=1)
        j = int(np.argmin(dist))
        s = segs[j]
        heading = float(np.arctan2(ab[j, 1], ab[j, 0]))
        along = self.d[s] + t[j] * (self.d[s + 1] - self.d[s])
        cross = ab[j, 0] * (p[1] - a[j, 1]) - ab[j, 1] * (p[0] - a[j, 0])
        offset = float(np.sign(cross) * dist[j])
        return float(along), offset, heading


def lookup(track: TrackMap, d_k: float) -> MapFeatures:
    """Interpolated features at distance ``d_k``.

    The blend ratio is measured from the stored point just below
    ``d_k``; linear blending is symmetric, so the same value results
    when bracketing from above during reverse travel.
    """
    d_k = float(d_k)
    if not (track.d_min <= d_k <= track.d_max):
        raise OutOfMapRange(d_k, track.d_min, track.d_max)
    vals, _ = track.interp(d_k)
    return MapFeatures(*(float(v) for v in vals[0]))


def orientation_at(track: TrackMap, d: float) -> Orientation:
    f = lookup(track, d)
    return Orientation(f.theta_x, f.theta_y, f.theta_z)


def _dedup(xyz):
    keep = np.ones(len(xyz), dtype=bool)
    keep[1:] = np.any(np.diff(xyz, axis=0) != 0.0, axis=1)
    return xyz[keep]


def _add_knots(idx, d, max_spacing, min_knots=4):
    """Insert original indices so knot gaps never exceed ``max_spacing``."""
    out = [int(idx[0])]
    for a, b in zip(idx[:-1], idx[1:]):
        gap = d[b] - d[a]
        n_extra = int(np.ceil(gap / max_spacing)) - 1 if max_spacing > 0 else 0
        if n_extra > 0:
            targets = d[a] + gap * np.arange(1, n_extra + 1) / (n_extra + 1)
            extra = np.searchsorted(d, targets)
            out.extend(int(e) for e in extra if a < e < b)
        out.append(int(b))
    knots = np.unique(out)
    if len(knots) < min_knots:
        knots = np.unique(np.round(np.linspace(0, len(d) - 1, min_knots)).astype(int))
    return knots


def build_map(
    raw,
    rdp_epsilon: float = DEFAULT_RDP_EPSILON,
    orientation_smoothing_window: int = 1,
    max_knot_spacing: float = DEFAULT_MAX_KNOT_SPACING,
    roll=None,
    d0: float = 0.0,
    map_id: str = "",
) -> TrackMap:
    """Build a track map from an ordered (x, y, z) polyline.

    Curvature comes from a natural spline fitted through an RDP-reduced
    subset of the points (with knots inserted so no gap exceeds
    ``max_knot_spacing``) and evaluated back at every original point.
    Stored positions are the input coordinates, untouched.
    """
    xyz = np.asarray(raw, dtype=float)
    if xyz.ndim != 2 or xyz.shape[1] not in (2, 3):
        raise ValueError("raw polyline must have shape (n, 3) or (n, 2)")
    if xyz.shape[1] == 2:
        xyz = np.column_stack([xyz, np.zeros(len(xyz))])
    if len(xyz) < 4:
        raise TooFewPoints(f"need at least 4 raw points, got {len(xyz)}")
    if roll is not None:
        roll = np.asarray(roll, dtype=float)
        if roll.shape != (len(xyz),):
            raise ValueError("roll must have one value per raw point")
        keep = np.ones(len(xyz), dtype=bool)
        keep[1:] = np.any(np.diff(xyz, axis=0) != 0.0, axis=1)
        roll = roll[keep]
    xyz = _dedup(xyz)
    if len(xyz) < 4:
        raise DegenerateGeometry(f"only {len(xyz)} distinct points after removing duplicates")

    d = arc_length(xyz) + d0
    x, y, z = xyz.T
    idx = rdp_indices(xyz[:, :2], rdp_epsilon)
    knots = _add_knots(idx, d, max_knot_spacing)
    curve = fit_spline(np.column_stack([d[knots], x[knots], y[knots]]))
    kappa = curvature_at(curve, d)
    # Radii beyond 1e9 km are numerically straight.
    kappa = np.where(np.abs(kappa) < 1e-12, 0.0, kappa)

    dx, dy, dz = (np.gradient(c, d) for c in (x, y, z))
    yaw = np.unwrap(np.arctan2(dy, dx))
    pitch = np.arctan2(dz, np.hypot(dx, dy))
    w = int(orientation_smoothing_window)
    if w > 1:
        yaw = uniform_filter1d(yaw, w, mode="nearest")
        pitch = uniform_filter1d(pitch, w, mode="nearest")
    roll = np.zeros(len(d)) if roll is None else roll
    feats = np.column_stack([x, y, z, kappa, wrap_angle(roll), wrap_angle(pitch), wrap_angle(yaw)])
    return TrackMap(d, feats, map_id=map_id)


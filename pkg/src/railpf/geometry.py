"""Geometric utilities for track maps.

Splines parameterized on along-track distance, Ramer-Douglas-Peucker
simplification, arc length, signed plane curvature and Euler-angle
rotation matrices.

Frames are right-handed with z up. Curvature is positive for
counter-clockwise turning. Orientation angles compose as intrinsic
yaw-pitch-roll (Z, then Y, then X); pitch is positive nose-up so a
train climbing a grade has a positive pitch angle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from .exceptions import NonMonotoneParameter, OutOfRange, TooFewPoints

__all__ = [
    "PlaneCurve",
    "Orientation",
    "wrap_angle",
    "fit_spline",
    "curvature_at",
    "rdp_indices",
    "simplify_rdp",
    "arc_length",
    "rotation_matrix",
    "to_inertial",
    "to_sensor",
]

# Slack for range checks on the spline parameter.
_RANGE_TOL = 1e-9


def wrap_angle(a):
    """Wrap angle(s) to the half-open interval (-pi, pi]."""
    return np.pi - np.mod(np.pi - np.asarray(a, dtype=float), 2.0 * np.pi)


@dataclass(frozen=True)
class PlaneCurve:
    """Natural cubic spline through (d, x, y) samples.

    ``d`` is the along-track distance; x and y are splined separately
    on it so first and second derivatives are available everywhere.
    """

    d: np.ndarray
    x: np.ndarray
    y: np.ndarray
    _sx: CubicSpline
    _sy: CubicSpline

    @property
    def d_min(self) -> float:
        return float(self.d[0])

    @property
    def d_max(self) -> float:
        return float(self.d[-1])

    def _check(self, d):
        d = np.asarray(d, dtype=float)
        if np.any(d < self.d_min - _RANGE_TOL) or np.any(d > self.d_max + _RANGE_TOL):
            raise OutOfRange(
                f"parameter outside curve range [{self.d_min}, {self.d_max}]"
            )
        return d

    def position(self, d):
        d = self._check(d)
        return np.stack([self._sx(d), self._sy(d)], axis=-1)

    def derivatives(self, d, order: int = 1):
        """Return (x^(order), y^(order)) at ``d``."""
        d = self._check(d)
        return self._sx(d, order), self._sy(d, order)


def fit_spline(points) -> PlaneCurve:
    """Fit a natural cubic spline to ordered ``(d, x, y)`` rows."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError("points must have shape (n, 3) as (d, x, y)")
    if len(pts) < 4:
        raise TooFewPoints(f"need at least 4 points for a cubic spline, got {len(pts)}")
    d, x, y = pts.T
    if np.any(np.diff(d) <= 0):
        raise NonMonotoneParameter("spline parameter d must be strictly increasing")
    sx = CubicSpline(d, x, bc_type="natural")
    sy = CubicSpline(d, y, bc_type="natural")
    return PlaneCurve(d.copy(), x.copy(), y.copy(), sx, sy)


def curvature_at(curve: PlaneCurve, d):
    """Signed curvature (1/m) of ``curve`` at distance(s) ``d``.

    kappa = (x' y'' - y' x'') / (x'^2 + y'^2)^(3/2)
    """
    x1, y1 = curve.derivatives(d, 1)
    x2, y2 = curve.derivatives(d, 2)
    speed2 = x1 * x1 + y1 * y1
    k = (x1 * y2 - y1 * x2) / speed2**1.5
    return float(k) if np.ndim(k) == 0 else k


def _segment_distances(pts, a, b):
    """Distance from each row of ``pts`` to segment a-b."""
    ab = b - a
    denom = float(ab @ ab)
    if denom == 0.0:
        return np.linalg.norm(pts - a, axis=1)
    t = np.clip((pts - a) @ ab / denom, 0.0, 1.0)
    proj = a + t[:, None] * ab
    return np.linalg.norm(pts - proj, axis=1)


def rdp_indices(points, epsilon: float) -> np.ndarray:
    """Indices kept by Ramer-Douglas-Peucker simplification.

    Works on any dimension; distances are to the chord segment, so every
    dropped point lies within ``epsilon`` of the simplified polyline.
    """
    pts = np.asarray(points, dtype=float)
    n = len(pts)
    if n <= 2 or epsilon <= 0.0:
        return np.arange(n)
    keep = np.zeros(n, dtype=bool)
    keep[0] = keep[-1] = True
    stack = [(0, n - 1)]
    while stack:
        i0, i1 = stack.pop()
        if i1 - i0 < 2:
            continue
        dist = _segment_distances(pts[i0 + 1 : i1], pts[i0], pts[i1])
        j = int(np.argmax(dist))
        if dist[j] > epsilon:
            split = i0 + 1 + j
            keep[split] = True
            stack.append((i0, split))
            stack.append((split, i1))
    return np.flatnonzero(keep)


def simplify_rdp(points, epsilon: float):
    """Simplify a polyline; ``epsilon = 0`` returns the input unchanged."""
    pts = np.asarray(points, dtype=float)
    if len(pts) < 2:
        return pts.copy()
    return pts[rdp_indices(pts, epsilon)]


def arc_length(points) -> np.ndarray:
    """Cumulative chord length along a polyline, starting at 0."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[None, :]
    if len(pts) == 0:
        raise TooFewPoints("arc_length needs at least one point")
    steps = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    return np.concatenate([[0.0], np.cumsum(steps)])


@dataclass(frozen=True)
class Orientation:
    """Roll, pitch and yaw in radians, each wrapped to (-pi, pi]."""

    roll: float = 0.0
    pitch: float = 0.0
    yaw: float = 0.0

    def __post_init__(self):
        for name in ("roll", "pitch", "yaw"):
            object.__setattr__(self, name, float(wrap_angle(getattr(self, name))))

    def as_tuple(self):
        return (self.roll, self.pitch, self.yaw)


def rotation_matrix(o: Orientation | None = None, *, roll=0.0, pitch=0.0, yaw=0.0):
    """Sensor-to-inertial rotation R = Rz(yaw) Ry(pitch) Rx(roll).

    Accepts an :class:`Orientation` or keyword angles; angle arrays of a
    common shape ``s`` produce matrices of shape ``s + (3, 3)``.
    """
    if o is not None:
        roll, pitch, yaw = o.as_tuple()
    roll, pitch, yaw = np.broadcast_arrays(
        np.asarray(roll, float), np.asarray(pitch, float), np.asarray(yaw, float)
    )
    cr, sr = np.cos(roll), np.sin(roll)
    cp, sp = np.cos(pitch), np.sin(pitch)
    cy, sy = np.cos(yaw), np.sin(yaw)
    one, zero = np.ones_like(roll), np.zeros_like(roll)
    rz = np.stack([cy, -sy, zero, sy, cy, zero, zero, zero, one], -1)
    # Pitch rotates body x towards +z (nose up) for positive angles.
    ry = np.stack([cp, zero, -sp, zero, one, zero, sp, zero, cp], -1)
    rx = np.stack([one, zero, zero, zero, cr, -sr, zero, sr, cr], -1)
    shape = roll.shape + (3, 3)
    return rz.reshape(shape) @ ry.reshape(shape) @ rx.reshape(shape)


def to_inertial(o: Orientation, v):
    """Rotate a sensor-frame vector into the inertial frame."""
    return rotation_matrix(o) @ np.asarray(v, dtype=float)


def to_sensor(o: Orientation, v):
    """Rotate an inertial-frame vector into the sensor frame (R^-1 = R^T)."""
    return rotation_matrix(o).T @ np.asarray(v, dtype=float)

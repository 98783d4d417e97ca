"""GNSS fixes in the planar map frame and their alignment to the IMU clock."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class GnssSample:
    """Position/speed fix with the receiver's per-fix 1-sigma uncertainties."""

    t: float
    p_x: float
    p_y: float
    v: float
    sigma_px: float
    sigma_py: float
    sigma_v: float

    def __post_init__(self):
        if min(self.sigma_px, self.sigma_py, self.sigma_v) <= 0:
            raise ValueError("GNSS sigmas must be positive")


def gnss_sigmas(fix: GnssSample, default, source: str = "fix"):
    """(sigma_px, sigma_py, sigma_v) to weight ``fix`` with."""
    if source == "fix":
        return fix.sigma_px, fix.sigma_py, fix.sigma_v
    return tuple(default)


def align_to_steps(step_times, fixes):
    """Assign each fix to the IMU step nearest in time.

    Returns a list with one entry per step, ``None`` where no fix
    arrives. A fix is consumed at the first step with
    ``t_step >= t_fix - T/2``; later fixes win ties on the same step.
    """
    t = np.asarray(step_times, dtype=float)
    out = [None] * len(t)
    if len(t) == 0:
        return out
    half = 0.5 * float(np.median(np.diff(t))) if len(t) > 1 else 0.0
    for fix in fixes:
        k = int(np.searchsorted(t, fix.t - half, side="left"))
        if k < len(t) and abs(t[k] - fix.t) <= half + 1e-9:
            out[k] = fix
    return out


def outage_windows(fix_times, t_start, t_end, max_gap=None):
    """Intervals with no GNSS, inferred from gaps in the fix times.

    A gap counts as an outage when it exceeds ``max_gap`` (default: twice
    the median fix interval). Leading and trailing gaps are included.
    """
    ft = np.sort(np.asarray(fix_times, dtype=float))
    if len(ft) == 0:
        return [(float(t_start), float(t_end))]
    if max_gap is None:
        max_gap = 2.0 * float(np.median(np.diff(ft))) if len(ft) > 1 else 1.0
    edges = np.concatenate([[t_start], ft, [t_end]])
    windows = []
    for a, b in zip(edges[:-1], edges[1:]):
        if b - a > max_gap:
            windows.append((float(a), float(b)))
    return windows

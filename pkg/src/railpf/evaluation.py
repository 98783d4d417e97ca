"""Position error statistics and report generation.

Errors are measured against on-track ground truth: Euclidean distance,
plus a split into along-track and across-track components using the
truth tangent. The "3-sigma" figure is the 99.73 % empirical quantile
of the Euclidean error.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .csvio import write_columns, write_table
from .exceptions import AlignmentGap, EmptySeries
from .gnss import outage_windows
from .track_map import YAW, TrackMap

SIGMA3 = 0.9973


@dataclass(frozen=True)
class ErrorSeries:
    t: np.ndarray
    euclidean: np.ndarray
    along: np.ndarray
    across: np.ndarray
    gnss_available: np.ndarray
    # Matched positions, kept for map-trace plots.
    p_x_hat: np.ndarray | None = None
    p_y_hat: np.ndarray | None = None
    p_x: np.ndarray | None = None
    p_y: np.ndarray | None = None

    def __len__(self):
        return len(self.t)


def _get(obj, *names):
    for n in names:
        if isinstance(obj, dict) and n in obj:
            return np.asarray(obj[n], dtype=float)
        if hasattr(obj, n):
            return np.asarray(getattr(obj, n), dtype=float)
    raise KeyError(f"none of {names} found")


def match_times(t_est, t_ref, tol=None):
    """Index into ``t_ref`` of the nearest reference sample for each estimate.

    Returns ``(est_idx, ref_idx)`` for the estimates that have a
    reference within ``tol`` (default half the median reference step).
    """
    t_est = np.asarray(t_est, float)
    t_ref = np.asarray(t_ref, float)
    if len(t_est) == 0 or len(t_ref) == 0:
        raise AlignmentGap("no samples to align")
    if tol is None:
        tol = 0.5 * float(np.median(np.diff(t_ref))) if len(t_ref) > 1 else 0.0
    j = np.clip(np.searchsorted(t_ref, t_est), 1, max(len(t_ref) - 1, 1))
    if len(t_ref) == 1:
        j = np.zeros(len(t_est), dtype=int)
    else:
        left = t_ref[j - 1]
        j = np.where(np.abs(t_est - left) <= np.abs(t_ref[j] - t_est), j - 1, j)
    ok = np.abs(t_ref[j] - t_est) <= tol + 1e-9
    if not ok.any():
        raise AlignmentGap(
            f"estimate times [{t_est[0]}, {t_est[-1]}] do not overlap truth "
            f"times [{t_ref[0]}, {t_ref[-1]}] within {tol} s")
    return np.flatnonzero(ok), j[ok]


def _tangent(truth, ref_idx, track):
    if track is not None and (isinstance(truth, dict) and "d" in truth or hasattr(truth, "d")):
        d = _get(truth, "d")[ref_idx]
        yaw = track.interp(d, [YAW])[0][:, 0]
        return np.cos(yaw), np.sin(yaw)
    # Fall back to finite differences of the truth path, holding the last
    # direction through stops.
    x, y = _get(truth, "p_x"), _get(truth, "p_y")
    dx, dy = np.gradient(x), np.gradient(y)
    norm = np.hypot(dx, dy)
    moving = norm > 1e-9
    if not moving.any():
        return np.ones(len(ref_idx)), np.zeros(len(ref_idx))
    k = np.maximum.accumulate(np.where(moving, np.arange(len(x)), -1))
    k = np.where(k < 0, np.flatnonzero(moving)[0], k)
    return (dx[k] / norm[k])[ref_idx], (dy[k] / norm[k])[ref_idx]


def gnss_outages(gnss_times, t_ref) -> list:
    """Outage windows over the span of ``t_ref``; a trailing one is open-ended
    so it also covers the final sample."""
    t_ref = np.asarray(t_ref, float)
    windows = outage_windows(gnss_times, float(t_ref[0]), float(t_ref[-1]))
    return [(a, np.inf if b >= t_ref[-1] else b) for a, b in windows]


def compute_errors(estimates, truth, track: TrackMap | None = None,
                   outages=None, gnss_times=None, tol=None) -> ErrorSeries:
    """Align estimates to truth and measure their errors.

    ``estimates`` needs ``t`` and planar positions (``p_x_hat``/``p_y_hat``
    or ``p_x``/``p_y``); ``truth`` needs ``t``, ``p_x``, ``p_y`` and, for
    map tangents, ``d``. GNSS availability comes from ``outages`` or is
    inferred from ``gnss_times``; without either it is all True.
    """
    t_est = _get(estimates, "t")
    t_ref = _get(truth, "t")
    ei, ri = match_times(t_est, t_ref, tol)
    xh = _get(estimates, "p_x_hat", "p_x")[ei]
    yh = _get(estimates, "p_y_hat", "p_y")[ei]
    xt = _get(truth, "p_x")[ri]
    yt = _get(truth, "p_y")[ri]
    ex, ey = xh - xt, yh - yt
    tx, ty = _tangent(truth, ri, track)
    along = ex * tx + ey * ty
    across = -ex * ty + ey * tx
    t = t_est[ei]
    if outages is None and gnss_times is not None:
        outages = gnss_outages(gnss_times, t_ref)
    avail = np.ones(len(t), dtype=bool)
    for a, b in outages or ():
        avail &= ~((t >= a) & (t < b))
    return ErrorSeries(t, np.hypot(ex, ey), along, across, avail, xh, yh, xt, yt)


def _values(series):
    e = series.euclidean if isinstance(series, ErrorSeries) else np.asarray(series, float)
    if len(e) == 0:
        raise EmptySeries("error series is empty")
    return e


def error_cdf(series):
    """Empirical CDF as (sorted errors, cumulative probabilities k/n)."""
    e = np.sort(_values(series))
    return e, np.arange(1, len(e) + 1) / len(e)


def quantile(series, p: float) -> float:
    """Smallest error whose empirical CDF reaches ``p``."""
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    return float(np.quantile(_values(series), p, method="inverted_cdf"))


def sigma3(series) -> float:
    return quantile(series, SIGMA3)


def _rms(x):
    return float(np.sqrt(np.mean(x * x))) if len(x) else float("nan")


def summarize(series: ErrorSeries) -> dict:
    e = _values(series)
    avail = series.gnss_available
    return {
        "n": len(e),
        "mean": float(np.mean(e)),
        "median": quantile(e, 0.5),
        "sigma3": sigma3(e),
        "max": float(np.max(e)),
        "rms": _rms(e),
        "rms_gnss": _rms(e[avail]),
        "rms_outage": _rms(e[~avail]),
        "across_rms": _rms(series.across),
    }


SUMMARY_COLUMNS = ("run", "n", "mean", "median", "sigma3", "max", "rms", "rms_gnss",
                   "rms_outage", "across_rms")


def outage_maxima(series: ErrorSeries, outages) -> list:
    """Largest Euclidean error inside each outage window (NaN if unobserved)."""
    out = []
    for a, b in outages:
        m = (series.t >= a) & (series.t < b)
        out.append(float(series.euclidean[m].max()) if m.any() else float("nan"))
    return out


def _gp_quote(s):
    return "'" + str(s).replace("'", "''") + "'"


def gnuplot_script(names, outages, t_max=None) -> str:
    """Gnuplot script for error-vs-time, CDF overlay and map trace."""
    lines = [
        "# Render with: gnuplot plots.gp",
        "set datafile separator ','",
        "set key autotitle columnhead",
        "set terminal pngcairo size 1000,600",
        "",
        "set output 'error_time.png'",
        "set xlabel 't [s]'",
        "set ylabel 'absolute position error [m]'",
    ]
    for k, (a, b) in enumerate(outages, start=1):
        b = t_max if (not np.isfinite(b) and t_max is not None) else b
        b_txt = "graph 1" if not np.isfinite(b) else repr(float(b))
        lines.append(f"set object {k} rect from {float(a)!r}, graph 0 to {b_txt}, graph 1 "
                     "behind fillcolor rgb '#dddddd' fillstyle solid noborder")
    plots = ", ".join(f"{_gp_quote(f'errors_{n}.csv')} using 1:2 with lines title {_gp_quote(n)}"
                      for n in names)
    lines += [f"plot {plots}", "unset object", ""]
    lines += [
        "set output 'error_cdf.png'",
        "set xlabel 'absolute position error [m]'",
        "set ylabel 'cumulative probability'",
        "set yrange [0:1]",
    ]
    plots = ", ".join(f"{_gp_quote(f'cdf_{n}.csv')} using 1:2 with steps title {_gp_quote(n)}"
                      for n in names)
    lines += [f"plot {plots}", "set autoscale y", ""]
    lines += [
        "set output 'map_trace.png'",
        "set xlabel 'x [m]'",
        "set ylabel 'y [m]'",
        "set size ratio -1",
    ]
    plots = [f"{_gp_quote(f'errors_{names[0]}.csv')} using 8:9 with lines lc rgb 'black' title 'track'"] \
        if names else []
    plots += [f"{_gp_quote(f'errors_{n}.csv')} using 6:7 with points pt 7 ps 0.3 title {_gp_quote(n)}"
              for n in names]
    if plots:
        lines.append("plot " + ", ".join(plots))
    return "\n".join(lines) + "\n"


ERROR_COLUMNS = ("t", "euclidean", "along", "across", "gnss_available",
                 "p_x_hat", "p_y_hat", "p_x", "p_y")


def report(runs: dict, out_dir, outages=()) -> dict:
    """Write per-run error and CDF tables, a summary and a gnuplot script.

    ``runs`` maps run names to :class:`ErrorSeries`. Returns the summary
    rows keyed by run name.
    """
    if not runs:
        raise ValueError("report needs at least one run")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    outages = [tuple(map(float, w)) for w in outages]
    summary = {}
    for name, s in runs.items():
        nan = np.full(len(s), np.nan)
        cols = [s.t, s.euclidean, s.along, s.across, s.gnss_available.astype(int)]
        cols += [c if c is not None else nan for c in (s.p_x_hat, s.p_y_hat, s.p_x, s.p_y)]
        write_columns(out / f"errors_{name}.csv", ERROR_COLUMNS, cols)
        write_columns(out / f"cdf_{name}.csv", ("error", "probability"), error_cdf(s))
        summary[name] = summarize(s)
    write_table(out / "summary.csv", SUMMARY_COLUMNS,
                ([name] + [row[c] for c in SUMMARY_COLUMNS[1:]] for name, row in summary.items()))
    if outages:
        names = list(runs)
        rows = []
        for k, (a, b) in enumerate(outages):
            rows.append([a, b] + [outage_maxima(runs[n], [(a, b)])[0] for n in names])
        write_table(out / "outages.csv", ["t_start", "t_end"] + [f"max_{n}" for n in names], rows)
    t_max = max(float(s.t[-1]) for s in runs.values() if len(s))
    (out / "plots.gp").write_text(gnuplot_script(list(runs), outages, t_max), encoding="utf-8")
    return summary

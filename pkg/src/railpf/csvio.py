"""CSV readers and writers for maps, sensor logs, truth and estimates.

All files are UTF-8 with a header row, ``.`` decimals and LF line
endings. Floats are written with ``repr`` so a write/read round trip is
exact and repeated writes are byte-identical. Parse errors name the
file line (the header is line 1).
"""

from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np

from .exceptions import CsvFormatError, RailPFError
from .gnss import GnssSample
from .imu import ImuLog
from .track_map import FEATURES, TrackMap

MAP_COLUMNS = ("d",) + FEATURES
RAW_COLUMNS = ("x", "y", "z")
IMU_COLUMNS = ("t", "a_x", "a_y", "a_z", "omega_x", "omega_y", "omega_z")
GNSS_COLUMNS = ("t", "p_x", "p_y", "v", "sigma_px", "sigma_py", "sigma_v")
TRUTH_COLUMNS = ("t", "d", "v", "p_x", "p_y")
PF_COLUMNS = ("t", "d_hat", "v_hat", "p_x_hat", "p_y_hat", "sigma_d", "n_eff", "resampled", "zvu")
EKF_COLUMNS = ("t", "d_hat", "v_hat", "p_x_hat", "p_y_hat", "sigma_d", "zvu", "trace_P")


def _fmt(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(x)


def write_table(path, columns, rows):
    """Write ``rows`` (an iterable of sequences) under header ``columns``."""
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def write_columns(path, columns, data):
    """Write parallel arrays ``data`` (one per column)."""
    arrays = [np.asarray(a) for a in data]
    if len({len(a) for a in arrays}) > 1:
        raise ValueError("columns differ in length")
    write_table(path, columns, zip(*arrays))


def read_table(path, required, optional=()):
    """Read a headed CSV into a dict of float arrays.

    Every name in ``required`` must appear in the header; other columns
    are kept only if listed in ``optional``.
    """
    path = Path(path)
    try:
        fh = path.open("r", encoding="utf-8", newline="")
    except OSError as exc:
        raise CsvFormatError(f"{path}: cannot open: {exc.strerror or exc}") from None
    with fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise CsvFormatError(f"{path}: empty file, expected header {','.join(required)}") from None
        missing = [c for c in required if c not in header]
        if missing:
            raise CsvFormatError(f"{path}: line 1: missing column(s) {', '.join(missing)}")
        wanted = [c for c in list(required) + list(optional) if c in header]
        idx = [header.index(c) for c in wanted]
        rows = []
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise CsvFormatError(
                    f"{path}: line {line}: expected {len(header)} fields, got {len(row)}")
            vals = []
            for c, i in zip(wanted, idx):
                try:
                    v = float(row[i])
                except ValueError:
                    raise CsvFormatError(
                        f"{path}: line {line}: column {c!r}: not a number: {row[i]!r}") from None
                if math.isnan(v):
                    raise CsvFormatError(f"{path}: line {line}: column {c!r}: NaN")
                vals.append(v)
            rows.append(vals)
    arr = np.array(rows, dtype=float).reshape(len(rows), len(wanted))
    return {c: arr[:, j] for j, c in enumerate(wanted)}


def write_map(path, track: TrackMap):
    write_columns(path, MAP_COLUMNS, [track.d] + [track.features[:, j] for j in range(7)])


def read_map(path, map_id: str = "") -> TrackMap:
    cols = read_table(path, MAP_COLUMNS)
    if len(cols["d"]) < 2:
        raise CsvFormatError(f"{path}: a map needs at least two rows")
    feats = np.column_stack([cols[c] for c in FEATURES])
    try:
        return TrackMap(cols["d"], feats, map_id=map_id or Path(path).stem)
    except RailPFError as exc:
        raise CsvFormatError(f"{path}: {exc}") from None


def read_raw(path) -> np.ndarray:
    cols = read_table(path, ("x", "y"), optional=("z",))
    z = cols.get("z", np.zeros(len(cols["x"])))
    return np.column_stack([cols["x"], cols["y"], z])


def write_raw(path, xyz):
    xyz = np.asarray(xyz, dtype=float)
    write_columns(path, RAW_COLUMNS, xyz.T)


def write_imu(path, log: ImuLog):
    write_columns(path, IMU_COLUMNS, [log.t, *log.acc.T, *log.gyro.T])


def read_imu(path) -> ImuLog:
    c = read_table(path, IMU_COLUMNS)
    t = c["t"]
    if len(t) > 1 and np.any(np.diff(t) <= 0):
        bad = int(np.flatnonzero(np.diff(t) <= 0)[0]) + 3
        raise CsvFormatError(f"{path}: line {bad}: timestamps must increase")
    acc = np.column_stack([c["a_x"], c["a_y"], c["a_z"]])
    gyro = np.column_stack([c["omega_x"], c["omega_y"], c["omega_z"]])
    return ImuLog(t, acc, gyro)


def write_gnss(path, fixes):
    write_table(path, GNSS_COLUMNS, (
        (f.t, f.p_x, f.p_y, f.v, f.sigma_px, f.sigma_py, f.sigma_v) for f in fixes))


def read_gnss(path) -> list:
    c = read_table(path, GNSS_COLUMNS)
    out = []
    for k in range(len(c["t"])):
        try:
            out.append(GnssSample(*(float(c[name][k]) for name in GNSS_COLUMNS)))
        except ValueError as exc:
            raise CsvFormatError(f"{path}: line {k + 2}: {exc}") from None
    return out


def write_truth(path, truth):
    write_columns(path, TRUTH_COLUMNS, [truth.t, truth.d, truth.v, truth.p_x, truth.p_y])


def read_truth(path) -> dict:
    return read_table(path, TRUTH_COLUMNS)


def write_pf_estimates(path, results):
    write_table(path, PF_COLUMNS, (
        (r.t, r.estimate.d, r.estimate.v, r.estimate.p_x, r.estimate.p_y,
         r.estimate.sigma_d, r.n_eff, r.resampled, r.zvu) for r in results))


def write_ekf_estimates(path, results):
    write_table(path, EKF_COLUMNS, (
        (r.t, r.d, r.v, r.p_x, r.p_y, r.sigma_d, r.zvu, r.trace_P) for r in results))


def read_estimates(path) -> dict:
    """Either estimate schema; only the shared columns are required."""
    shared = ("t", "d_hat", "v_hat", "p_x_hat", "p_y_hat", "sigma_d", "zvu")
    return read_table(path, shared, optional=("n_eff", "resampled", "trace_P"))

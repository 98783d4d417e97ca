import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from railpf.track_map import TrackMap

settings.register_profile("default", deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def circle_points(radius, spacing=1.0, arc=None, z=0.0):
    """Counter-clockwise circle (or arc of length ``arc``) starting at the origin heading east."""
    arc = 2 * math.pi * radius * 0.9 if arc is None else arc
    s = np.arange(0.0, arc + 1e-9, spacing)
    th = s / radius
    return np.column_stack([radius * np.sin(th), radius * (1 - np.cos(th)), np.full(len(s), z)])


def line_points(length, spacing, heading=0.0, grade=0.0):
    s = np.arange(0.0, length + 1e-9, spacing)
    return np.column_stack([s * math.cos(heading), s * math.sin(heading), grade * s])


def kappa_map(kappa_fn, length, spacing=0.5, d0=0.0):
    """Planar TrackMap whose curvature follows ``kappa_fn(s)`` analytically."""
    s = np.arange(0.0, length + 1e-9, spacing)
    fine = np.linspace(0.0, length, 20 * len(s))
    heading = np.concatenate([[0.0], np.cumsum(0.5 * (kappa_fn(fine[1:]) + kappa_fn(fine[:-1]))
                                               * np.diff(fine))])
    hx = np.interp(s, fine, heading)
    # Integrate position on the fine grid for accuracy, then sample.
    x = np.concatenate([[0.0], np.cumsum(np.cos(0.5 * (heading[1:] + heading[:-1])) * np.diff(fine))])
    y = np.concatenate([[0.0], np.cumsum(np.sin(0.5 * (heading[1:] + heading[:-1])) * np.diff(fine))])
    feats = np.column_stack([np.interp(s, fine, x), np.interp(s, fine, y), np.zeros(len(s)),
                             kappa_fn(s), np.zeros(len(s)), np.zeros(len(s)), hx])
    return TrackMap(s + d0, feats, map_id="analytic")


@pytest.fixture
def straight_map():
    from railpf.track_map import build_map
    return build_map(line_points(1000.0, 10.0))


@pytest.fixture
def circle_map():
    from railpf.track_map import build_map
    return build_map(circle_points(500.0, spacing=5.0))


_ACCEPTANCE = []


@pytest.fixture
def criterion(request, capsys):
    """Record and print one pass/fail line per acceptance criterion."""

    def record(number, ok, detail):
        line = f"CRITERION {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        _ACCEPTANCE.append(line)
        with capsys.disabled():
            print("\n" + line, flush=True)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE, key=lambda s: int(s.split(":")[0].split()[-1])):
            terminalreporter.write_line(line)

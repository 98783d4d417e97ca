import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from railpf.exceptions import NonMonotoneParameter, OutOfRange, TooFewPoints
from railpf.geometry import (Orientation, arc_length, curvature_at, fit_spline, rdp_indices,
                             rotation_matrix, simplify_rdp, to_inertial, to_sensor, wrap_angle)

angles = st.floats(-10.0, 10.0, allow_nan=False)


def _circle_samples(radius, spacing, n, ccw=True):
    s = np.arange(n) * spacing
    th = s / radius
    y = radius * (1 - np.cos(th))
    return s, radius * np.sin(th), y if ccw else -y


class TestFitSpline:
    def test_collinear_on_x_axis_stays_on_axis(self):
        pts = np.column_stack([[0, 1, 2, 3], [0, 1, 2, 3], [0, 0, 0, 0]]).astype(float)
        c = fit_spline(pts)
        d = np.linspace(0, 3, 31)
        assert np.all(c.position(d)[:, 1] == 0.0)

    def test_diagonal_has_equal_derivatives(self):
        s = np.arange(6) * math.sqrt(2)
        c = fit_spline(np.column_stack([s, np.arange(6.0), np.arange(6.0)]))
        dx, dy = c.derivatives(np.linspace(0, s[-1], 50))
        np.testing.assert_allclose(dx, dy, atol=1e-12)

    def test_circle_midpoints_match_analytic_circle(self):
        s, x, y = _circle_samples(500.0, 10.0, 20)
        c = fit_spline(np.column_stack([s, x, y]))
        mid = s[5:-5] + 5.0
        th = mid / 500.0
        exp = np.column_stack([500 * np.sin(th), 500 * (1 - np.cos(th))])
        assert np.max(np.linalg.norm(c.position(mid) - exp, axis=1)) < 1e-3

    def test_interpolates_stored_samples(self):
        s, x, y = _circle_samples(300.0, 7.0, 30)
        c = fit_spline(np.column_stack([s, x, y]))
        np.testing.assert_allclose(c.position(s), np.column_stack([x, y]), atol=1e-9)

    def test_too_few_points(self):
        with pytest.raises(TooFewPoints):
            fit_spline([[0, 0, 0], [1, 1, 0], [2, 2, 0]])

    def test_non_monotone_parameter(self):
        with pytest.raises(NonMonotoneParameter):
            fit_spline([[0, 0, 0], [2, 1, 0], [1, 2, 0], [3, 3, 0]])


class TestCurvature:
    def test_straight_is_zero(self):
        s = np.arange(10.0) * 5
        c = fit_spline(np.column_stack([s, s * 0.6, s * 0.8]))
        np.testing.assert_allclose(curvature_at(c, np.linspace(0, 45, 20)), 0.0, atol=1e-15)

    @pytest.mark.parametrize("radius", [200.0, 500.0, 1000.0, 2000.0])
    def test_circle_midpoints_within_one_percent(self, radius):
        s, x, y = _circle_samples(radius, 10.0, 60)
        c = fit_spline(np.column_stack([s, x, y]))
        mid = s[10:-10] + 5.0
        np.testing.assert_allclose(curvature_at(c, mid), 1.0 / radius, rtol=0.01)

    def test_clockwise_is_negative(self):
        s, x, y = _circle_samples(500.0, 10.0, 40, ccw=False)
        c = fit_spline(np.column_stack([s, x, y]))
        assert np.all(curvature_at(c, s[5:-5]) < 0)

    def test_s_curve_changes_sign_once(self):
        r, n = 400.0, 40
        s1, x1, y1 = _circle_samples(r, 10.0, n + 1)
        th_end = s1[-1] / r
        # Second arc turns clockwise from the end state of the first.
        s2 = np.arange(1, n + 1) * 10.0
        cx, cy = x1[-1] + r * math.sin(th_end), y1[-1] - r * math.cos(th_end)
        phi = th_end - s2 / r
        x2 = cx - r * np.sin(phi)
        y2 = cy + r * np.cos(phi)
        s = np.concatenate([s1, s1[-1] + s2])
        c = fit_spline(np.column_stack([s, np.concatenate([x1, x2]), np.concatenate([y1, y2])]))
        # Sample between knots so no sample sits exactly on the inflection.
        k = curvature_at(c, s[3:-3] + 3.0)
        assert np.count_nonzero(np.diff(np.sign(k)) != 0) == 1

    def test_out_of_range(self):
        s, x, y = _circle_samples(500.0, 10.0, 10)
        c = fit_spline(np.column_stack([s, x, y]))
        with pytest.raises(OutOfRange):
            curvature_at(c, s[-1] + 1.0)


class TestRdp:
    def test_collinear_reduces_to_endpoints(self):
        pts = np.column_stack([np.arange(10.0), 2 * np.arange(10.0)])
        out = simplify_rdp(pts, 0.1)
        np.testing.assert_array_equal(out, pts[[0, -1]])

    def test_zero_epsilon_returns_input(self):
        rng = np.random.default_rng(1)
        pts = rng.normal(size=(25, 2))
        np.testing.assert_array_equal(simplify_rdp(pts, 0.0), pts)

    def test_corner_kept(self):
        pts = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]])
        np.testing.assert_array_equal(simplify_rdp(pts, 0.1), pts)

    def test_empty_and_singleton_unchanged(self):
        assert simplify_rdp(np.empty((0, 2)), 1.0).shape == (0, 2)
        np.testing.assert_array_equal(simplify_rdp([[1.0, 2.0]], 1.0), [[1.0, 2.0]])

    @given(st.lists(st.tuples(st.floats(-100, 100), st.floats(-100, 100)), min_size=2, max_size=40),
           st.floats(0.0, 5.0))
    def test_hausdorff_within_epsilon(self, pts, eps):
        pts = np.array(pts)
        idx = rdp_indices(pts, eps)
        assert idx[0] == 0 and idx[-1] == len(pts) - 1
        assert len(idx) <= len(pts)
        kept = pts[idx]
        # Every dropped point lies within eps of the segment that replaced it.
        for a, b in zip(idx[:-1], idx[1:]):
            p, q = pts[a], pts[b]
            seg = q - p
            denom = seg @ seg
            for j in range(a + 1, b):
                t = 0.0 if denom == 0 else np.clip((pts[j] - p) @ seg / denom, 0, 1)
                assert np.linalg.norm(pts[j] - (p + t * seg)) <= eps + 1e-9
        assert len(kept) == len(idx)


class TestArcLength:
    def test_three_four_five(self):
        np.testing.assert_allclose(arc_length([[0, 0], [3, 4]]), [0, 5])

    def test_single_point(self):
        np.testing.assert_array_equal(arc_length([[2.0, 3.0]]), [0.0])

    def test_unit_square(self):
        sq = [[0, 0], [1, 0], [1, 1], [0, 1], [0, 0]]
        np.testing.assert_allclose(arc_length(sq), [0, 1, 2, 3, 4])

    @given(st.lists(st.tuples(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3)), min_size=1, max_size=30))
    def test_monotone(self, pts):
        d = arc_length(np.array(pts))
        assert d[0] == 0.0
        assert np.all(np.diff(d) >= 0)


class TestRotation:
    def test_identity(self):
        np.testing.assert_array_equal(rotation_matrix(Orientation()) @ [1.0, 2.0, 3.0], [1, 2, 3])

    def test_yaw_quarter_turn(self):
        np.testing.assert_allclose(to_inertial(Orientation(yaw=math.pi / 2), [1, 0, 0]),
                                   [0, 1, 0], atol=1e-12)

    def test_pitch_is_nose_up(self):
        v = to_inertial(Orientation(pitch=0.1), [1, 0, 0])
        assert v[2] > 0 and v[1] == 0

    @given(angles, angles, angles, st.lists(st.floats(-1e3, 1e3), min_size=3, max_size=3))
    def test_inverse_round_trip(self, r, p, y, v):
        o = Orientation(r, p, y)
        np.testing.assert_allclose(to_sensor(o, to_inertial(o, v)), v, atol=1e-12 * max(1, max(map(abs, v))))

    @given(angles, angles, angles)
    def test_orthonormal_with_unit_determinant(self, r, p, y):
        R = rotation_matrix(roll=r, pitch=p, yaw=y)
        np.testing.assert_allclose(R.T @ R, np.eye(3), atol=1e-12)
        assert abs(np.linalg.det(R) - 1.0) < 1e-12

    def test_broadcasts_over_arrays(self):
        yaw = np.linspace(-3, 3, 7)
        R = rotation_matrix(yaw=yaw)
        assert R.shape == (7, 3, 3)
        np.testing.assert_allclose(R[3], rotation_matrix(yaw=yaw[3]))


class TestOrientation:
    @given(angles, angles, angles)
    def test_angles_wrapped(self, r, p, y):
        o = Orientation(r, p, y)
        for a in o.as_tuple():
            assert -math.pi < a <= math.pi

    def test_wrap_keeps_pi(self):
        assert wrap_angle(math.pi) == pytest.approx(math.pi)
        assert wrap_angle(-math.pi) == pytest.approx(math.pi)
        assert wrap_angle(3 * math.pi / 2) == pytest.approx(-math.pi / 2)

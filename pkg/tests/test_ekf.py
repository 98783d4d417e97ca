import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import line_points
from railpf.ekf import (EkfConfig, EkfState, ExtendedKalmanFilter, SERIES_LIMIT, ctra_displacement,
                        ctra_input_jacobian, ctra_jacobian, ctra_step, ekf_init_from_gnss, ekf_map_match, ekf_predict,
                        ekf_update_gnss, ekf_zero_velocity, run_ekf)
from railpf.exceptions import PriorOutsideMap
from railpf.gnss import GnssSample
from railpf.imu import G, ImuSample
from railpf.scenario import build_scenario, preset_spec
from railpf.track_map import build_map

STRAIGHT = build_map(line_points(1000.0, 10.0))


def _state(x=(0.0, 0.0, 0.0, 10.0), P=None):
    return EkfState(np.array(x, float), np.eye(4) if P is None else P)


class TestConfig:
    def test_defaults(self):
        cfg = EkfConfig()
        assert cfg.sigma_ax == pytest.approx(0.005 * G)
        assert cfg.sigma_wz == pytest.approx(0.05 * math.pi / 180)
        assert (cfg.sigma_px, cfg.sigma_py, cfg.sigma_v, cfg.sigma_map) == (2.04, 3.45, 0.35, 0.01)

    @pytest.mark.parametrize("kw", [dict(sigma_map=0.0), dict(map_gate=-1.0),
                                    dict(map_match="sometimes"), dict(gnss_sigma="x")])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            EkfConfig(**kw)


class TestCtra:
    def test_straight(self):
        x = ctra_step(np.array([0.0, 0.0, 0.0, 10.0]), 0.0, 0.0, 1.0)
        assert x == pytest.approx([10.0, 0.0, 0.0, 10.0])

    def test_arc_matches_circle(self):
        x = ctra_step(np.array([0.0, 0.0, 0.0, 10.0]), 0.0, 0.02, 1.0)
        # Oracle: 10 m along a circle of radius 500 m from the origin heading east.
        assert x[2] == pytest.approx(0.02)
        assert x[0] == pytest.approx(500 * math.sin(0.02), abs=1e-9)
        assert x[1] == pytest.approx(500 * (1 - math.cos(0.02)), abs=1e-9)

    def test_accelerating_straight(self):
        x = ctra_step(np.array([0.0, 0.0, math.pi / 2, 10.0]), 0.5, 0.0, 2.0)
        assert x == pytest.approx([0.0, 21.0, math.pi / 2, 11.0], abs=1e-12)

    @pytest.mark.parametrize("a", [0.0, 0.4, -1.0])
    def test_series_branch_continuous(self, a):
        T = 0.1
        x = np.array([0.0, 0.0, 0.3, 15.0])
        for edge in (SERIES_LIMIT / T, -SERIES_LIMIT / T):
            w_in, w_out = edge * (1 - 1e-9), edge * (1 + 1e-9)
            d_in = np.array(ctra_displacement(0.3, 15.0, a, w_in, T))
            d_out = np.array(ctra_displacement(0.3, 15.0, a, w_out, T))
            # Whatever the first-order change in w does not explain is a jump.
            slope = ctra_input_jacobian(x, a, edge, T)[:2, 1]
            assert np.max(np.abs(d_out - d_in - slope * (w_out - w_in))) < 1e-13

    @given(st.floats(-math.pi, math.pi), st.floats(0, 40), st.floats(-1.5, 1.5),
           st.floats(-3.0, 3.0), st.sampled_from([0.01, 0.1, 1.0]))
    def test_displacement_matches_quadrature(self, th, v, a, w, T):
        # Oracle: Gauss-Legendre quadrature of the velocity vector.
        nodes, weights = np.polynomial.legendre.leggauss(40)
        t = 0.5 * T * (nodes + 1)
        speed = v + a * t
        ref = 0.5 * T * np.array([weights @ (speed * np.cos(th + w * t)),
                                  weights @ (speed * np.sin(th + w * t))])
        assert np.max(np.abs(np.array(ctra_displacement(th, v, a, w, T)) - ref)) < 1e-11

    @given(st.floats(-math.pi, math.pi), st.floats(0, 40), st.floats(-1, 1), st.floats(-0.1, 0.1))
    def test_jacobian_matches_finite_differences(self, th, v, a, w):
        x = np.array([5.0, -3.0, th, v])
        J = ctra_jacobian(x, a, w, 0.1)
        h = 1e-6
        num = np.column_stack([(ctra_step(x + h * e, a, w, 0.1) - ctra_step(x - h * e, a, w, 0.1)) / (2 * h)
                               for e in np.eye(4)])
        np.testing.assert_allclose(J, num, atol=1e-7)

    @given(st.floats(-math.pi, math.pi), st.floats(0, 40), st.floats(-1, 1), st.floats(-0.5, 0.5))
    def test_input_jacobian_matches_finite_differences(self, th, v, a, w):
        x = np.array([5.0, -3.0, th, v])
        G_ = ctra_input_jacobian(x, a, w, 0.1)
        h = 1e-6
        num = np.column_stack([
            (ctra_step(x, a + h, w, 0.1) - ctra_step(x, a - h, w, 0.1)) / (2 * h),
            (ctra_step(x, a, w + h, 0.1) - ctra_step(x, a, w - h, 0.1)) / (2 * h)])
        np.testing.assert_allclose(G_, num, atol=1e-7)


class TestPredict:
    def test_noise_free_propagation_is_jacobian_only(self):
        cfg = EkfConfig(sigma_ax=1e-200, sigma_wz=1e-200)
        rng = np.random.default_rng(0)
        A = rng.normal(size=(4, 4))
        st0 = _state((1.0, 2.0, 0.3, 12.0), A @ A.T + np.eye(4))
        out = ekf_predict(st0, 0.2, 0.01, 0.1, cfg)
        F = ctra_jacobian(st0.x, 0.2, 0.01, 0.1)
        np.testing.assert_allclose(out.P, F @ st0.P @ F.T, rtol=1e-12, atol=1e-12)

    def test_noise_adds_covariance(self):
        st0 = _state(P=np.zeros((4, 4)))
        out = ekf_predict(st0, 0.0, 0.0, 0.1, EkfConfig())
        assert np.trace(out.P) > 0
        assert np.all(np.linalg.eigvalsh(out.P) >= -1e-15)

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            ekf_predict(_state(), float("nan"), 0.0, 0.1, EkfConfig())


class TestGnssUpdate:
    def test_equal_measurement(self):
        st0 = _state((10.0, 20.0, 0.1, 5.0), np.diag([4.0, 4.0, 0.01, 1.0]))
        out = ekf_update_gnss(st0, GnssSample(0.0, 10.0, 20.0, 5.0, 2.0, 2.0, 0.5))
        np.testing.assert_allclose(out.x, st0.x)
        assert np.trace(out.P) < np.trace(st0.P)

    def test_infinite_sigma_is_noop(self):
        st0 = _state((10.0, 20.0, 0.1, 5.0), np.diag([4.0, 4.0, 0.01, 1.0]))
        fix = GnssSample(0.0, 100.0, -50.0, 9.0, 1e12, 1e12, 1e12)
        out = ekf_update_gnss(st0, fix)
        np.testing.assert_allclose(out.x, st0.x, atol=1e-9)
        np.testing.assert_allclose(out.P, st0.P, atol=1e-9)

    def test_closed_form_scalar_kalman(self):
        P0 = np.diag([9.0, 16.0, 0.04, 0.25])
        st0 = _state((0.0, 0.0, 0.0, 10.0), P0)
        fix = GnssSample(0.0, 3.0, -2.0, 11.0, 1.5, 2.5, 0.35)
        out = ekf_update_gnss(st0, fix)
        for i, (z, r) in zip([0, 1, 3], [(3.0, 1.5), (-2.0, 2.5), (11.0, 0.35)]):
            k = P0[i, i] / (P0[i, i] + r * r)
            assert out.x[i] == pytest.approx(st0.x[i] + k * (z - st0.x[i]))
            assert out.P[i, i] == pytest.approx(P0[i, i] * r * r / (P0[i, i] + r * r))
        assert out.x[2] == 0.0 and out.P[2, 2] == pytest.approx(0.04)

    def test_config_sigma_source(self):
        st0 = _state((0.0, 0.0, 0.0, 10.0), np.diag([9.0, 9.0, 0.01, 1.0]))
        fix = GnssSample(0.0, 3.0, 0.0, 10.0, 100.0, 100.0, 100.0)
        loose = ekf_update_gnss(st0, fix, EkfConfig())
        tight = ekf_update_gnss(st0, fix, EkfConfig(gnss_sigma="config"))
        assert loose.x[0] < tight.x[0]


class TestMapMatch:
    def test_on_track_unchanged(self):
        st0 = _state((500.0, 0.0, 0.0, 10.0), np.diag([4.0, 4.0, 0.01, 1.0]))
        out = ekf_map_match(st0, STRAIGHT)
        np.testing.assert_allclose(out.x, st0.x, atol=1e-12)
        assert out.map_matched is True

    def test_lateral_offset_pulled_onto_track(self):
        st0 = _state((500.0, 1.0, 0.0, 10.0), np.diag([4.0, 4.0, 0.01, 1.0]))
        out = ekf_map_match(st0, STRAIGHT, sigma_map=0.01)
        # Oracle: scalar gain 4/(4 + 1e-4) on the across-track coordinate.
        assert abs(out.p_y) < 0.05
        assert out.p_y == pytest.approx(1.0 - 4.0 / (4.0 + 1e-4))
        assert out.p_x == pytest.approx(500.0)
        assert out.P[1, 1] < 1e-3

    def test_beyond_gate(self):
        st0 = _state((500.0, 60.0, 0.0, 10.0))
        out = ekf_map_match(st0, STRAIGHT, gate=50.0)
        np.testing.assert_array_equal(out.x, st0.x)
        np.testing.assert_array_equal(out.P, st0.P)
        assert out.map_matched is False


def test_zero_velocity_update():
    st0 = _state((0.0, 0.0, 0.0, 0.3), np.diag([1.0, 1.0, 0.01, 1.0]))
    out = ekf_zero_velocity(st0, 0.01)
    assert abs(out.v) < 1e-3


@given(st.lists(st.tuples(st.floats(-2, 2), st.floats(-0.2, 0.2), st.booleans(), st.booleans()),
                min_size=1, max_size=40))
def test_covariance_stays_psd(ops):
    cfg = EkfConfig()
    st0 = _state((300.0, 0.5, 0.0, 12.0), np.diag([4.0, 9.0, 0.001, 0.2]))
    for a, w, gnss, mm in ops:
        st0 = ekf_predict(st0, a, w, 0.1, cfg)
        if gnss:
            st0 = ekf_update_gnss(st0, GnssSample(0.0, st0.p_x + 1, st0.p_y - 1, 12.0, 2.0, 3.0, 0.3))
        if mm:
            st0 = ekf_map_match(st0, STRAIGHT)
        np.testing.assert_allclose(st0.P, st0.P.T, atol=0)
        assert np.linalg.eigvalsh(st0.P).min() >= -1e-9


class TestSession:
    def test_init_from_gnss_uses_map_yaw(self):
        fix = GnssSample(0.0, 250.0, 1.0, 10.0, 2.0, 3.0, 0.3)
        st0 = ekf_init_from_gnss(fix, STRAIGHT, EkfConfig())
        assert st0.x == pytest.approx([250.0, 1.0, 0.0, 10.0])
        assert np.diag(st0.P)[[0, 1, 3]] == pytest.approx([4.0, 9.0, 0.09])

    def test_needs_init(self):
        sc = build_scenario(preset_spec("curvy-indefinite"), 0)
        with pytest.raises(PriorOutsideMap):
            run_ekf(sc.map, sc.imu, [])
        with pytest.raises(RuntimeError):
            ExtendedKalmanFilter(sc.map).step(sc.imu[0])

    def test_outage_on_straight_bound_grows(self):
        sc = build_scenario(preset_spec("straight-indefinite"), 1)
        k_end = int(np.searchsorted(sc.truth.t, 100.0))
        imu = type(sc.imu)(sc.imu.t[:k_end], sc.imu.acc[:k_end], sc.imu.gyro[:k_end])
        res = run_ekf(sc.map, imu, sc.gnss)
        t = np.array([r.t for r in res])
        sig = np.array([r.sigma_d for r in res])
        out = (t >= 50.0) & (sc.truth.v[:k_end] > 1.0)
        assert np.all(sc.truth.kappa[:k_end][out] == 0.0)
        assert np.all(np.diff(sig[out]) >= 0.0)
        assert sig[out][-1] > 2 * sig[out][0]

    def test_standstill_forces_zero_speed(self):
        sc = build_scenario(preset_spec("curvy-indefinite"), 2)
        k_end = 600
        imu = type(sc.imu)(sc.imu.t[:k_end], sc.imu.acc[:k_end], sc.imu.gyro[:k_end])
        res = run_ekf(sc.map, imu, sc.gnss)
        still = [r for r in res if r.zvu]
        assert still and all(r.v == 0.0 for r in still)
        assert all(r.trace_P > 0 for r in res)

    def test_deterministic(self):
        sc = build_scenario(preset_spec("curvy-indefinite"), 3)
        imu = type(sc.imu)(sc.imu.t[:300], sc.imu.acc[:300], sc.imu.gyro[:300])
        assert run_ekf(sc.map, imu, sc.gnss) == run_ekf(sc.map, imu, sc.gnss)

    def test_map_match_modes(self):
        sc = build_scenario(preset_spec("curvy-indefinite"), 4)
        imu = type(sc.imu)(sc.imu.t[:50], sc.imu.acc[:50], sc.imu.gyro[:50])
        always = run_ekf(sc.map, imu, sc.gnss, EkfConfig(map_match="always"))
        gnss = run_ekf(sc.map, imu, sc.gnss, EkfConfig(map_match="gnss"))
        off = run_ekf(sc.map, imu, sc.gnss, EkfConfig(map_match="off"))
        assert all(r.map_matched for r in always)
        assert {r.map_matched for r in gnss} == {True, None}
        assert all(r.map_matched is None for r in off)


def test_imu_sample_step_uses_prediction():
    ekf = ExtendedKalmanFilter(STRAIGHT, EkfConfig())
    ekf.initialize(_state((100.0, 0.0, 0.0, 10.0), np.diag([1.0, 1.0, 1e-4, 0.1])))
    rng = np.random.default_rng(0)
    for k in range(20):
        est = ekf.step(ImuSample(0.1 * k, [0.0, 0.0, G + 0.5 * rng.standard_normal()], [0, 0, 0]))
    assert est.p_x == pytest.approx(100.0 + 19 * 1.0, abs=1e-6)
    assert est.d == pytest.approx(est.p_x, abs=1e-6)

import numpy as np
import pytest
from hypothesis import assume, given, settings
import hypothesis.strategies as st

from spiroflow import (
    SmootherConfig,
    TimeFlowCurve,
    TimeVolumeCurve,
    differentiate_flow,
    gaussian_smooth,
    resample_on_volume_grid,
    volume_flow_curve,
)
from spiroflow.curves import VolumeFlowCurve
from spiroflow.errors import InvalidArgument, InvalidCurve, NonMonotonicVolume


def tv(samples, dt=0.010):
    return TimeVolumeCurve(np.asarray(samples, dtype=float), dt)


class TestGaussianSmooth:
    def test_constant_preserved(self):
        out = gaussian_smooth(tv([2, 2, 2, 2]), SmootherConfig(k=2, sigma=1.0))
        assert np.allclose(out.samples, 2.0)

    def test_linear_ramp_interior_unchanged(self):
        out = gaussian_smooth(tv([0, 1, 2, 3, 4]), SmootherConfig(k=1, sigma=1.0))
        assert np.allclose(out.samples[1:-1], [1, 2, 3])

    def test_impulse_center_value(self):
        # direct evaluation of the normalized kernel at the center
        sigma = 1.0
        g = lambda j: np.exp(-j * j / (2 * sigma**2))
        expected = g(0) / (g(-1) + g(0) + g(1))
        out = gaussian_smooth(tv([0, 0, 1, 0, 0]), SmootherConfig(k=1, sigma=sigma))
        assert out.samples[2] == pytest.approx(expected, abs=1e-14)

    def test_k_zero_is_identity(self):
        x = [0.1, 0.9, 0.4, 0.7]
        out = gaussian_smooth(tv(x), SmootherConfig(k=0, sigma=2.0))
        assert np.array_equal(out.samples, x)

    @given(
        st.lists(st.floats(min_value=0.0, max_value=10.0), min_size=2, max_size=40),
        st.integers(min_value=0, max_value=8),
        st.floats(min_value=0.1, max_value=5.0),
    )
    def test_output_within_input_bounds(self, samples, k, sigma):
        out = gaussian_smooth(tv(samples), SmootherConfig(k=k, sigma=sigma))
        assert out.samples.min() >= min(samples) - 1e-12
        assert out.samples.max() <= max(samples) + 1e-12

    def test_empty_curve_rejected(self):
        with pytest.raises(InvalidCurve):
            tv([1.0])

    def test_smoothing_reduces_flow_total_variation(self):
        # seeded noisy ramps: the derivative's total variation must shrink
        rng = np.random.default_rng(0)
        for _ in range(20):
            ramp = np.linspace(0, 3, 200) + 0.01 * rng.standard_normal(200)
            curve = tv(np.clip(ramp, 0, None))
            tv_raw = np.abs(np.diff(differentiate_flow(curve).samples)).sum()
            smoothed = gaussian_smooth(curve)
            tv_smooth = np.abs(np.diff(differentiate_flow(smoothed).samples)).sum()
            assert tv_smooth < tv_raw


class TestDifferentiateFlow:
    def test_constant_slope(self):
        v = np.arange(6) * 0.03
        out = differentiate_flow(tv(v))
        assert np.allclose(out.samples, 3.0)
        assert len(out) == 6

    def test_constant_volume(self):
        out = differentiate_flow(tv([1.0, 1.0, 1.0]))
        assert np.allclose(out.samples, 0.0)

    def test_quadratic_against_analytic_derivative(self):
        dt = 0.010
        t = np.arange(300) * dt
        curve = tv(t**2, dt)
        flow = differentiate_flow(curve).samples
        # forward difference of t^2 is 2t + dt; compare against 2t
        assert np.max(np.abs(flow[:-1] - 2 * t[:-1])) <= dt + 1e-12

    def test_too_short_rejected(self):
        with pytest.raises(InvalidCurve):
            tv([0.5])


class TestVolumeFlowCurve:
    def test_strictly_increasing_identity(self):
        v = tv([0.0, 0.5, 1.1, 2.0])
        q = differentiate_flow(v)
        vf = volume_flow_curve(v, q)
        assert np.array_equal(vf.volumes, v.samples)
        assert np.array_equal(vf.flows, q.samples)

    def test_plateau_collapses_to_first_attainment(self):
        v = tv([0.0, 1.0, 1.0, 2.0])
        q = TimeFlowCurve(np.array([1.0, 0.0, 0.0, 1.0]), 0.010)
        vf = volume_flow_curve(v, q)
        assert np.array_equal(vf.volumes, [0.0, 1.0, 2.0])
        assert np.array_equal(vf.flows, [1.0, 0.0, 1.0])

    def test_two_point_curve(self):
        v = tv([0.0, 0.4])
        vf = volume_flow_curve(v, differentiate_flow(v))
        assert len(vf) == 2

    def test_decreasing_volume_rejected(self):
        v = TimeVolumeCurve(np.array([0.0, 1.0, 0.5, 2.0]))
        with pytest.raises(NonMonotonicVolume):
            volume_flow_curve(v, differentiate_flow(v))

    @given(st.lists(st.floats(min_value=0, max_value=0.05), min_size=2, max_size=50))
    def test_output_volumes_non_decreasing(self, increments):
        assume(any(inc > 0 for inc in increments))
        v = tv(np.concatenate([[0.0], np.cumsum(increments)]))
        vf = volume_flow_curve(v, differentiate_flow(v))
        assert np.all(np.diff(vf.volumes) >= 0)


class TestResample:
    def test_own_grid_identity(self):
        vf = VolumeFlowCurve(np.linspace(0, 2, 5), np.array([0.0, 3.0, 2.0, 1.0, 0.5]))
        out = resample_on_volume_grid(vf, 5)
        assert np.allclose(out.volumes, vf.volumes)
        assert np.allclose(out.flows, vf.flows)

    def test_linear_segment_stays_on_line(self):
        vf = VolumeFlowCurve(np.array([0.0, 2.0]), np.array([4.0, 0.0]))
        out = resample_on_volume_grid(vf, 9)
        assert np.allclose(out.flows, 4.0 - 2.0 * out.volumes)

    def test_midpoints_are_neighbor_means(self):
        vf = VolumeFlowCurve(np.array([0.0, 1.0, 2.0]), np.array([1.0, 3.0, 2.0]))
        out = resample_on_volume_grid(vf, 5)
        assert out.flows[1] == pytest.approx((1.0 + 3.0) / 2)
        assert out.flows[3] == pytest.approx((3.0 + 2.0) / 2)

    def test_endpoints_exact(self):
        vf = VolumeFlowCurve(np.array([0.3, 1.7, 2.9]), np.array([2.0, 1.0, 0.2]))
        out = resample_on_volume_grid(vf, 50)
        assert out.volumes[0] == vf.volumes[0]
        assert out.volumes[-1] == vf.volumes[-1]
        assert out.flows[0] == vf.flows[0]
        assert out.flows[-1] == vf.flows[-1]

    def test_too_few_points_rejected(self):
        vf = VolumeFlowCurve(np.array([0.0, 1.0]), np.array([1.0, 0.0]))
        with pytest.raises(InvalidArgument):
            resample_on_volume_grid(vf, 1)

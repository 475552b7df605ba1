import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dynres.schedule import (
    NoiseSchedule,
    ResolutionPlan,
    ScheduleDomainError,
    TimeGrid,
    alpha,
    drift_diffusion,
    half_log_snr,
    make_resolution_plan,
    make_time_grid,
    sigma,
)

from oracles import vp_alpha_quad

VE = NoiseSchedule("ve", sigma_max=1.0)
VE20 = NoiseSchedule("ve")
VP = NoiseSchedule("vp", beta_min=0.1, beta_max=20.0)
SCHEDULES = [VE, VE20, VP]


class TestAlphaSigma:
    def test_ve_alpha_is_one(self):
        assert alpha(VE, 0.5) == 1.0

    def test_vp_alpha_near_zero(self):
        assert abs(alpha(VP, 1e-9) - 1.0) < 1e-8

    def test_vp_alpha_matches_quadrature(self):
        np.testing.assert_allclose(alpha(VP, 1.0), vp_alpha_quad(1.0, 0.1, 20.0), rtol=1e-12)

    @pytest.mark.parametrize("t", [0.01, 0.2, 0.5, 0.9])
    def test_vp_alpha_quadrature_interior(self, t):
        np.testing.assert_allclose(alpha(VP, t), vp_alpha_quad(t, 0.1, 20.0), rtol=1e-12)

    def test_ve_sigma_identity(self):
        assert sigma(VE, 1.0) == 1.0
        assert sigma(VE, 0.25) == 0.25

    def test_vp_variance_preserving(self):
        ts = np.linspace(1e-3, 1.0, 200)
        np.testing.assert_allclose(VP.alpha(ts) ** 2 + VP.sigma(ts) ** 2, 1.0, atol=1e-14)

    @pytest.mark.parametrize("s", SCHEDULES)
    def test_sigma_strictly_increasing(self, s):
        ts = np.linspace(s.t_floor, s.T, 1000)
        assert np.all(np.diff(s.sigma(ts)) > 0)

    @pytest.mark.parametrize("bad", [-0.1, 1.5, float("nan")])
    def test_domain_errors(self, bad):
        with pytest.raises(ScheduleDomainError):
            alpha(VE, bad)
        with pytest.raises(ScheduleDomainError):
            sigma(VP, bad)

    def test_public_functions_reject_zero(self):
        with pytest.raises(ScheduleDomainError):
            alpha(VP, 0.0)

    def test_invalid_schedule(self):
        with pytest.raises(ValueError):
            NoiseSchedule("vp", beta_min=5.0, beta_max=1.0)
        with pytest.raises(ValueError):
            NoiseSchedule("xx")


class TestHalfLogSnr:
    def test_ve_unit(self):
        assert half_log_snr(VE, 1.0) == 0.0

    def test_ve_inverse_e(self):
        np.testing.assert_allclose(half_log_snr(VE, math.exp(-1)), 1.0, rtol=1e-15)

    def test_vp_symmetry_point(self):
        t = VP.t_from_half_log_snr(0.0)
        np.testing.assert_allclose(VP.alpha(t), VP.sigma(t), rtol=1e-12)
        assert abs(half_log_snr(VP, t)) < 1e-12

    @pytest.mark.parametrize("s", SCHEDULES)
    def test_composition(self, s):
        for t in np.linspace(s.t_floor, s.T, 50):
            assert s.half_log_snr(t) == pytest.approx(math.log(s.alpha(t)) - math.log(s.sigma(t)), abs=1e-13)

    @pytest.mark.parametrize("s", SCHEDULES)
    def test_snr_strictly_decreasing(self, s):
        ts = np.linspace(s.t_floor, s.T, 1000)
        assert np.all(np.diff(s.snr(ts)) < 0)

    @pytest.mark.parametrize("s", SCHEDULES)
    def test_inverses(self, s):
        ts = np.linspace(s.t_floor, s.T, 37)
        np.testing.assert_allclose(s.t_from_half_log_snr(s.half_log_snr(ts)), ts, rtol=1e-9)
        np.testing.assert_allclose(s.t_from_sigma(s.sigma(ts)), ts, rtol=1e-9)

    def test_zero_sigma_is_domain_error(self):
        with pytest.raises(ScheduleDomainError):
            half_log_snr(VE, 0.0)


class TestDriftDiffusion:
    def test_ve_closed_form(self):
        f, g2 = drift_diffusion(VE, 0.3)
        assert f == 0.0
        np.testing.assert_allclose(g2, 0.6, rtol=1e-14)

    def test_vp_drift_is_half_beta(self):
        rng = np.random.default_rng(0)
        for t in rng.uniform(0.01, 0.99, 20):
            f, _ = drift_diffusion(VP, t)
            np.testing.assert_allclose(f, -0.5 * (0.1 + t * 19.9), rtol=1e-12)
            h = 1e-6
            fd = (math.log(VP.alpha(t + h)) - math.log(VP.alpha(t - h))) / (2 * h)
            np.testing.assert_allclose(f, fd, rtol=1e-6)

    @pytest.mark.parametrize("s", SCHEDULES)
    def test_finite_differences(self, s):
        rng = np.random.default_rng(1)
        for t in rng.uniform(0.02 * s.T, 0.98 * s.T, 100):
            f, g2 = drift_diffusion(s, t)
            h = 1e-5 * s.T
            dlog = (math.log(s.alpha(t + h)) - math.log(s.alpha(t - h))) / (2 * h)
            dvar = (s.sigma(t + h) ** 2 - s.sigma(t - h) ** 2) / (2 * h)
            ref = dvar - 2 * dlog * s.sigma(t) ** 2
            assert abs(f - dlog) <= 1e-5 * max(1.0, abs(dlog))
            assert abs(g2 - ref) <= 1e-5 * abs(ref)
            assert g2 >= 0


class TestTimeGrid:
    def test_two_steps_linear(self):
        s = NoiseSchedule("vp")
        g = make_time_grid(s, 2, "linear")
        assert g.N == 2
        assert g[0] == pytest.approx(1e-3)
        assert g[2] == 1.0
        assert g[1] == pytest.approx(0.5 + 1e-3 / 2)

    @pytest.mark.parametrize("spacing", ["linear", "log-snr", "polynomial"])
    @pytest.mark.parametrize("s", SCHEDULES)
    def test_cardinality_and_order(self, s, spacing):
        g = make_time_grid(s, 100, spacing)
        assert len(g) == 101
        assert np.all(np.diff(g.steps) > 0)
        assert g[0] == s.t_floor and g[100] == s.T

    @pytest.mark.parametrize("s", SCHEDULES)
    def test_log_snr_equispaced(self, s):
        g = make_time_grid(s, 50, "log-snr")
        lam = s.half_log_snr(g.steps)
        np.testing.assert_allclose(np.diff(lam), np.full(50, (lam[-1] - lam[0]) / 50), atol=1e-9)

    def test_rejects_small_n(self):
        with pytest.raises(ValueError):
            make_time_grid(VE, 1)

    def test_rejects_non_increasing(self):
        with pytest.raises(ValueError):
            TimeGrid(np.array([0.1, 0.1, 0.2]))


class TestResolutionPlan:
    def test_n99_base32(self):
        plan = make_resolution_plan(99, (32, 32, 3))
        for i in range(100):
            if i <= 33:
                assert plan.dims[i] == (32, 32, 3)
            elif i <= 66:
                assert plan.dims[i] == (16, 16, 3)
            else:
                assert plan.dims[i] == (8, 8, 3)
        assert plan.boundaries == (33, 66)
        assert plan.guard_index == 33

    def test_single_stage(self):
        plan = make_resolution_plan(10, (8, 8, 1), stages=1)
        assert set(plan.dims) == {(8, 8, 1)}
        assert plan.switch_indices == frozenset()
        assert plan.guard_index == 11

    def test_n3(self):
        plan = make_resolution_plan(3, (8, 8, 1))
        # boundaries floor(N/3)=1 and floor(2N/3)=2; dims change entering them
        assert plan.boundaries == (1, 2)
        assert plan.dims == ((8, 8, 1), (8, 8, 1), (4, 4, 1), (2, 2, 1))
        assert plan.switch_indices == frozenset({2, 3})

    def test_indivisible_base(self):
        with pytest.raises(ValueError):
            make_resolution_plan(9, (6, 6, 3))

    def test_rejects_non_doubling(self):
        with pytest.raises(ValueError):
            ResolutionPlan(((8, 8, 1), (2, 2, 1), (2, 2, 1)), guard_index=1)

    @settings(max_examples=60, deadline=None)
    @given(N=st.integers(3, 300), stages=st.integers(1, 4), base=st.sampled_from([8, 16, 32]))
    def test_plan_invariants(self, N, stages, base):
        if N < stages:
            return
        plan = make_resolution_plan(N, (base, base, 3), stages)
        assert plan.N == N
        heights = [d[0] for d in plan.dims]
        assert all(a >= b for a, b in zip(heights, heights[1:]))
        for i in plan.switch_indices:
            assert plan.dims[i - 1][0] == 2 * plan.dims[i][0]
        assert len(plan.switch_indices) == stages - 1
        if stages == 3:
            assert plan.boundaries == (N // 3, 2 * N // 3)

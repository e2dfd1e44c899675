import math
import warnings

import numpy as np
import pytest
from scipy.integrate import quad

from spinemfpt import asymptotics as asy
from spinemfpt import geometry as geo
from spinemfpt.asymptotics import (AsymptoticParams, DomainError,
                                   SingularPoint, TooCloseToWindow)


def l1_quadrature(t):
    """Adaptive-quadrature oracle for the log-kernel action on 1."""
    f = lambda y: math.log(abs(t - y))
    total = 0.0
    if t > -1.0:
        total += quad(f, -1.0, t, points=[t], limit=200)[0]
    if t < 1.0:
        total += quad(f, t, 1.0, points=[t], limit=200)[0]
    return total


class TestLogKernel:
    def test_quadrature_oracle_100_points(self, rng):
        ts = rng.uniform(-1.0, 1.0, size=100)
        for t in ts:
            assert asy.log_kernel_L1(t) == pytest.approx(
                l1_quadrature(t), abs=1e-8)

    def test_endpoint_values(self):
        assert asy.log_kernel_L1(0.0) == pytest.approx(-2.0, abs=1e-15)
        v = 2.0 * math.log(2.0) - 2.0
        assert asy.log_kernel_L1(1.0) == pytest.approx(v, abs=1e-15)
        assert asy.log_kernel_L1(-1.0) == pytest.approx(v, abs=1e-15)

    def test_evenness(self, rng):
        for t in rng.uniform(0.0, 1.0, size=20):
            assert asy.log_kernel_L1(t) == pytest.approx(
                asy.log_kernel_L1(-t), abs=1e-15)

    def test_out_of_range(self):
        with pytest.raises(DomainError):
            asy.log_kernel_L1(1.0001)

    def test_double_integral_closed_form(self):
        assert asy.log_kernel_double_integral() == pytest.approx(
            4.0 * math.log(2.0) - 6.0, abs=1e-15)

    def test_double_integral_vs_quadrature(self):
        # integrate the quadrature-based L[1], never touching the closed form
        outer = quad(l1_quadrature, -1.0, 1.0, limit=200)[0]
        assert asy.log_kernel_double_integral() == pytest.approx(outer,
                                                                 abs=1e-8)

    def test_double_integral_vs_integrated_closed_form(self):
        outer = quad(asy.log_kernel_L1, -1.0, 1.0, limit=200)[0]
        assert asy.log_kernel_double_integral() == pytest.approx(outer,
                                                                 abs=1e-10)


class TestPhiDisk:
    def test_center_value(self):
        assert asy.phi_disk((0.0, 0.0), (1.0, 0.0)) == pytest.approx(
            0.25, abs=1e-15)

    def test_antipode_value(self):
        assert asy.phi_disk((-1.0, 0.0), (1.0, 0.0)) == pytest.approx(
            math.log(2.0), abs=1e-15)

    def test_fd_laplacian_is_minus_one(self, rng):
        h = 1e-4
        x_star = (1.0, 0.0)
        count = 0
        while count < 50:
            r = 0.85 * math.sqrt(rng.random())
            th = rng.uniform(0.0, 2.0 * math.pi)
            x, y = r * math.cos(th), r * math.sin(th)
            if math.hypot(x - 1.0, y) < 0.1:
                continue
            lap = (asy.phi_disk((x + h, y), x_star)
                   + asy.phi_disk((x - h, y), x_star)
                   + asy.phi_disk((x, y + h), x_star)
                   + asy.phi_disk((x, y - h), x_star)
                   - 4.0 * asy.phi_disk((x, y), x_star)) / (h * h)
            assert lap == pytest.approx(-1.0, abs=1e-3)
            count += 1

    def test_normal_derivative_zero_on_circle(self, rng):
        x_star = (1.0, 0.0)
        for th in rng.uniform(0.2, 2.0 * math.pi - 0.2, size=25):
            x = (math.cos(th), math.sin(th))
            gx, gy = asy.phi_disk_gradient(x, x_star)
            assert abs(gx * x[0] + gy * x[1]) <= 1e-6

    def test_singular_point(self):
        with pytest.raises(SingularPoint):
            asy.phi_disk((1.0, 0.0), (1.0, 0.0))

    def test_x_outside_disk(self):
        with pytest.raises(DomainError):
            asy.phi_disk((1.2, 0.0), (1.0, 0.0))

    def test_x_star_off_circle(self):
        with pytest.raises(DomainError):
            asy.phi_disk((0.0, 0.0), (1.1, 0.0))

    def test_radius_two_scaling_consistency(self):
        # R=2 head: value must satisfy the same BVP (checked via FD Laplacian)
        head = geo.HeadSpec(center=(0.0, 0.0), radius=2.0)
        h = 1e-4
        x_star = (2.0, 0.0)
        x = (-0.3, 0.4)
        lap = (asy.phi_disk((x[0] + h, x[1]), x_star, head)
               + asy.phi_disk((x[0] - h, x[1]), x_star, head)
               + asy.phi_disk((x[0], x[1] + h), x_star, head)
               + asy.phi_disk((x[0], x[1] - h), x_star, head)
               - 4.0 * asy.phi_disk(x, x_star, head)) / (h * h)
        assert lap == pytest.approx(-1.0, abs=1e-3)


class TestRobinCoefficients:
    def test_values(self):
        assert asy.robin_coefficients(1.0) == pytest.approx((1.0, 0.5))
        assert asy.robin_coefficients(2.0) == pytest.approx((0.5, 1.0))
        a, b = asy.robin_coefficients(4.4558)
        assert a == pytest.approx(0.22443, abs=1e-5)
        assert b == pytest.approx(2.2279, abs=1e-4)


class TestNeckProfile:
    def test_absorbing_end(self):
        assert asy.neck_profile(2.0, 7.0, 2.0) == pytest.approx(0.0,
                                                                abs=1e-15)

    def test_matching_value(self):
        assert asy.neck_profile(0.0, 7.0, 2.0) == pytest.approx(7.0,
                                                                abs=1e-14)

    def test_mid_neck(self):
        assert asy.neck_profile(1.0, 0.0, 2.0) == pytest.approx(0.5,
                                                                abs=1e-15)


def params(eps=0.1, l_tilde=1.0):
    alpha, beta = asy.robin_coefficients(l_tilde)
    return AsymptoticParams(head_area=math.pi, eps=eps, alpha=alpha,
                            beta=beta, L=l_tilde, L_tilde=l_tilde,
                            x_star=(1.0, 0.0),
                            head=geo.HeadSpec((0.0, 0.0), 1.0))


class TestMfptFormulas:
    def test_row1_direct_value(self):
        r = asy.mfpt_spine(params(0.1, 1.0), (0.0, 0.0))
        expect = math.pi / 0.2 + (1.5 + math.log(5.0)) + 0.5 + 0.25
        assert r.value == pytest.approx(expect, abs=1e-12)
        assert r.value == pytest.approx(19.5674, abs=1e-4)

    def test_l2_direct_value(self):
        r = asy.mfpt_spine(params(0.1, 2.0), (0.0, 0.0))
        assert r.value == pytest.approx(36.7754, abs=1e-3)

    def test_term_sum_identity(self):
        r = asy.mfpt_spine(params(0.1, 1.5), (0.3, -0.2))
        assert r.value == sum(r.terms.values())
        assert set(r.terms) == {"leading", "log_term", "robin_term",
                                "phi_term"}

    def test_spine_equals_robin_reduction(self):
        p = params(0.08, 2.5)
        a = asy.mfpt_spine(p, (0.1, 0.2))
        b = asy.mfpt_neumann_robin(p, (0.1, 0.2))
        assert a.value == b.value
        assert a.terms == b.terms

    def test_robin_term_is_half_lt_squared(self):
        r = asy.mfpt_spine(params(0.1, 3.0), (0.0, 0.0))
        assert r.terms["robin_term"] == pytest.approx(4.5, abs=1e-14)

    def test_monotone_in_l_tilde(self):
        grid = np.linspace(0.5, 4.0, 15)
        vals = [asy.mfpt_spine(params(0.05, lt), (0.0, 0.0)).value
                for lt in grid]
        assert np.all(np.diff(vals) > 0)

    def test_monotone_in_eps(self):
        grid = np.linspace(0.01, 0.1, 15)
        vals = [asy.mfpt_spine(params(e, 2.0), (0.0, 0.0)).value
                for e in grid]
        assert np.all(np.diff(vals) < 0)

    def test_curved_table_value(self):
        g = geo.build_curved_spine(1.0, 0.1, 1.0, 1.0, 1.0)
        p = asy.params_from_geometry(g)
        r = asy.mfpt_spine(p, (0.0, 0.0))
        assert r.value == pytest.approx(83.277, abs=2e-3)

    def test_close_to_window_warns(self):
        with pytest.warns(TooCloseToWindow):
            asy.mfpt_spine(params(0.1, 1.0), (0.9, 0.0))

    def test_large_alpha_eps_warns(self):
        with pytest.warns(TooCloseToWindow):
            AsymptoticParams(head_area=math.pi, eps=0.3, alpha=1.0,
                             beta=0.5, L=1.0, L_tilde=1.0, x_star=(1.0, 0.0))


class TestFlux:
    def test_center_value(self):
        f0 = asy.flux_on_window(params(0.1, 1.0), 0.0)
        expect = -math.pi / 0.2 - (1.5 - math.log(2.0) - 1.0)
        assert f0 == pytest.approx(expect, abs=1e-12)
        assert f0 == pytest.approx(-15.5148, abs=1e-4)

    def test_endpoints_finite(self):
        p = params(0.1, 1.0)
        for t in (-0.1, 0.1):
            assert math.isfinite(asy.flux_on_window(p, t))

    def test_outside_window_rejected(self):
        with pytest.raises(DomainError):
            asy.flux_on_window(params(0.1, 1.0), 0.11)

    def test_flux_compatibility_integral(self):
        # integral over the window recovers -|head| with O(alpha eps^2) slack
        for eps, lt in [(0.1, 1.0), (0.05, 2.0), (0.02, 3.0)]:
            p = params(eps, lt)
            total = quad(lambda t: asy.flux_on_window(p, t), -eps, eps,
                         limit=200)[0]
            bound = 3.0 * 2.0 * p.alpha * eps * eps * p.head_area
            assert abs(total + p.head_area) <= max(bound, 1e-10)


class TestReferenceFormula:
    def test_row1_value(self):
        ref = asy.mfpt_reference_hs(params(0.1, 1.0))
        expect = math.log(10.0 * math.pi) + 0.5 + math.pi / 0.2
        assert ref == pytest.approx(expect, abs=1e-12)
        assert ref == pytest.approx(19.6553, abs=5e-4)

    def test_difference_to_spine_bounded_in_eps(self):
        diffs = []
        for eps in (0.1, 0.05, 0.01):
            p = params(eps, 1.0)
            diffs.append(abs(asy.mfpt_spine(p, (0.0, 0.0)).value
                             - asy.mfpt_reference_hs(p)))
        assert max(diffs) < 1.0

    def test_leading_term_scales_with_length(self):
        # log term is independent of neck length: the difference is the
        # leading 1/eps term plus the L^2/2 increment
        r1 = asy.mfpt_reference_hs(params(0.05, 1.0))
        r2 = asy.mfpt_reference_hs(params(0.05, 2.0))
        lead = math.pi * (2.0 - 1.0) / 0.1
        assert (r2 - r1) == pytest.approx(lead + 1.5, abs=1e-9)


class TestParamsFromGeometry:
    def test_straight_spine(self):
        g = geo.build_straight_spine(1.0, 0.1, 2.0)
        p = asy.params_from_geometry(g)
        assert p.alpha == pytest.approx(0.5)
        assert p.beta == pytest.approx(1.0)
        assert p.head_area == pytest.approx(math.pi)
        assert p.x_star == pytest.approx((1.0, 0.0))

    def test_head_only_reads_robin_piece(self):
        g = geo.build_head_only(1.0, 0.1, 0.25, 2.0)
        p = asy.params_from_geometry(g)
        assert p.alpha == pytest.approx(0.25)
        assert p.beta == pytest.approx(2.0)

    def test_curved_uses_effective_length(self):
        g = geo.build_curved_spine(1.0, 0.1, 1.0, 1.0, 1.0)
        p = asy.params_from_geometry(g)
        assert p.L_tilde == pytest.approx(1.0 + math.pi + 0.1 * math.pi,
                                          rel=1e-12)

import math

import numpy as np
import pytest

from spinemfpt import asymptotics as asy
from spinemfpt.asymptotics import DomainError, MeshTooCoarse


class TestAgainstClosedForm:
    def test_twenty_interior_points(self, phi_instance, rng):
        x_star = (1.0, 0.0)
        count = 0
        while count < 20:
            r = 0.9 * math.sqrt(rng.random())
            th = rng.uniform(0.0, 2.0 * math.pi)
            x = (r * math.cos(th), r * math.sin(th))
            if math.hypot(x[0] - 1.0, x[1]) < 12.0 * phi_instance.h:
                continue
            assert phi_instance(x) == pytest.approx(
                asy.phi_disk(x, x_star), abs=5e-3)
            count += 1

    def test_center_example(self, phi_instance):
        assert phi_instance((0.0, 0.0)) == pytest.approx(0.25, abs=5e-3)

    def test_half_radius_example(self, phi_instance):
        expect = math.log(1.5) + 0.75 / 4.0
        assert expect == pytest.approx(0.59296, abs=1e-5)
        assert phi_instance((-0.5, 0.0)) == pytest.approx(expect, abs=5e-3)


class TestConstantFixing:
    def test_offsets_converge_to_pinned_constant(self, phi_instance):
        h = phi_instance.h
        radii = np.array([8.0 * h, 16.0 * h, 32.0 * h])
        d = phi_instance.sample_offsets(radii)
        c = phi_instance.constant
        errs = np.abs(d - c)
        # shrinking radius approaches the pinned constant with order >= 0.8
        assert errs[0] < errs[2]
        order = math.log(errs[2] / errs[0]) / math.log(radii[2] / radii[0])
        assert order >= 0.8

    def test_too_close_to_window_rejected(self, phi_instance):
        with pytest.raises(DomainError):
            phi_instance((1.0 - 2.0 * phi_instance.h, 0.0))


class TestGuards:
    def test_mesh_too_coarse(self):
        from spinemfpt import geometry as geo
        g = geo.build_head_only(1.0, 0.1, 1.0, 0.5)
        with pytest.raises(MeshTooCoarse):
            asy.PhiNumeric(g, h=0.04, mollifier_edges=256)

    def test_requires_head_only(self):
        from spinemfpt import geometry as geo
        g = geo.build_straight_spine(1.0, 0.1, 1.0)
        with pytest.raises(ValueError):
            asy.PhiNumeric(g)

    def test_one_shot_wrapper(self):
        from spinemfpt import geometry as geo
        g = geo.build_head_only(1.0, 0.1, 1.0, 0.5)
        v = asy.phi_numeric(g, (0.0, 0.0), h=0.02)
        assert v == pytest.approx(0.25, abs=5e-3)

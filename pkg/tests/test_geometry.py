import math

import numpy as np
import pytest

from spinemfpt import geometry as geo
from spinemfpt.geometry import InvalidGeometry


def polygon_area(loop):
    x, y = loop[:, 0], loop[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


class TestStraightSpine:
    def test_boundary_closure(self):
        # consecutive pieces share endpoints; the last closes onto the first
        g = geo.build_straight_spine(1.0, 0.1, 1.0)
        pieces = g.pieces
        for a, b in zip(pieces, pieces[1:] + pieces[:1]):
            gap = np.hypot(*(a.polyline[-1] - b.polyline[0]))
            assert gap <= 1e-12

    def test_area_analytic_matches_polygon(self):
        g = geo.build_straight_spine(1.0, 0.1, 1.0)
        assert abs(g.area() - polygon_area(g.loop())) <= 1e-4

    def test_area_composition(self):
        # disk + rectangle - circular segment beyond the chord
        R, eps, L = 1.0, 0.1, 2.0
        g = geo.build_straight_spine(R, eps, L)
        phi = math.asin(eps / R)
        seg = 0.5 * R * R * (2.0 * phi - math.sin(2.0 * phi))
        assert g.area() == pytest.approx(math.pi * R * R + 2 * eps * L - seg,
                                         abs=1e-14)

    def test_head_area_is_full_disk(self):
        g = geo.build_straight_spine(1.0, 0.1, 1.0)
        assert g.head_area() == pytest.approx(math.pi, abs=1e-15)

    def test_window_arclength_exact(self):
        g = geo.build_straight_spine(1.0, 0.1, 1.0)
        cap = [p for p in g.pieces if p.kind == "absorbing"]
        assert len(cap) == 1
        assert cap[0].arclength == pytest.approx(0.2, abs=1e-15)

    def test_boundary_length_sums_pieces(self):
        g = geo.build_straight_spine(1.0, 0.1, 1.5)
        R, eps = 1.0, 0.1
        arc = (2 * math.pi - 2 * math.asin(eps / R)) * R
        assert g.boundary_length() == pytest.approx(arc + 2 * 1.5 + 0.2,
                                                    rel=1e-12)

    def test_locate_classification(self):
        g = geo.build_straight_spine(1.0, 0.1, 1.0)
        assert g.locate((0.0, 0.0))[0] == "interior"
        assert g.locate((1.2, 0.0))[0] == "interior"   # mid-neck
        assert g.locate((0.0, 1.5))[0] == "exterior"
        assert g.locate((3.0, 0.0))[0] == "exterior"
        kind, piece = g.locate((1.2, 0.1))
        assert kind == "boundary"
        assert piece == "wall_upper"

    def test_locate_all_piece_midpoints_are_boundary(self):
        g = geo.build_straight_spine(1.0, 0.1, 1.0)
        for p in g.pieces:
            mid = p.point_at(0.5 * p.arclength)
            kind, name = g.locate(mid)
            assert kind == "boundary"
            assert name == p.name

    def test_gamma_center_on_circle(self):
        g = geo.build_straight_spine(1.0, 0.1, 1.0, center=(2.0, -1.0))
        gx, gy = g.gamma_center
        assert math.hypot(gx - 2.0, gy + 1.0) == pytest.approx(1.0,
                                                               abs=1e-14)

    def test_eps_property(self):
        g = geo.build_straight_spine(1.0, 0.07, 1.0)
        assert g.eps == pytest.approx(0.07, abs=1e-15)


class TestCurvedSpine:
    def test_effective_length_quarter_turns(self):
        # total centerline = l + (pi/2)(r1 + r2); unsigned-curvature
        # correction adds eps*(theta1 + theta2)
        g = geo.build_curved_spine(1.0, 0.1, 1.0, 0.7, 0.9)
        lt = geo.effective_neck_length(g.neck)
        expect = 1.0 + (math.pi / 2) * (0.7 + 0.9) + 0.1 * math.pi
        assert lt == pytest.approx(expect, rel=1e-12)

    def test_effective_length_unit_arcs(self):
        g = geo.build_curved_spine(1.0, 0.1, 1.0, 1.0, 1.0)
        assert geo.effective_neck_length(g.neck) == pytest.approx(
            1.0 + math.pi + 0.1 * math.pi, rel=1e-12)

    def test_boundary_closure(self):
        g = geo.build_curved_spine(1.0, 0.1, 1.0, 0.7, 0.9)
        pieces = g.pieces
        for a, b in zip(pieces, pieces[1:] + pieces[:1]):
            gap = np.hypot(*(a.polyline[-1] - b.polyline[0]))
            assert gap <= 1e-12

    def test_area_near_disk_plus_strip(self):
        # curved strip of constant width keeps area = 2*eps*(centerline)
        g = geo.build_curved_spine(1.0, 0.1, 1.0, 0.7, 0.9)
        R, eps = 1.0, 0.1
        phi = math.asin(eps / R)
        seg = 0.5 * (2.0 * phi - math.sin(2.0 * phi))
        expect = math.pi + 2 * eps * geo.effective_neck_length(g.neck) - seg
        assert g.area() == pytest.approx(expect, rel=1e-6)

    def test_area_matches_polygon_loop(self):
        g = geo.build_curved_spine(1.0, 0.1, 1.0, 0.7, 0.9)
        assert g.area() == pytest.approx(g._polygon_area(), rel=2e-4)

    def test_wall_arclengths_match_offset_radii(self):
        # S-shape: the stated radii are each turn's inner wall, so the
        # upper wall is the r1 arc then the outer r2+2*eps arc; unequal
        # angles make the two wall lengths differ
        eps, l, r1, r2, t1, t2 = 0.1, 1.0, 0.7, 0.9, 1.0, 0.6
        g = geo.build_curved_spine(1.0, eps, l, r1, r2, t1, t2)
        lo = next(p for p in g.pieces if p.name == "wall_lower")
        hi = next(p for p in g.pieces if p.name == "wall_upper")
        assert hi.arclength == pytest.approx(
            l + t1 * r1 + t2 * (r2 + 2 * eps), rel=1e-9)
        assert lo.arclength == pytest.approx(
            l + t1 * (r1 + 2 * eps) + t2 * r2, rel=1e-9)
        # the mean of the two walls is the centerline length
        assert 0.5 * (lo.arclength + hi.arclength) == pytest.approx(
            geo.effective_neck_length(g.neck), rel=1e-9)

    def test_wall_arclengths_equal_for_equal_turns(self):
        # opposite quarter turns swap the inner/outer roles exactly
        g = geo.build_curved_spine(1.0, 0.1, 1.0, 0.7, 0.9)
        lo = next(p for p in g.pieces if p.name == "wall_lower")
        hi = next(p for p in g.pieces if p.name == "wall_upper")
        lt = geo.effective_neck_length(g.neck)
        assert lo.arclength == pytest.approx(lt, rel=1e-9)
        assert hi.arclength == pytest.approx(lt, rel=1e-9)


class TestHeadOnly:
    def test_robin_arc_length_exact(self):
        g = geo.build_head_only(1.0, 0.1, 1.0, 0.5)
        robin = [p for p in g.pieces if p.kind == "robin"]
        assert len(robin) == 1
        assert robin[0].arclength == pytest.approx(0.2, abs=1e-15)

    def test_area_is_disk(self):
        g = geo.build_head_only(2.0, 0.1, 1.0, 0.5)
        assert g.area() == pytest.approx(4 * math.pi, rel=1e-12)

    def test_closure(self):
        g = geo.build_head_only(1.0, 0.1, 1.0, 0.5)
        pieces = g.pieces
        for a, b in zip(pieces, pieces[1:] + pieces[:1]):
            gap = np.hypot(*(a.polyline[-1] - b.polyline[0]))
            assert gap <= 1e-12


class TestNeckOnly:
    def test_rectangle(self):
        g = geo.build_neck_only(1.0, 0.1)
        assert g.area() == pytest.approx(0.2, abs=1e-15)
        names = {p.name: p.kind for p in g.pieces}
        assert names["end_cap"] == "absorbing"
        assert names["closed_end"] == "reflecting"

    def test_locate(self):
        g = geo.build_neck_only(1.0, 0.1)
        assert g.locate((0.5, 0.0))[0] == "interior"
        assert g.locate((0.5, 0.2))[0] == "exterior"
        assert g.locate((1.0, 0.0))[0] == "boundary"


class TestValidation:
    def test_eps_larger_than_head_rejected(self):
        with pytest.raises(InvalidGeometry):
            geo.build_straight_spine(1.0, 1.2, 1.0)

    def test_negative_length_rejected(self):
        with pytest.raises(InvalidGeometry):
            geo.build_straight_spine(1.0, 0.1, -1.0)

    def test_curved_needs_wide_arcs(self):
        with pytest.raises(InvalidGeometry):
            geo.build_curved_spine(1.0, 0.3, 1.0, 0.2, 0.9)


class TestConfig:
    def test_straight_roundtrip(self):
        cfg = geo.parse_config(
            "head_radius = 1.0\neps = 0.1\nneck = straight\nL = 2.0\n")
        g = geo.geometry_from_config(cfg)
        assert g.mode == "spine"
        assert g.neck.total_length == pytest.approx(2.0)

    def test_curved(self):
        cfg = geo.parse_config(
            "head_radius=1\neps=0.05\nneck=curved\nl=1\nr1=0.7\nr2=0.9\n")
        g = geo.geometry_from_config(cfg)
        assert g.neck.kind == "curved"

    def test_head_only_via_alpha(self):
        cfg = geo.parse_config("head_radius=1\neps=0.1\nalpha=1\nbeta=0.5\n")
        g = geo.geometry_from_config(cfg)
        assert g.mode == "head_only"

    def test_comments_and_blanks(self):
        cfg = geo.parse_config("# a comment\n\nhead_radius=1\neps=0.1\n"
                               "neck=straight\nL=1\n")
        assert cfg["head_radius"] == "1"
        assert geo.geometry_from_config(cfg).mode == "spine"

    def test_unknown_key_rejected(self):
        with pytest.raises(ValueError):
            geo.parse_config("bogus_key=3\n")


class TestExport:
    def test_polyline_csv(self, tmp_path):
        g = geo.build_straight_spine(1.0, 0.1, 1.0)
        path = tmp_path / "loop.csv"
        g.export_polyline_csv(path)
        lines = path.read_text().strip().split("\n")
        assert lines[0] == "x,y,piece_kind"
        assert any("absorbing" in ln for ln in lines[1:])
        assert len(lines) > 100

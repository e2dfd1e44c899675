"""Tests for the reflected Brownian walk estimator.

Statistical assertions use 3x the combined standard error, so each has a
~0.3% false-failure rate per seed; seeds are pinned to known-good values.
The pure neck (closed end at x=0, absorbing cap at x=L) has exact mean
exit time L^2/2 - x^2/2 from x, which anchors the quantitative checks.
"""

import csv
import math

import numpy as np
import pytest

import spinemfpt.geometry as geo
import spinemfpt.kernels as kernels
import spinemfpt.montecarlo as mc
from spinemfpt.fem import OutsideDomain

JIT = kernels.USE_NUMBA
slow_lane = pytest.mark.skipif(
    not JIT, reason="ensemble too large for the fallback lane")


@pytest.fixture(scope="module")
def neck():
    return geo.build_neck_only(1.0, 0.1)


@pytest.fixture(scope="module")
def spine():
    return geo.build_straight_spine(1.0, 0.1, 1.0)


def combined(a, b):
    return math.hypot(a.stderr, b.stderr)


class TestWalkConfig:
    def test_defaults(self):
        cfg = mc.WalkConfig(dt=1e-4, walkers=1000)
        assert cfg.seed == 2026
        assert cfg.horizon == 10 ** 9 // 1000
        assert cfg.antithetic is False

    def test_explicit_horizon(self):
        cfg = mc.WalkConfig(dt=1e-4, walkers=10, max_steps=123)
        assert cfg.horizon == 123

    def test_rejects_bad_dt(self):
        with pytest.raises(ValueError, match="dt"):
            mc.WalkConfig(dt=0.0, walkers=10)
        with pytest.raises(ValueError, match="dt"):
            mc.WalkConfig(dt=-1e-4, walkers=10)

    def test_rejects_bad_walkers(self):
        with pytest.raises(ValueError, match="walkers"):
            mc.WalkConfig(dt=1e-4, walkers=0)

    def test_rejects_bad_max_steps(self):
        with pytest.raises(ValueError, match="max_steps"):
            mc.WalkConfig(dt=1e-4, walkers=10, max_steps=0)

    def test_step_guard(self, neck):
        cfg = mc.WalkConfig(dt=1e-3, walkers=10, start=(0.5, 0.0))
        with pytest.raises(mc.StepTooLarge, match="eps/4"):
            mc.simulate_mfpt(neck, cfg)

    def test_flagged_threshold(self):
        assert mc.MfptEstimate(1.0, 0.1, 999, 1).flagged
        assert not mc.MfptEstimate(1.0, 0.1, 9999, 0).flagged


class TestDomainTables:
    def test_neck_primitives(self, neck):
        prims = mc.domain_primitives(neck)
        assert prims.shape == (4, 8)
        assert np.all(prims[:, 0] == 0.0)
        assert int((prims[:, 1] == 1.0).sum()) == 1

    def test_straight_spine_primitives(self, spine):
        prims = mc.domain_primitives(spine)
        # head arc + two wall segments + absorbing cap
        assert prims.shape == (4, 8)
        assert int((prims[:, 0] == 1.0).sum()) == 1
        assert int((prims[:, 1] == 1.0).sum()) == 1
        cap = prims[prims[:, 1] == 1.0][0]
        assert cap[0] == 0.0
        assert cap[2] == pytest.approx(spine.x_wall + 1.0)

    def test_curved_spine_primitives(self):
        g = geo.build_curved_spine(1.0, 0.1, 1.0, 0.7, 0.9)
        prims = mc.domain_primitives(g)
        # head arc + 2 lead-in walls + 2 arcs per bend + cap
        assert prims.shape == (8, 8)
        assert int((prims[:, 0] == 1.0).sum()) == 5
        assert int((prims[:, 1] == 1.0).sum()) == 1

    def test_regions(self, neck, spine):
        assert mc.domain_regions(neck).shape == (1, 7)
        assert mc.domain_regions(spine).shape == (2, 7)
        g = geo.build_curved_spine(1.0, 0.1, 1.0, 0.7, 0.9)
        regions = mc.domain_regions(g)
        assert regions.shape == (4, 7)
        assert sorted(regions[:, 0]) == [0.0, 1.0, 2.0, 2.0]

    def test_head_only_rejected(self):
        g = geo.build_head_only(1.0, 0.1, 1.0, 0.5)
        with pytest.raises(ValueError, match="absorbing"):
            mc.domain_primitives(g)
        with pytest.raises(ValueError, match="absorbing"):
            mc.domain_regions(g)


class TestStartValidation:
    def test_single_start_required(self, neck):
        cfg = mc.WalkConfig(dt=1e-4, walkers=5,
                            start=[(0.5, 0.0), (0.6, 0.0)], max_steps=100)
        with pytest.raises(ValueError, match="simulate_field"):
            mc.simulate_mfpt(neck, cfg)

    def test_exterior_start(self, neck):
        cfg = mc.WalkConfig(dt=1e-4, walkers=5, start=(5.0, 5.0),
                            max_steps=100)
        with pytest.raises(OutsideDomain, match="not interior"):
            mc.simulate_mfpt(neck, cfg)

    def test_absorbing_boundary_start(self, neck):
        cfg = mc.WalkConfig(dt=1e-4, walkers=5, start=(1.0, 0.0),
                            max_steps=100)
        with pytest.raises(OutsideDomain):
            mc.simulate_mfpt(neck, cfg)

    def test_field_reports_offending_index(self, neck):
        cfg = mc.WalkConfig(dt=1e-4, walkers=5,
                            start=[(0.5, 0.0), (5.0, 5.0)], max_steps=100)
        with pytest.raises(OutsideDomain, match="start 1"):
            mc.simulate_field(neck, cfg)

    def test_reflecting_boundary_start_is_nudged(self, neck):
        # the closed end is legal: the walk starts a hair inside
        cfg = mc.WalkConfig(dt=1e-4, walkers=40, seed=5, start=(0.0, 0.0),
                            max_steps=200_000)
        est = mc.simulate_mfpt(neck, cfg)
        assert est.n_absorbed == 40


class TestNeckBenchmark:
    def test_mean_matches_closed_form(self, neck):
        n = 600
        cfg = mc.WalkConfig(dt=1e-4, walkers=n, seed=7, start=(0.0, 0.0),
                            max_steps=500_000)
        est = mc.simulate_mfpt(neck, cfg)
        assert est.n_absorbed == n
        assert est.n_censored == 0
        assert not est.flagged
        # exit time from the closed end: mean 1/2, variance 1/6
        sigma = math.sqrt(1.0 / 6.0)
        assert abs(est.mean - 0.5) <= 3.0 * sigma / math.sqrt(n)
        assert 0.7 * sigma / math.sqrt(n) <= est.stderr \
            <= 1.3 * sigma / math.sqrt(n)

    def test_interior_start_quadratic_profile(self, neck):
        n = 600
        cfg = mc.WalkConfig(dt=1e-4, walkers=n, seed=9, start=(0.6, 0.0),
                            max_steps=500_000)
        est = mc.simulate_mfpt(neck, cfg)
        exact = 0.5 * (1.0 - 0.6 ** 2)
        assert abs(est.mean - exact) <= 3.0 * est.stderr + 1e-3

    @slow_lane
    def test_halving_dt_keeps_estimate(self, neck):
        base = dict(walkers=1500, start=(0.0, 0.0), max_steps=1_000_000)
        a = mc.simulate_mfpt(neck, mc.WalkConfig(dt=1e-4, seed=21, **base))
        b = mc.simulate_mfpt(neck, mc.WalkConfig(dt=5e-5, seed=22, **base))
        assert abs(a.mean - b.mean) <= 3.0 * combined(a, b)

    def test_mirrored_starts_agree(self, neck):
        base = dict(dt=1e-4, walkers=400, max_steps=500_000)
        a = mc.simulate_mfpt(neck, mc.WalkConfig(seed=31, start=(0.3, 0.05),
                                                 **base))
        b = mc.simulate_mfpt(neck, mc.WalkConfig(seed=32, start=(0.3, -0.05),
                                                 **base))
        assert abs(a.mean - b.mean) <= 3.0 * combined(a, b)


class TestDeterminism:
    def test_bitwise_replay(self, neck):
        cfg = mc.WalkConfig(dt=1e-4, walkers=500, seed=3, start=(0.2, 0.0),
                            max_steps=500_000)
        a = mc.simulate_mfpt(neck, cfg)
        b = mc.simulate_mfpt(neck, cfg)
        assert a == b

    def test_seed_changes_estimate(self, neck):
        base = dict(dt=1e-4, walkers=200, start=(0.2, 0.0),
                    max_steps=500_000)
        a = mc.simulate_mfpt(neck, mc.WalkConfig(seed=1, **base))
        b = mc.simulate_mfpt(neck, mc.WalkConfig(seed=2, **base))
        assert a.mean != b.mean

    def test_field_entry_matches_single_run(self, neck):
        base = dict(dt=1e-4, walkers=150, seed=17, max_steps=500_000)
        field = mc.simulate_field(
            neck, mc.WalkConfig(start=[(0.4, 0.0), (0.4, 0.0)], **base))
        single = mc.simulate_mfpt(
            neck, mc.WalkConfig(start=(0.4, 0.0), **base))
        # index 0 shares the stream of a single-start run ...
        assert field[0][1] == single
        # ... and index 1 draws an independent stream
        assert field[1][1].mean != field[0][1].mean
        assert abs(field[1][1].mean - field[0][1].mean) \
            <= 3.0 * combined(field[1][1], field[0][1])

    def test_antithetic_replay_and_accuracy(self, neck):
        cfg = mc.WalkConfig(dt=1e-4, walkers=601, seed=13, start=(0.0, 0.0),
                            max_steps=500_000, antithetic=True)
        a = mc.simulate_mfpt(neck, cfg)
        assert a == mc.simulate_mfpt(neck, cfg)
        assert a.n_absorbed == 601
        assert abs(a.mean - 0.5) <= 3.0 * a.stderr + 1e-3


class TestLanes:
    def test_cross_lane_agreement(self, neck):
        cfg = mc.WalkConfig(dt=1e-4, walkers=250, seed=7, start=(0.0, 0.0),
                            max_steps=500_000)
        a = mc.simulate_mfpt(neck, cfg, use_numba=False)
        assert abs(a.mean - 0.5) <= 3.0 * a.stderr + 1e-3
        if JIT:
            b = mc.simulate_mfpt(neck, cfg, use_numba=True)
            assert abs(a.mean - b.mean) <= 3.0 * combined(a, b)

    def test_fallback_replay(self, neck):
        cfg = mc.WalkConfig(dt=1e-4, walkers=60, seed=4, start=(0.3, 0.0),
                            max_steps=500_000)
        a = mc.simulate_mfpt(neck, cfg, use_numba=False)
        b = mc.simulate_mfpt(neck, cfg, use_numba=False)
        assert a == b


class TestCensoring:
    def test_short_horizon_counts_and_flags(self, neck):
        cfg = mc.WalkConfig(dt=1e-4, walkers=300, seed=41, start=(0.0, 0.0),
                            max_steps=2000)
        est = mc.simulate_mfpt(neck, cfg)
        assert est.n_absorbed + est.n_censored == 300
        assert est.n_censored > 0
        assert est.flagged
        # censored walkers are excluded: surviving times fit the horizon
        assert est.mean <= 2000 * 1e-4 + 1e-4

    def test_all_censored_gives_nan(self, neck):
        cfg = mc.WalkConfig(dt=1e-4, walkers=20, seed=41, start=(0.0, 0.0),
                            max_steps=5)
        est = mc.simulate_mfpt(neck, cfg)
        assert est.n_absorbed == 0
        assert est.n_censored == 20
        assert math.isnan(est.mean) and math.isnan(est.stderr)


class TestEstimateStatistics:
    def test_stderr_is_sample_std_over_sqrt_n(self, neck):
        n = 80
        cfg = mc.WalkConfig(dt=1e-4, walkers=n, seed=6, start=(0.0, 0.0),
                            max_steps=500_000)
        est = mc.simulate_mfpt(neck, cfg)
        prims = mc.domain_primitives(neck)
        regions = mc.domain_regions(neck)
        keys, signs = mc._streams(cfg.seed, 0, n, False)
        times = np.empty(n)
        absorbed = np.zeros(n, dtype=np.int64)
        impl = kernels.mc_walk if JIT else kernels.mc_walk_np
        start = mc._resolve_start(neck, (0.0, 0.0))
        impl(prims, regions, start[0], start[1], cfg.dt, cfg.horizon,
             keys, signs, times, absorbed)
        hit = times[absorbed == 1]
        assert est.mean == pytest.approx(hit.mean(), rel=0, abs=0)
        assert est.stderr == pytest.approx(
            hit.std(ddof=1) / math.sqrt(hit.size), rel=0, abs=0)

    def test_absorption_time_credited_at_crossing(self, neck):
        n = 120
        cfg = mc.WalkConfig(dt=1e-4, walkers=n, seed=6, start=(0.8, 0.0),
                            max_steps=500_000)
        prims = mc.domain_primitives(neck)
        regions = mc.domain_regions(neck)
        keys, signs = mc._streams(cfg.seed, 0, n, False)
        times = np.empty(n)
        absorbed = np.zeros(n, dtype=np.int64)
        impl = kernels.mc_walk if JIT else kernels.mc_walk_np
        impl(prims, regions, 0.8, 0.0, cfg.dt, cfg.horizon,
             keys, signs, times, absorbed)
        assert np.all(absorbed == 1)
        assert np.all(times > 0.0)
        frac = (times / cfg.dt) % 1.0
        # exit times carry the sub-step crossing fraction
        assert np.count_nonzero((frac > 1e-9) & (frac < 1.0 - 1e-9)) > n // 2


@slow_lane
class TestHeadField:
    def test_grid_monotone_toward_window(self, spine):
        pts = [(x, y) for x in (-0.6, -0.3, 0.0, 0.3, 0.6)
               for y in (-0.6, -0.3, 0.0, 0.3, 0.6)]
        cfg = mc.WalkConfig(dt=2e-4, walkers=120, seed=19, start=pts,
                            max_steps=3_000_000)
        field = mc.simulate_field(spine, cfg)
        window = np.array([spine.x_wall, 0.0])
        for (p, ep), (q, eq) in (
                (a, b) for a in field for b in field if a is not b):
            dp = np.hypot(*(np.array(p) - window))
            dq = np.hypot(*(np.array(q) - window))
            if dp < dq - 1e-12:
                assert ep.mean <= eq.mean + 3.0 * combined(ep, eq)


class TestCsv:
    def test_round_trip(self, tmp_path):
        items = [((0.1, -0.2), mc.MfptEstimate(1.5, 0.25, 100, 0)),
                 ((0.3, 0.4), mc.MfptEstimate(2.5, 0.5, 99, 1))]
        path = tmp_path / "field.csv"
        mc.estimates_to_csv(items, path)
        with open(path) as f:
            rows = list(csv.DictReader(f))
        assert list(rows[0]) == ["x", "y", "mfpt", "stderr",
                                 "n_absorbed", "n_censored"]
        for row, ((x, y), est) in zip(rows, items):
            assert float(row["x"]) == pytest.approx(x, rel=1e-8)
            assert float(row["mfpt"]) == pytest.approx(est.mean, rel=1e-8)
            assert int(row["n_absorbed"]) == est.n_absorbed
            assert int(row["n_censored"]) == est.n_censored

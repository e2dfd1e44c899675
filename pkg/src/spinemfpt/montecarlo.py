"""Reflected Brownian motion estimates of the mean first passage time.

Walkers follow the Euler scheme X_{n+1} = X_n + sqrt(2 dt) G_n with G_n a
standard 2D Gaussian.  The increment variance is 2*dt per coordinate, so
the expected exit time solves Delta u = -1 (not (1/2) Delta u = -1); both
conventions appear in the literature and this one matches the solver and
closed-form modules.  Reflecting boundary pieces act by specular (mirror)
reflection of the straight sub-step, absorption is detected by crossing
the straight sub-step against the absorbing pieces (not endpoint tests),
and the absorption time is credited at the crossing fraction of the step.

Randomness is a counter-based splitmix64 stream per walker, derived from
(seed, start index, walker index), so serial and parallel execution give
identical results and every estimate replays bitwise for a fixed config.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .fem import OutsideDomain
from .geometry import SpineGeometry, centerline_pieces, neck_point

__all__ = [
    "WalkConfig",
    "MfptEstimate",
    "StepTooLarge",
    "simulate_mfpt",
    "simulate_field",
    "domain_primitives",
    "domain_regions",
    "estimates_to_csv",
]


class StepTooLarge(ValueError):
    """The time step does not resolve the absorbing window."""


@dataclass(frozen=True)
class WalkConfig:
    """Parameters of a walker ensemble.

    Parameters
    ----------
    dt : float
        Time step; sqrt(2 dt) must stay below eps/4.
    walkers : int
        Ensemble size N.
    seed : int
        64-bit stream seed.
    max_steps : int, optional
        Censoring horizon per walker; defaults to 10**9 // walkers.
    start : point or (k, 2) array, optional
        Interior start point (simulate_mfpt) or grid (simulate_field).
    antithetic : bool
        Pair consecutive walkers on one stream with mirrored increments.
    """

    dt: float
    walkers: int
    seed: int = 2026
    max_steps: int | None = None
    start: object = None
    antithetic: bool = False

    def __post_init__(self):
        if not self.dt > 0.0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.walkers < 1:
            raise ValueError(f"walkers must be >= 1, got {self.walkers}")
        if self.max_steps is not None and self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")

    @property
    def horizon(self) -> int:
        """Effective per-walker step cap."""
        if self.max_steps is not None:
            return int(self.max_steps)
        return max(1, 10 ** 9 // int(self.walkers))


@dataclass(frozen=True)
class MfptEstimate:
    """Sample mean exit time with its statistical error.

    stderr is sample_std / sqrt(n_absorbed); censored walkers are counted
    but excluded from the mean.
    """

    mean: float
    stderr: float
    n_absorbed: int
    n_censored: int

    @property
    def flagged(self) -> bool:
        """True when censoring exceeds 0.1% of the ensemble."""
        total = self.n_absorbed + self.n_censored
        return total > 0 and self.n_censored >= 1e-3 * total


def _segment(ax, ay, bx, by, tag):
    return [0.0, float(tag), ax, ay, bx, by, 0.0, 0.0]


def _arc(cx, cy, r, a0, da, tag):
    return [1.0, float(tag), cx, cy, r, a0, da, 0.0]


def domain_primitives(g: SpineGeometry) -> np.ndarray:
    """Boundary of the domain as analytic pieces for the walk kernels.

    Rows are [type, tag, ...]: type 0 segment (ax, ay, bx, by), type 1
    circular arc (cx, cy, r, a0, da) spanning angles [a0, a0 + da]; tag 0
    reflects, tag 1 absorbs.  Coordinates are absolute.
    """
    eps = g.eps
    rows = []
    if g.mode == "neck_only":
        L = g.neck.length
        rows.append(_segment(0.0, -eps, 0.0, eps, 0))
        rows.append(_segment(0.0, -eps, L, -eps, 0))
        rows.append(_segment(L, -eps, L, eps, 1))
        rows.append(_segment(0.0, eps, L, eps, 0))
    elif g.mode == "spine":
        cx, cy = g.head.center
        R = g.head.radius
        x_w = g.x_wall
        phi = math.atan2(eps, x_w)
        rows.append(_arc(cx, cy, R, phi, 2.0 * math.pi - 2.0 * phi, 0))
        pieces = centerline_pieces(g.neck, (x_w, 0.0))
        for pc in pieces:
            if pc["type"] == "line":
                for t in (-eps, eps):
                    a = neck_point(pieces, pc["s0"], t)
                    b = neck_point(pieces, pc["s1"], t)
                    rows.append(_segment(a[0] + cx, a[1] + cy,
                                         b[0] + cx, b[1] + cy, 0))
            else:
                theta = (pc["s1"] - pc["s0"]) / pc["radius"]
                a0 = pc["phi0"] if pc["sense"] > 0.0 else pc["phi0"] - theta
                # walls flank the centerline arc at radii r -+ eps
                for rr in (pc["radius"] - eps, pc["radius"] + eps):
                    rows.append(_arc(pc["center"][0] + cx,
                                     pc["center"][1] + cy, rr, a0, theta, 0))
        s_end = pieces[-1]["s1"]
        a = neck_point(pieces, s_end, -eps)
        b = neck_point(pieces, s_end, eps)
        rows.append(_segment(a[0] + cx, a[1] + cy, b[0] + cx, b[1] + cy, 1))
    else:
        raise ValueError(
            f"{g.mode!r} domain has no absorbing boundary to walk to")
    return np.array(rows, dtype=np.float64)


def domain_regions(g: SpineGeometry) -> np.ndarray:
    """Domain as a union of containment regions for the leak backstop.

    Rows: [0, cx, cy, R] disk; [1, ox, oy, ux, uy, length, eps] straight
    strip; [2, cx, cy, r, a0, da, eps] annular strip.  A reflected move
    whose endpoint leaves the union (a crossing root lost to rounding)
    is rejected and redrawn by the walk kernels.
    """
    eps = g.eps
    rows = []
    if g.mode == "neck_only":
        rows.append([1.0, 0.0, 0.0, 1.0, 0.0, g.neck.length, eps])
    elif g.mode == "spine":
        cx, cy = g.head.center
        rows.append([0.0, cx, cy, g.head.radius, 0.0, 0.0, 0.0])
        pieces = centerline_pieces(g.neck, (g.x_wall, 0.0))
        for pc in pieces:
            if pc["type"] == "line":
                ux, uy = pc["direction"]
                rows.append([1.0, pc["origin"][0] + cx, pc["origin"][1] + cy,
                             ux, uy, pc["s1"] - pc["s0"], eps])
            else:
                theta = (pc["s1"] - pc["s0"]) / pc["radius"]
                a0 = pc["phi0"] if pc["sense"] > 0.0 else pc["phi0"] - theta
                rows.append([2.0, pc["center"][0] + cx, pc["center"][1] + cy,
                             pc["radius"], a0, theta, eps])
    else:
        raise ValueError(
            f"{g.mode!r} domain has no absorbing boundary to walk to")
    out = np.zeros((len(rows), 7))
    for i, r in enumerate(rows):
        out[i, : len(r)] = r
    return out


def _streams(seed, start_index, n, antithetic):
    if antithetic:
        half = (n + 1) // 2
        base = kernels.stream_key_np(seed, start_index,
                                     np.arange(half, dtype=np.uint64))
        keys = np.repeat(base, 2)[:n]
        signs = np.where(np.arange(n) % 2 == 0, 1.0, -1.0)
    else:
        keys = kernels.stream_key_np(seed, start_index,
                                     np.arange(n, dtype=np.uint64))
        signs = np.ones(n)
    return np.ascontiguousarray(keys, dtype=np.uint64), signs


def _run(prims, regions, start, cfg: WalkConfig, start_index: int,
         use_numba) -> MfptEstimate:
    n = int(cfg.walkers)
    keys, signs = _streams(cfg.seed, start_index, n, cfg.antithetic)
    times = np.empty(n)
    absorbed = np.zeros(n, dtype=np.int64)
    lane = kernels.USE_NUMBA if use_numba is None else use_numba
    impl = kernels.mc_walk if lane else kernels.mc_walk_np
    with np.errstate(over="ignore"):  # splitmix64 wraps uint64 by design
        impl(prims, regions, float(start[0]), float(start[1]), float(cfg.dt),
             cfg.horizon, keys, signs, times, absorbed)
    hit = times[absorbed == 1]
    n_abs = int(hit.size)
    n_cen = n - n_abs
    if n_abs == 0:
        return MfptEstimate(float("nan"), float("nan"), 0, n_cen)
    mean = float(hit.mean())
    sd = float(hit.std(ddof=1)) if n_abs > 1 else float("inf")
    return MfptEstimate(mean, sd / math.sqrt(n_abs), n_abs, n_cen)


def _check_step(g: SpineGeometry, cfg: WalkConfig) -> None:
    step = math.sqrt(2.0 * cfg.dt)
    if step >= g.eps / 4.0:
        raise StepTooLarge(
            f"rms step {step:.3g} must be < eps/4 = {g.eps / 4.0:.3g}; "
            "reduce dt")


def _resolve_start(g: SpineGeometry, p, index=None) -> np.ndarray:
    """Validate a start point, nudging reflecting-boundary starts inward.

    The exit time extends continuously onto the reflecting boundary, so a
    start there (e.g. the closed end of a bare neck) is legal; it is
    shifted inside by ~1e-6*eps, far below statistical resolution.
    """
    p = np.asarray(p, dtype=float)
    kind, name = g.locate(p)
    if kind == "interior":
        return p
    if kind == "boundary":
        piece = next(pc for pc in g.pieces if pc.name == name)
        if piece.kind == "reflecting":
            poly = piece.polyline
            seg = poly[1:] - poly[:-1]
            t = np.einsum("ij,ij->i", p - poly[:-1], seg) \
                / np.einsum("ij,ij->i", seg, seg)
            foot = poly[:-1] + np.clip(t, 0.0, 1.0)[:, None] * seg
            k = int(np.argmin(np.hypot(*(foot - p).T)))
            n_hat = np.array([-seg[k, 1], seg[k, 0]])
            n_hat /= np.hypot(*n_hat)
            for delta in (1e-6 * g.eps, 1e-5 * g.eps):
                for q in (p + delta * n_hat, p - delta * n_hat):
                    if g.locate(q)[0] == "interior":
                        return q
    where = "" if index is None else f"start {index} "
    raise OutsideDomain(
        f"{where}at ({p[0]:.6g}, {p[1]:.6g}) is {kind}, not interior")


def simulate_mfpt(g: SpineGeometry, cfg: WalkConfig,
                  use_numba: bool | None = None) -> MfptEstimate:
    """Estimate the mean exit time from a single interior start point."""
    _check_step(g, cfg)
    start = np.asarray(cfg.start, dtype=float)
    if start.shape != (2,):
        raise ValueError(
            "simulate_mfpt expects a single (x, y) start; "
            "use simulate_field for a grid of starts")
    start = _resolve_start(g, start)
    return _run(domain_primitives(g), domain_regions(g), start, cfg, 0,
                use_numba)


def simulate_field(g: SpineGeometry, cfg: WalkConfig,
                   use_numba: bool | None = None):
    """Independent estimates for a grid of starts.

    Walker streams are derived from (seed, start index, walker index), so
    each entry matches a single-start run with that start index.
    """
    _check_step(g, cfg)
    starts = np.asarray(cfg.start, dtype=float)
    if starts.ndim == 1:
        starts = starts[None, :]
    if starts.ndim != 2 or starts.shape[1] != 2:
        raise ValueError("start grid must be a (k, 2) array of points")
    resolved = [_resolve_start(g, p, index=i) for i, p in enumerate(starts)]
    prims = domain_primitives(g)
    regions = domain_regions(g)
    return [((float(p[0]), float(p[1])),
             _run(prims, regions, q, cfg, i, use_numba))
            for i, (p, q) in enumerate(zip(starts, resolved))]


def estimates_to_csv(items, path) -> None:
    """Write (point, estimate) rows as x,y,mfpt,stderr,n_absorbed,n_censored."""
    with open(path, "w") as f:
        f.write("x,y,mfpt,stderr,n_absorbed,n_censored\n")
        for (x, y), est in items:
            f.write(f"{x:.9g},{y:.9g},{est.mean:.9g},{est.stderr:.9g},"
                    f"{est.n_absorbed},{est.n_censored}\n")

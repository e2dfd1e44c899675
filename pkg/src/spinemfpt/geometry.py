"""Spine-shaped escape domains: a disk head joined to a thin neck.

A domain is assembled from a disk head of radius R and a neck of half-width
eps whose centerline starts at the rightmost point of the head, x* = center +
(R, 0).  The neck walls y = +-eps meet the circle at the junction corners
W+- = (x_w, +-eps) with x_w = sqrt(R^2 - eps^2); the neck occupies the offset
band of its centerline from the junction chord x = x_w to the absorbing end
cap, which has width exactly 2*eps.  The thin lens between the chord and the
circle belongs to both pieces geometrically and is counted once: area =
pi R^2 + 2 eps L - A_seg with A_seg the circular segment beyond the chord.

Head-only mode drops the neck and replaces it with a Robin arc of arclength
exactly 2*eps centered at x*.  Neck-only mode is the bare rectangle
[0, L] x (-eps, eps) used as a 1D sanity domain.

All constructions are immutable after building; coordinates are
dimensionless.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class InvalidGeometry(ValueError):
    """Raised when requested dimensions violate the thin-neck regime."""


# default chord-error resolution for polyline discretizations of curved
# boundary pieces (locate(), export); arcs are sampled so that the chord
# deviation stays below ~(R/512)^2 / (8 r)
H_GEO_FACTOR = 1.0 / 512.0

_BOUNDARY_BAND = 1e-9


@dataclass(frozen=True)
class HeadSpec:
    """Disk head: center and radius."""

    center: tuple[float, float]
    radius: float

    def __post_init__(self):
        if self.radius <= 0.0:
            raise InvalidGeometry(f"head radius must be positive, got {self.radius}")

    @property
    def area(self) -> float:
        return math.pi * self.radius ** 2


@dataclass(frozen=True)
class NeckSpec:
    """Neck description: straight {length} or curved {l, r1, r2, angles}.

    half_width is eps.  For curved necks the channel is a straight
    lead-in of length l, a left turn through theta1, then a right turn
    through theta2 (the S shape); r1 and r2 are the radii of the wall
    arcs on each turn's inner side, so the centerline runs at radius
    r + eps.  The nominal length L = l + theta1*r1 + theta2*r2 measures
    along those stated arcs; the centerline is longer by exactly
    eps*(theta1 + theta2), which is the effective length the
    one-dimensional neck reduction uses.
    """

    kind: str  # 'straight' | 'curved'
    half_width: float
    length: float = 0.0  # straight necks
    lead_in: float = 0.0  # curved necks: l
    r1: float = 0.0
    r2: float = 0.0
    theta1: float = math.pi / 2.0
    theta2: float = math.pi / 2.0

    def __post_init__(self):
        if self.half_width <= 0.0:
            raise InvalidGeometry("neck half-width must be positive")
        if self.kind == "straight":
            if self.length <= 0.0:
                raise InvalidGeometry("straight neck needs positive length")
        elif self.kind == "curved":
            if self.r1 <= 0.0 or self.r2 <= 0.0 or self.lead_in < 0.0:
                raise InvalidGeometry("curved neck needs positive radii, l >= 0")
            if self.half_width >= min(self.r1, self.r2):
                raise InvalidGeometry(
                    f"half-width {self.half_width} >= min arc radius "
                    f"{min(self.r1, self.r2)}: turn too sharp for a "
                    "thin channel")
        else:
            raise InvalidGeometry(f"unknown neck kind {self.kind!r}")

    @property
    def arc_length(self) -> float:
        if self.kind == "straight":
            return 0.0
        return self.theta1 * self.r1 + self.theta2 * self.r2

    @property
    def total_length(self) -> float:
        """Nominal neck length L, measured along the stated arcs.

        For curved necks the stated radii are the inner-side wall arcs,
        so this is shorter than the centerline by eps*(theta1+theta2).
        """
        if self.kind == "straight":
            return self.length
        return self.lead_in + self.arc_length


@dataclass(frozen=True)
class BoundaryPiece:
    """One tagged boundary segment with a polyline discretization.

    kind is 'reflecting', 'absorbing', or 'robin' (with alpha, beta).
    The polyline is oriented along the boundary loop (interior on the
    left); arclength holds the analytic length of the true curve.
    """

    name: str
    kind: str
    polyline: np.ndarray
    arclength: float
    alpha: float = 0.0
    beta: float = 0.0

    def __post_init__(self):
        if self.kind == "robin" and self.alpha <= 0.0:
            raise InvalidGeometry("Robin piece needs alpha > 0")

    def point_at(self, s: float) -> np.ndarray:
        """Point at arclength s along the polyline (chord parametrization)."""
        seg = np.diff(self.polyline, axis=0)
        lens = np.hypot(seg[:, 0], seg[:, 1])
        cum = np.concatenate(([0.0], np.cumsum(lens)))
        s = min(max(s, 0.0), cum[-1])
        i = min(int(np.searchsorted(cum, s, side="right")) - 1, len(lens) - 1)
        w = 0.0 if lens[i] == 0.0 else (s - cum[i]) / lens[i]
        return self.polyline[i] + w * seg[i]


@dataclass(frozen=True)
class SpineGeometry:
    """Full escape domain with its boundary decomposition.

    mode is 'spine' (absorbing neck end), 'head_only' (Robin window), or
    'neck_only' (bare rectangle).  pieces traverse the boundary
    counterclockwise and close into a single loop.
    """

    mode: str
    head: HeadSpec | None
    neck: NeckSpec | None
    gamma_center: tuple[float, float]
    pieces: tuple[BoundaryPiece, ...]
    x_wall: float = 0.0  # junction chord offset from head center (spine mode)
    _loop: np.ndarray = field(default=None, repr=False, compare=False)

    @property
    def eps(self) -> float:
        if self.neck is not None:
            return self.neck.half_width
        for p in self.pieces:
            if p.kind == "robin":
                return p.arclength / 2.0
        raise AttributeError("geometry has no window half-width")

    def area(self) -> float:
        """Domain area, analytic for disk+band compositions.

        For curved necks with lead-in shorter than eps the head/neck
        overlap is no longer the plain circular segment; the area then
        falls back to the polygon loop (shoelace), accurate to the
        polyline chord tolerance O((R * H_GEO_FACTOR)^2).
        """
        if self.mode == "neck_only":
            return 2.0 * self.neck.half_width * self.neck.total_length
        R = self.head.radius
        if self.mode == "head_only":
            return math.pi * R ** 2
        eps = self.neck.half_width
        if self.neck.kind == "curved" and self.neck.lead_in < eps:
            return self._polygon_area()
        phi = math.asin(eps / R)
        seg = 0.5 * R ** 2 * (2.0 * phi - math.sin(2.0 * phi))
        # band area of a constant-width channel = width * centerline length
        return math.pi * R ** 2 + 2.0 * eps * effective_neck_length(self.neck) - seg

    def head_area(self) -> float:
        if self.head is None:
            raise AttributeError("neck-only domain has no head")
        return self.head.area

    def boundary_length(self) -> float:
        return sum(p.arclength for p in self.pieces)

    def loop(self) -> np.ndarray:
        """Closed boundary polyline (first point not repeated)."""
        return self._loop

    def _polygon_area(self) -> float:
        pts = self._loop
        x, y = pts[:, 0], pts[:, 1]
        return 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))

    def locate(self, p) -> tuple[str, str | None]:
        """Classify a point: ('interior'|'boundary'|'exterior', piece name).

        Uses the winding number of the boundary polyline with a tolerance
        band of 1e-9 around it; points between the polyline and the true
        curved boundary are classified by the polyline.
        """
        p = np.asarray(p, dtype=float)
        for piece in self.pieces:
            if _dist_to_polyline(piece.polyline, p) <= _BOUNDARY_BAND:
                return "boundary", piece.name
        pts = self._loop
        a = pts - p
        b = np.roll(a, -1, axis=0)
        ang = np.arctan2(
            a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0],
            a[:, 0] * b[:, 0] + a[:, 1] * b[:, 1])
        winding = ang.sum() / (2.0 * math.pi)
        return ("interior" if abs(winding) > 0.5 else "exterior"), None

    def export_polyline_csv(self, path) -> None:
        """Write the boundary as CSV rows x,y,piece_kind."""
        with open(path, "w") as f:
            f.write("x,y,piece_kind\n")
            for piece in self.pieces:
                for x, y in piece.polyline:
                    f.write(f"{x:.12g},{y:.12g},{piece.kind}\n")


def _dist_to_polyline(poly: np.ndarray, p: np.ndarray) -> float:
    a = poly[:-1]
    d = poly[1:] - a
    t = np.einsum("ij,ij->i", p - a, d)
    L2 = np.einsum("ij,ij->i", d, d)
    t = np.clip(np.divide(t, L2, out=np.zeros_like(t), where=L2 > 0.0), 0.0, 1.0)
    proj = a + t[:, None] * d
    return float(np.min(np.hypot(*(p - proj).T)))


def _arc_points(center, radius, a0, a1, h):
    """Polyline along a circular arc from angle a0 to a1 (signed sweep)."""
    n = max(2, int(math.ceil(abs(a1 - a0) * radius / h)) + 1)
    ang = np.linspace(a0, a1, n)
    return np.column_stack([center[0] + radius * np.cos(ang),
                            center[1] + radius * np.sin(ang)])


# -- curved-neck centerline frame ------------------------------------------

def centerline_pieces(neck: NeckSpec, start: tuple[float, float]):
    """Analytic centerline description starting at `start`, heading +x.

    Returns a list of dicts with keys: type ('line'|'arc'), s0, s1 (arclength
    range), and for lines: origin, direction; for arcs: center, radius,
    phi0 (start polar angle), sense (+1 CCW / -1 CW).  The left normal at
    parameter s is used as the transverse axis; walls are t = +-eps offsets.

    The stated r1, r2 are the inner-side wall radii, so the centerline
    arcs run at r + half_width and the t = -+sense * half_width wall
    recovers the stated radius on each turn.
    """
    x0, y0 = start
    pieces = []
    s = 0.0
    if neck.kind == "straight":
        pieces.append({"type": "line", "s0": 0.0, "s1": neck.length,
                       "origin": (x0, y0), "direction": (1.0, 0.0)})
        return pieces
    if neck.lead_in > 0.0:
        pieces.append({"type": "line", "s0": 0.0, "s1": neck.lead_in,
                       "origin": (x0, y0), "direction": (1.0, 0.0)})
    s = neck.lead_in
    rc1 = neck.r1 + neck.half_width  # centerline radius over the inner wall
    rc2 = neck.r2 + neck.half_width
    p1 = (x0 + neck.lead_in, y0)
    c1 = (p1[0], p1[1] + rc1)  # left turn: center on the left
    pieces.append({"type": "arc", "s0": s, "s1": s + neck.theta1 * rc1,
                   "center": c1, "radius": rc1,
                   "phi0": -math.pi / 2.0, "sense": 1.0})
    s += neck.theta1 * rc1
    phi_end = -math.pi / 2.0 + neck.theta1
    p2 = (c1[0] + rc1 * math.cos(phi_end), c1[1] + rc1 * math.sin(phi_end))
    psi1 = neck.theta1  # heading after the first arc
    c2 = (p2[0] + rc2 * math.sin(psi1), p2[1] - rc2 * math.cos(psi1))
    pieces.append({"type": "arc", "s0": s, "s1": s + neck.theta2 * rc2,
                   "center": c2, "radius": rc2,
                   "phi0": psi1 + math.pi / 2.0, "sense": -1.0})
    return pieces


def neck_point(pieces, s: float, t: float) -> np.ndarray:
    """Map centerline coordinates (s, t) to the plane; t is the left offset."""
    for pc in pieces:
        if s <= pc["s1"] or pc is pieces[-1]:
            ds = s - pc["s0"]
            if pc["type"] == "line":
                ox, oy = pc["origin"]
                dx, dy = pc["direction"]
                return np.array([ox + ds * dx - t * dy, oy + ds * dy + t * dx])
            phi = pc["phi0"] + pc["sense"] * ds / pc["radius"]
            r_eff = pc["radius"] - pc["sense"] * t
            cx, cy = pc["center"]
            return np.array([cx + r_eff * math.cos(phi), cy + r_eff * math.sin(phi)])
    raise ValueError(f"s={s} outside centerline range")


def _wall_polyline(pieces, t: float, h: float) -> np.ndarray:
    """Offset polyline at transverse coordinate t, sampled at chord size h."""
    chunks = []
    for pc in pieces:
        if pc["type"] == "line":
            n = max(2, int(math.ceil((pc["s1"] - pc["s0"]) / h)) + 1)
            ss = np.linspace(pc["s0"], pc["s1"], n)
        else:
            r_eff = pc["radius"] - pc["sense"] * t
            n = max(2, int(math.ceil((pc["s1"] - pc["s0"]) / pc["radius"] * r_eff / h)) + 1)
            ss = np.linspace(pc["s0"], pc["s1"], n)
        pts = np.array([neck_point(pieces, s, t) for s in ss])
        chunks.append(pts if not chunks else pts[1:])
    return np.vstack(chunks)


def _wall_arclength(neck: NeckSpec, t: float) -> float:
    """Exact length of the offset wall at transverse coordinate t."""
    if neck.kind == "straight":
        return neck.length
    rc1 = neck.r1 + neck.half_width
    rc2 = neck.r2 + neck.half_width
    return (neck.lead_in + neck.theta1 * (rc1 - t)
            + neck.theta2 * (rc2 + t))


# -- constructors ------------------------------------------------------------


def _check_head_window(R: float, eps: float):
    if R <= 0.0 or eps <= 0.0:
        raise InvalidGeometry("dimensions must be positive")
    if eps >= R / 2.0:
        raise InvalidGeometry(
            f"eps={eps} outside thin-neck regime (needs eps < R/2 = {R / 2.0})")


def _spine_pieces(head: HeadSpec, neck: NeckSpec, h_geo: float):
    """Boundary loop for spine mode: head arc, lower wall, cap, upper wall."""
    R = head.radius
    eps = neck.half_width
    cx, cy = head.center
    x_w = math.sqrt(R ** 2 - eps ** 2)
    phi_h = math.asin(eps / R)
    cl = centerline_pieces(neck, (cx + x_w, cy))
    L = cl[-1]["s1"]  # full centerline length, curved necks exceed nominal L

    head_arc = _arc_points((cx, cy), R, phi_h, 2.0 * math.pi - phi_h, h_geo)
    # traverse CCW: head arc ends at W- = (x_w, -eps); walls run junction->cap
    lower = _wall_polyline(cl, -eps, h_geo)
    upper = _wall_polyline(cl, +eps, h_geo)
    end_lo = neck_point(cl, L, -eps)
    end_hi = neck_point(cl, L, +eps)
    cap = np.array([end_lo, end_hi])

    pieces = (
        BoundaryPiece("head_arc", "reflecting", head_arc,
                      R * (2.0 * math.pi - 2.0 * phi_h)),
        BoundaryPiece("wall_lower", "reflecting", lower,
                      _wall_arclength(neck, -eps)),
        BoundaryPiece("end_cap", "absorbing", cap, 2.0 * eps),
        BoundaryPiece("wall_upper", "reflecting", upper[::-1].copy(),
                      _wall_arclength(neck, +eps)),
    )
    return pieces, x_w


def _assemble(mode, head, neck, gamma_center, pieces, x_wall=0.0):
    loop = np.vstack([p.polyline[:-1] for p in pieces])
    return SpineGeometry(mode=mode, head=head, neck=neck,
                         gamma_center=gamma_center, pieces=pieces,
                         x_wall=x_wall, _loop=loop)


def build_straight_spine(R: float, eps: float, L: float,
                         center=(0.0, 0.0)) -> SpineGeometry:
    """Disk head of radius R with a straight neck of length L, width 2*eps.

    The absorbing cap sits at the far neck end; every other boundary piece
    reflects.  The neck axis leaves the head through x* = center + (R, 0).
    """
    _check_head_window(R, eps)
    if L <= 0.0:
        raise InvalidGeometry("neck length must be positive")
    head = HeadSpec(tuple(center), R)
    neck = NeckSpec("straight", eps, length=L)
    h_geo = R * H_GEO_FACTOR
    pieces, x_w = _spine_pieces(head, neck, h_geo)
    gamma = (center[0] + R, center[1])
    return _assemble("spine", head, neck, gamma, pieces, x_w)


def build_curved_spine(R: float, eps: float, l: float, r1: float, r2: float,
                       theta1: float = math.pi / 2.0,
                       theta2: float = math.pi / 2.0,
                       center=(0.0, 0.0)) -> SpineGeometry:
    """Disk head with an S-shaped neck: lead-in l, then a left turn and a
    right turn whose inner walls are arcs of radii r1 and r2.  Nominal
    neck length L = l + theta1*r1 + theta2*r2 along those stated arcs."""
    _check_head_window(R, eps)
    neck = NeckSpec("curved", eps, lead_in=l, r1=r1, r2=r2,
                    theta1=theta1, theta2=theta2)
    head = HeadSpec(tuple(center), R)
    h_geo = R * H_GEO_FACTOR
    pieces, x_w = _spine_pieces(head, neck, h_geo)
    gamma = (center[0] + R, center[1])
    return _assemble("spine", head, neck, gamma, pieces, x_w)


def build_head_only(R: float, eps: float, alpha: float, beta: float,
                    center=(0.0, 0.0)) -> SpineGeometry:
    """Disk with a Robin window: arc of arclength exactly 2*eps at x*."""
    _check_head_window(R, eps)
    if alpha <= 0.0:
        raise InvalidGeometry("Robin alpha must be positive")
    head = HeadSpec(tuple(center), R)
    h_geo = R * H_GEO_FACTOR
    phi_w = eps / R  # half-angle of the window arc: arclength 2*eps exactly
    cx, cy = center
    window = _arc_points((cx, cy), R, -phi_w, phi_w, h_geo)
    rest = _arc_points((cx, cy), R, phi_w, 2.0 * math.pi - phi_w, h_geo)
    pieces = (
        BoundaryPiece("robin_window", "robin", window, 2.0 * eps,
                      alpha=alpha, beta=beta),
        BoundaryPiece("head_arc", "reflecting", rest,
                      R * (2.0 * math.pi - 2.0 * phi_w)),
    )
    gamma = (cx + R, cy)
    return _assemble("head_only", head, None, gamma, pieces)


def build_neck_only(L: float, eps: float) -> SpineGeometry:
    """Bare neck rectangle [0, L] x (-eps, eps), absorbing at x = L.

    1D sanity domain: the exact MFPT from x is (L^2 - x^2)/2.
    """
    if L <= 0.0 or eps <= 0.0:
        raise InvalidGeometry("dimensions must be positive")
    neck = NeckSpec("straight", eps, length=L)
    pieces = (
        BoundaryPiece("closed_end", "reflecting",
                      np.array([[0.0, eps], [0.0, -eps]]), 2.0 * eps),
        BoundaryPiece("wall_lower", "reflecting",
                      np.array([[0.0, -eps], [L, -eps]]), L),
        BoundaryPiece("end_cap", "absorbing",
                      np.array([[L, -eps], [L, eps]]), 2.0 * eps),
        BoundaryPiece("wall_upper", "reflecting",
                      np.array([[L, eps], [0.0, eps]]), L),
    )
    return _assemble("neck_only", None, neck, (0.0, 0.0), pieces)


def effective_neck_length(neck: NeckSpec) -> float:
    """L-tilde = L + eps * integral of |curvature| along the stated arcs.

    The unsigned turning integral is theta1 + theta2 for the two arcs and
    zero for a straight neck (signed curvature would cancel on the S shape
    and underpredicts the curved-neck escape times).  Because the stated
    radii are the inner-side wall arcs, this correction makes L-tilde the
    exact geometric centerline length l + theta1*(r1+eps) + theta2*(r2+eps).
    """
    if neck.kind == "straight":
        return neck.length
    return neck.total_length + neck.half_width * (neck.theta1 + neck.theta2)


# -- plain-text config -------------------------------------------------------

_CONFIG_KEYS = {"head_radius", "eps", "neck", "L", "l", "r1", "r2",
                "alpha", "beta", "theta1", "theta2"}


def parse_config(text: str) -> dict:
    """Parse 'key = value' lines; '#' starts a comment."""
    out = {}
    for ln, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidGeometry(f"config line {ln}: expected key = value, got {raw!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in _CONFIG_KEYS:
            raise InvalidGeometry(f"config line {ln}: unknown key {key!r}")
        out[key] = val
    return out


def geometry_from_config(cfg) -> SpineGeometry:
    """Build a geometry from a config dict or key=value text.

    neck = straight requires L; neck = curved requires l, r1, r2;
    neck = none (or omitted with alpha present) gives the head-only Robin
    domain using alpha, beta.
    """
    if isinstance(cfg, str):
        cfg = parse_config(cfg)
    R = float(cfg.get("head_radius", 1.0))
    eps = float(cfg.get("eps", 0.1))
    kind = cfg.get("neck", "none" if "alpha" in cfg else "straight")
    if kind == "straight":
        return build_straight_spine(R, eps, float(cfg["L"]))
    if kind == "curved":
        kw = {}
        if "theta1" in cfg:
            kw["theta1"] = float(cfg["theta1"])
        if "theta2" in cfg:
            kw["theta2"] = float(cfg["theta2"])
        return build_curved_spine(R, eps, float(cfg["l"]),
                                  float(cfg["r1"]), float(cfg["r2"]), **kw)
    if kind in ("none", "head_only"):
        return build_head_only(R, eps, float(cfg.get("alpha", 1.0)),
                               float(cfg.get("beta", 0.5)))
    raise InvalidGeometry(f"unknown neck kind {kind!r}")

"""Block-structured triangulation of spine domains.

The head is meshed by inward offsets of its boundary loop: ring k is the
loop offset by accumulated depth d_k (a truncated circle in spine mode,
rho_k(theta) = min(R - d_k, (x_w - d_k)/cos theta)), with radial spacing
growing geometrically from h/4 at the boundary to h in the bulk and
angular spacing h/2 on the boundary, h/4 inside a band around the
window/junction, locally merged 2:1 inward as rings shrink.  Consecutive
rings are joined by a two-pointer angular stitch and the innermost ring
fans to the head center, which is always an exact mesh vertex.

The neck is a tensor grid in centerline coordinates (s, t): the transverse
partition equals the junction-chord partition, so head and neck share those
vertices exactly; axial spacing grows from the transverse size, capped so
cells stay near-square even on the outer side of curved walls.

Boundary edge tags: 0 reflecting, 1 absorbing, 2 robin.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .geometry import SpineGeometry, centerline_pieces

TAG_REFLECTING = 0
TAG_ABSORBING = 1
TAG_ROBIN = 2
TAG_NAMES = {TAG_REFLECTING: "reflecting", TAG_ABSORBING: "absorbing",
             TAG_ROBIN: "robin"}


class MeshFailure(RuntimeError):
    """Mesh construction could not satisfy its quality contract."""


class WindowUnresolved(ValueError):
    """Target size too coarse to resolve the window with >= 4 edges."""


@dataclass(frozen=True)
class Mesh:
    """Conforming triangulation with tagged boundary edges."""

    vertices: np.ndarray       # (n, 2) float64
    triangles: np.ndarray      # (m, 3) int32, CCW
    boundary_edges: np.ndarray  # (k, 2) int32, CCW along the boundary
    boundary_tags: np.ndarray  # (k,) int8
    h: float
    mode: str = "spine"
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    def tri_areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def min_angle(self) -> float:
        """Smallest interior angle over all triangles, degrees."""
        p = self.vertices[self.triangles]
        angs = []
        for i in range(3):
            a = p[:, (i + 1) % 3] - p[:, i]
            b = p[:, (i + 2) % 3] - p[:, i]
            num = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]
            den = np.einsum("ij,ij->i", a, b)
            angs.append(np.abs(np.arctan2(num, den)))
        return float(np.degrees(np.min(angs)))

    def export(self, path) -> None:
        """Plain-text mesh: counts header, vertices, triangles, tagged edges."""
        with open(path, "w") as f:
            f.write(f"{self.n_vertices} {self.triangles.shape[0]} "
                    f"{self.boundary_edges.shape[0]}\n")
            for x, y in self.vertices:
                f.write(f"{x:.16g} {y:.16g}\n")
            for i, j, k in self.triangles:
                f.write(f"{i} {j} {k}\n")
            for (i, j), t in zip(self.boundary_edges, self.boundary_tags):
                f.write(f"{i} {j} {TAG_NAMES[int(t)]}\n")


def _graded_positions(length: float, size_at, n_probe: int = 4096) -> np.ndarray:
    """Partition [0, length] following the size function via inverse CDF."""
    t = np.linspace(0.0, length, n_probe)
    dens = 1.0 / np.maximum(size_at(t), 1e-300)
    cum = np.concatenate(([0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1])
                                           * np.diff(t))))
    n = max(1, int(round(cum[-1])))
    return np.interp(np.arange(n + 1) * (cum[-1] / n), cum, t)


def _coarsen(angles: np.ndarray, rho: np.ndarray, target: float) -> np.ndarray:
    """Greedy 2:1 merge mask: drop nodes while merged arcs stay < 1.5*target."""
    n = angles.shape[0]
    if n <= 16:
        return np.ones(n, dtype=bool)
    d = np.diff(angles, append=angles[0] + 2.0 * math.pi)
    arcs = rho * d
    keep = np.zeros(n, dtype=bool)
    keep[0] = True
    acc = arcs[0]
    limit = 1.5 * target
    for i in range(1, n):
        if acc + arcs[i] < limit:
            acc += arcs[i]
        else:
            keep[i] = True
            acc = arcs[i]
    if keep.sum() < 8:
        return np.ones(n, dtype=bool)
    return keep


def _stitch(ang_out, ang_in, idx_out, idx_in):
    tris = np.empty((ang_out.shape[0] + ang_in.shape[0], 3), dtype=np.int64)
    nt = kernels.stitch_loops(
        np.ascontiguousarray(ang_out, dtype=np.float64),
        np.ascontiguousarray(ang_in, dtype=np.float64),
        np.ascontiguousarray(idx_out, dtype=np.int64),
        np.ascontiguousarray(idx_in, dtype=np.int64), tris)
    return tris[:nt]


def _head_rings(R, x_w, ring0_ang, ring0_rho, ring0_idx, verts, h, delta_f):
    """March offset rings inward, stitching as we go; fan the center.

    x_w is the junction-chord offset (None for a full disk).  verts is the
    growing vertex list (list of (n,2) arrays); returns the triangle blocks.
    The march stops a few layer-widths from the center; one uniform terminal
    ring is inserted there so the closing fan has near-equilateral spokes.
    """
    tris = []
    ang, idx = ring0_ang, ring0_idx
    rho = ring0_rho
    d = 0.0
    dr = delta_f
    for _ in range(100000):
        dr_next = min(1.35 * dr, 0.95 * h)
        if rho.max() - dr_next < 2.4 * dr_next or ang.shape[0] <= 8:
            break
        d += dr_next
        dr = dr_next
        # merge against the arcs the NEW (shrunken) ring will have
        keep = _coarsen(ang, np.maximum(rho - dr, 0.25 * rho), dr)
        new_ang = ang[keep]
        if x_w is None:
            new_rho = np.full(new_ang.shape[0], R - d)
        else:
            c = np.cos(new_ang)
            chord = np.where(c > 0.2, (x_w - d) / np.where(c > 0.2, c, 1.0),
                             np.inf)
            new_rho = np.minimum(R - d, chord)
        base = sum(v.shape[0] for v in verts)
        new_idx = np.arange(base, base + new_ang.shape[0], dtype=np.int64)
        verts.append(np.column_stack([new_rho * np.cos(new_ang),
                                      new_rho * np.sin(new_ang)]))
        tris.append(_stitch(ang, new_ang, idx, new_idx))
        ang, rho, idx = new_ang, new_rho, new_idx
    # cascade of uniform rings: each at 0.55 of the previous radius with
    # node count set by band squareness, phase-tied to the ring above;
    # ends in a small fan with near-equilateral spokes
    rho_c = float(rho.min())
    rho_hi = float(rho.max())
    while ang.shape[0] > 11 and rho_c > 0.2 * dr:
        rho_t = 0.55 * rho_c
        m = max(7, int(round(2.0 * math.pi * rho_t / (0.75 * (rho_hi - rho_t)))))
        m = min(m, max(7, ang.shape[0] - 1))
        t_ang = np.sort((ang[0] + np.arange(m) * (2.0 * math.pi / m))
                        % (2.0 * math.pi))
        base = sum(v.shape[0] for v in verts)
        t_idx = np.arange(base, base + m, dtype=np.int64)
        verts.append(np.column_stack([rho_t * np.cos(t_ang),
                                      rho_t * np.sin(t_ang)]))
        tris.append(_stitch(ang, t_ang, idx, t_idx))
        ang, idx = t_ang, t_idx
        rho_c = rho_hi = rho_t
        if m <= 11:
            break
    # center fan
    base = sum(v.shape[0] for v in verts)
    verts.append(np.zeros((1, 2)))
    n = ang.shape[0]
    fan = np.column_stack([idx, idx[np.r_[1:n, 0]],
                           np.full(n, base, dtype=np.int64)])
    tris.append(fan)
    return tris


def _head_sizes(h, eps):
    delta_f = h / 4.0  # window/junction-band and first-offset size
    delta_c = h / 2.0  # boundary angular size away from the window
    band = 2.0 * eps   # arc distance over which the fine size holds
    slope = 0.3
    return delta_f, delta_c, band, slope


def _circle_partition(R, th_lo, th_hi, delta_f, delta_c, band, slope):
    """Graded angles on [th_lo, th_hi]; fine near both ends."""
    arc_len = R * (th_hi - th_lo)

    def size_at(s):
        dist = np.minimum(s, arc_len - s)
        return np.minimum(delta_c, delta_f + slope * np.maximum(0.0, dist - band))

    s = _graded_positions(arc_len, size_at)
    return th_lo + s / R


def _neck_axial(L, dt, h, shrink=1.0):
    """Axial positions 0..L: spacing grows from dt at the junction, capped
    so cells stay near-square (tighter cap inside curved segments)."""
    cap = min(h, 2.2 * dt * shrink)
    return _graded_positions(L, lambda s: np.minimum(cap, dt + 0.3 * s))


def _tensor_neck(verts_list, tris_list, bedges, btags, chord_idx, y_part,
                 s_cols, point_of):
    """Grid the neck in (s, t); column 0 reuses the chord vertex indices."""
    m1 = y_part.shape[0]
    cols = [np.asarray(chord_idx, dtype=np.int64)]
    base = sum(v.shape[0] for v in verts_list)
    new_pts = [point_of(s, y_part) for s in s_cols[1:]]
    verts_list.extend(new_pts)
    for _ in new_pts:
        cols.append(np.arange(base, base + m1, dtype=np.int64))
        base += m1
    cols = np.array(cols)  # (M+1, m1)
    M = cols.shape[0] - 1
    # two triangles per quad, diagonal alternating by (i + j) parity
    quads_i, quads_j = np.meshgrid(np.arange(M), np.arange(m1 - 1),
                                   indexing="ij")
    a = cols[quads_i, quads_j]
    b = cols[quads_i + 1, quads_j]
    c = cols[quads_i + 1, quads_j + 1]
    d = cols[quads_i, quads_j + 1]
    par = ((quads_i + quads_j) % 2 == 0)
    t1 = np.where(par[..., None], np.stack([a, b, c], axis=-1),
                  np.stack([a, b, d], axis=-1))
    t2 = np.where(par[..., None], np.stack([a, c, d], axis=-1),
                  np.stack([b, c, d], axis=-1))
    tris_list.append(t1.reshape(-1, 3))
    tris_list.append(t2.reshape(-1, 3))
    # walls (t = +-eps) reflect, end cap absorbs; CCW: lower wall runs +s
    for i in range(M):
        bedges.append((cols[i, 0], cols[i + 1, 0]))
        btags.append(TAG_REFLECTING)
    for j in range(m1 - 1):
        bedges.append((cols[M, j], cols[M, j + 1]))
        btags.append(TAG_ABSORBING)
    for i in range(M, 0, -1):
        bedges.append((cols[i, m1 - 1], cols[i - 1, m1 - 1]))
        btags.append(TAG_REFLECTING)
    return cols


def generate_mesh(g: SpineGeometry, h: float) -> Mesh:
    """Triangulate a spine/head-only/neck-only geometry at target size h.

    h must resolve the window: h < eps/2 (>= 4 edges across 2*eps).
    """
    eps = g.eps
    if h >= eps / 2.0:
        raise WindowUnresolved(
            f"h={h} must be < eps/2 = {eps / 2.0} to resolve the window")
    if g.mode == "neck_only":
        return _mesh_neck_only(g, h)
    R = g.head.radius
    if h > R / 6.0:
        raise MeshFailure(f"h={h} too coarse for head radius {R}")
    if g.mode == "head_only":
        return _mesh_head_only(g, h)
    return _mesh_spine(g, h)


def _mesh_spine(g: SpineGeometry, h: float) -> Mesh:
    R = g.head.radius
    eps = g.eps
    cx, cy = g.head.center
    x_w = math.sqrt(R * R - eps * eps)
    phi_h = math.asin(eps / R)
    delta_f, delta_c, band, slope = _head_sizes(h, eps)

    # transverse partition of the junction chord, shared with the neck
    m = int(math.ceil(2.0 * eps / delta_f))
    m += m % 2
    y_part = np.linspace(-eps, eps, m + 1)
    dt = 2.0 * eps / m

    th_chord = np.arctan2(y_part, x_w)
    rho_chord = np.hypot(x_w, y_part)
    th_circ = _circle_partition(R, phi_h, 2.0 * math.pi - phi_h,
                                delta_f, delta_c, band, slope)
    ring0_ang = np.concatenate([th_chord, th_circ[1:-1]])
    ring0_rho = np.concatenate([rho_chord, np.full(th_circ.shape[0] - 2, R)])
    pts0 = np.column_stack([ring0_rho * np.cos(ring0_ang),
                            ring0_rho * np.sin(ring0_ang)])

    verts = [pts0]
    ring0_idx = np.arange(pts0.shape[0], dtype=np.int64)
    tris = _head_rings(R, x_w, ring0_ang, ring0_rho, ring0_idx, verts, h,
                       delta_f)

    bedges = []
    btags = []
    # head circle: from W+ (chord end, index m) through the circle nodes
    # back to W- (index 0); all reflecting
    n_c = th_circ.shape[0] - 2
    chain = [m] + list(range(m + 1, m + 1 + n_c)) + [0]
    for a, b in zip(chain[:-1], chain[1:]):
        bedges.append((a, b))
        btags.append(TAG_REFLECTING)

    # centerline in head-local coordinates; the final shift moves everything
    chord_idx = np.arange(0, m + 1, dtype=np.int64)
    cl = centerline_pieces(g.neck, (x_w, 0.0))
    L = cl[-1]["s1"]  # full centerline length
    shrink = 1.0
    if g.neck.kind == "curved":
        # outer wall runs at r + 2*eps over a centerline at r + eps
        rc_min = min(g.neck.r1, g.neck.r2) + eps
        shrink = 1.0 / (1.0 + eps / rc_min)
    s_cols = _neck_axial(L, dt, h, shrink)

    def point_of(s, ys):
        return _neck_points_vec(cl, s, ys)

    _tensor_neck(verts, tris, bedges, btags, chord_idx, y_part, s_cols,
                 point_of)

    vertices = np.vstack(verts) + (cx, cy)
    triangles = np.vstack(tris)
    mesh = Mesh(vertices=vertices,
                triangles=np.ascontiguousarray(triangles, dtype=np.int32),
                boundary_edges=np.asarray(bedges, dtype=np.int32),
                boundary_tags=np.asarray(btags, dtype=np.int8),
                h=h, mode="spine")
    _quality_gate(mesh)
    return mesh


def _neck_points_vec(cl_pieces, s: float, ts: np.ndarray) -> np.ndarray:
    """Vectorized centerline-offset map at fixed s over transverse array."""
    for pc in cl_pieces:
        if s <= pc["s1"] or pc is cl_pieces[-1]:
            ds = s - pc["s0"]
            if pc["type"] == "line":
                ox, oy = pc["origin"]
                dx, dy = pc["direction"]
                return np.column_stack([ox + ds * dx - ts * dy,
                                        oy + ds * dy + ts * dx])
            phi = pc["phi0"] + pc["sense"] * ds / pc["radius"]
            r_eff = pc["radius"] - pc["sense"] * ts
            cx, cy = pc["center"]
            return np.column_stack([cx + r_eff * math.cos(phi),
                                    cy + r_eff * math.sin(phi)])
    raise ValueError(f"s={s} outside centerline")


def _mesh_head_only(g: SpineGeometry, h: float) -> Mesh:
    R = g.head.radius
    eps = g.eps
    cx, cy = g.head.center
    phi_w = eps / R  # window half-angle: arclength exactly 2 eps
    delta_f, delta_c, band, slope = _head_sizes(h, eps)

    n_w = int(math.ceil(2.0 * eps / delta_f))
    n_w += n_w % 2  # even count puts a node exactly at x*
    th_win = np.linspace(-phi_w, phi_w, n_w + 1)
    th_circ = _circle_partition(R, phi_w, 2.0 * math.pi - phi_w,
                                delta_f, delta_c, band, slope)
    ring0_ang = np.concatenate([th_win, th_circ[1:-1]])
    ring0_rho = np.full(ring0_ang.shape[0], R)
    pts0 = np.column_stack([R * np.cos(ring0_ang), R * np.sin(ring0_ang)])

    verts = [pts0]
    ring0_idx = np.arange(pts0.shape[0], dtype=np.int64)
    tris = _head_rings(R, None, ring0_ang, ring0_rho, ring0_idx, verts, h,
                       delta_f)

    bedges = []
    btags = []
    for j in range(n_w):
        bedges.append((j, j + 1))
        btags.append(TAG_ROBIN)
    n_c = th_circ.shape[0] - 2
    chain = [n_w] + list(range(n_w + 1, n_w + 1 + n_c)) + [0]
    for a, b in zip(chain[:-1], chain[1:]):
        bedges.append((a, b))
        btags.append(TAG_REFLECTING)

    vertices = np.vstack(verts) + (cx, cy)
    mesh = Mesh(vertices=vertices,
                triangles=np.ascontiguousarray(np.vstack(tris), dtype=np.int32),
                boundary_edges=np.asarray(bedges, dtype=np.int32),
                boundary_tags=np.asarray(btags, dtype=np.int8),
                h=h, mode="head_only")
    _quality_gate(mesh)
    return mesh


def _mesh_neck_only(g: SpineGeometry, h: float) -> Mesh:
    eps = g.neck.half_width
    L = g.neck.total_length
    m = int(math.ceil(2.0 * eps / h))
    m += m % 2
    y_part = np.linspace(-eps, eps, m + 1)
    n_s = max(2, int(math.ceil(L / h)))
    s_cols = np.linspace(0.0, L, n_s + 1)

    verts = [np.column_stack([np.zeros(m + 1), y_part])]
    tris = []
    bedges = []
    btags = []
    # closed end reflects, traversed downward for CCW consistency
    for j in range(m, 0, -1):
        bedges.append((j, j - 1))
        btags.append(TAG_REFLECTING)
    chord_idx = np.arange(0, m + 1, dtype=np.int64)

    def point_of(s, ys):
        return np.column_stack([np.full(ys.shape[0], s), ys])

    _tensor_neck(verts, tris, bedges, btags, chord_idx, y_part, s_cols,
                 point_of)
    mesh = Mesh(vertices=np.vstack(verts),
                triangles=np.ascontiguousarray(np.vstack(tris), dtype=np.int32),
                boundary_edges=np.asarray(bedges, dtype=np.int32),
                boundary_tags=np.asarray(btags, dtype=np.int8),
                h=h, mode="neck_only")
    _quality_gate(mesh)
    return mesh


def _quality_gate(mesh: Mesh) -> None:
    areas = mesh.tri_areas()
    if areas.min() <= 0.0:
        raise MeshFailure(f"non-positive triangle area {areas.min():.3e}")
    ang = mesh.min_angle()
    if ang < 18.0:
        raise MeshFailure(f"min angle {ang:.2f} deg below the 18 deg floor")

"""Shared numerical kernels with a JIT lane and a vectorized numpy lane.

The hot loops (sparse PCG, mesh ring stitching, the Monte Carlo walk in
:mod:`spinemfpt.montecarlo`) are compiled with numba when it is importable.
Setting the environment variable ``SPINEMFPT_DISABLE_NUMBA=1`` forces the
numpy fallback lane everywhere; ``benchmarks/bench_kernels.py`` compares the
two lanes on identical inputs.

The random stream is a counter-based splitmix64: every draw is a pure
function of (key, counter), so walker streams can be evaluated scalar-wise
(JIT lane) or as whole arrays (numpy lane) with identical bit patterns.
"""

from __future__ import annotations

import os

import numpy as np
from scipy.sparse import csr_matrix

HAS_NUMBA = False
if os.environ.get("SPINEMFPT_DISABLE_NUMBA", "").lower() not in ("1", "true", "yes"):
    try:
        from numba import njit

        HAS_NUMBA = True
    except ImportError:
        pass

USE_NUMBA = HAS_NUMBA

if not HAS_NUMBA:

    def njit(*args, **kwargs):
        """No-op decorator so kernel source stays importable without numba."""

        def wrap(func):
            return func

        if args and callable(args[0]):
            return args[0]
        return wrap


_MASK = np.uint64(0xFFFFFFFFFFFFFFFF)
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_U53 = 1.0 / 9007199254740992.0  # 2**-53


@njit(cache=True)
def sm64_value(key, counter):
    """counter-th output of the splitmix64 stream seeded with key."""
    z = (key + (counter + np.uint64(1)) * _GOLDEN) & _MASK
    z = ((z ^ (z >> np.uint64(30))) * _MIX1) & _MASK
    z = ((z ^ (z >> np.uint64(27))) * _MIX2) & _MASK
    return z ^ (z >> np.uint64(31))


@njit(cache=True)
def stream_key(seed, start_index, walker):
    """Derive an independent per-walker key from (seed, start, walker)."""
    k = sm64_value(np.uint64(seed), np.uint64(start_index))
    return sm64_value(k, np.uint64(walker))


@njit(cache=True)
def uniform01(key, counter):
    """Uniform draw in (0, 1]; never 0 so log() stays finite."""
    return ((sm64_value(key, counter) >> np.uint64(11)) + np.uint64(1)) * _U53


def sm64_value_np(keys, counters):
    """Vectorized twin of sm64_value for uint64 arrays."""
    with np.errstate(over="ignore"):  # mod-2^64 wraparound is the algorithm
        z = (keys + (counters + np.uint64(1)) * _GOLDEN) & _MASK
        z = ((z ^ (z >> np.uint64(30))) * _MIX1) & _MASK
        z = ((z ^ (z >> np.uint64(27))) * _MIX2) & _MASK
        return z ^ (z >> np.uint64(31))


def stream_key_np(seed, start_index, walkers):
    k = sm64_value_np(np.uint64(seed), np.asarray(start_index, dtype=np.uint64))
    return sm64_value_np(k, np.asarray(walkers, dtype=np.uint64))


def uniform01_np(keys, counters):
    return ((sm64_value_np(keys, counters) >> np.uint64(11)) + np.uint64(1)) * _U53


@njit(cache=True)
def _csr_matvec(indptr, indices, data, x, out):
    n = indptr.shape[0] - 1
    for i in range(n):
        acc = 0.0
        for k in range(indptr[i], indptr[i + 1]):
            acc += data[k] * x[indices[k]]
        out[i] = acc
    return out


@njit(cache=True)
def _pcg_jit(indptr, indices, data, b, inv_diag, tol, maxiter, project):
    n = b.shape[0]
    x = np.zeros(n)
    r = b.copy()
    if project:
        r -= r.sum() / n
    normb = np.sqrt(np.dot(r, r))
    if normb == 0.0:
        return x, 0, 0.0
    z = inv_diag * r
    if project:
        z -= z.sum() / n
    p = z.copy()
    rz = np.dot(r, z)
    ap = np.empty(n)
    nit = 0
    relres = 1.0
    for it in range(maxiter):
        relres = np.sqrt(np.dot(r, r)) / normb
        if relres <= tol:
            break
        _csr_matvec(indptr, indices, data, p, ap)
        alpha = rz / np.dot(p, ap)
        x += alpha * p
        r -= alpha * ap
        z = inv_diag * r
        if project:
            z -= z.sum() / n
        rz_new = np.dot(r, z)
        p = z + (rz_new / rz) * p
        rz = rz_new
        nit = it + 1
    if project:
        x -= x.sum() / n
    return x, nit, relres


def _pcg_np(indptr, indices, data, b, inv_diag, tol, maxiter, project):
    n = b.shape[0]
    A = csr_matrix((data, indices, indptr), shape=(n, n))
    x = np.zeros(n)
    r = b.copy()
    if project:
        r -= r.mean()
    normb = np.linalg.norm(r)
    if normb == 0.0:
        return x, 0, 0.0
    z = inv_diag * r
    if project:
        z -= z.mean()
    p = z.copy()
    rz = r @ z
    nit = 0
    relres = 1.0
    for it in range(maxiter):
        relres = np.linalg.norm(r) / normb
        if relres <= tol:
            break
        ap = A @ p
        alpha = rz / (p @ ap)
        x += alpha * p
        r -= alpha * ap
        z = inv_diag * r
        if project:
            z -= z.mean()
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
        nit = it + 1
    if project:
        x -= x.mean()
    return x, nit, relres


class NoConvergence(RuntimeError):
    """PCG failed to reach the requested residual within the iteration cap."""


def pcg(indptr, indices, data, b, diag, tol=1e-10, maxiter=None, project=False,
        use_numba=None):
    """Diagonally preconditioned CG for a SPD (or consistent semidefinite) CSR system.

    maxiter defaults to 50*sqrt(n) per the solver contract.  With
    project=True the constant nullspace of a pure-Neumann operator is
    deflated from the residual and the preconditioned direction.
    """
    b = np.ascontiguousarray(b, dtype=np.float64)
    n = b.shape[0]
    if maxiter is None:
        maxiter = int(50 * np.sqrt(n)) + 100
    inv_diag = np.where(diag > 0.0, 1.0 / np.maximum(diag, 1e-300), 1.0)
    lane = USE_NUMBA if use_numba is None else use_numba
    impl = _pcg_jit if lane else _pcg_np
    x, nit, relres = impl(
        np.ascontiguousarray(indptr, dtype=np.int64),
        np.ascontiguousarray(indices, dtype=np.int64),
        np.ascontiguousarray(data, dtype=np.float64),
        b, np.ascontiguousarray(inv_diag, dtype=np.float64),
        float(tol), int(maxiter), bool(project))
    if relres > tol:
        raise NoConvergence(
            f"PCG stalled at relative residual {relres:.3e} after {nit} "
            f"iterations (cap {maxiter}, tol {tol:.1e})")
    return x, nit


@njit(cache=True)
def stitch_loops(ang_out, ang_in, idx_out, idx_in, tris):
    """Triangulate the band between two nested closed loops.

    Both loops are given by angles (radians, increasing around the loop,
    arbitrary origin) and global vertex indices.  A two-pointer circular
    merge emits one CCW triangle per advanced edge, giving a conforming
    band for any pair of angular partitions.  Returns the triangle count
    written into tris (preallocated, at least n_out + n_in rows).
    """
    n_out = ang_out.shape[0]
    n_in = ang_in.shape[0]
    two_pi = 2.0 * np.pi

    # inner start node: angularly nearest to the outer start
    best = 0
    best_d = 1e30
    for k in range(n_in):
        d = ang_in[k] - ang_out[0]
        while d > np.pi:
            d -= two_pi
        while d < -np.pi:
            d += two_pi
        if abs(d) < best_d:
            best_d = abs(d)
            best = k

    # unwrapped cumulative angles, one full turn each
    A = np.empty(n_out + 1)
    A[0] = ang_out[0]
    for k in range(1, n_out + 1):
        d = ang_out[k % n_out] - ang_out[(k - 1) % n_out]
        if d <= 0.0:
            d += two_pi
        A[k] = A[k - 1] + d
    B = np.empty(n_in + 1)
    b0 = ang_in[best]
    while b0 - A[0] > np.pi:
        b0 -= two_pi
    while b0 - A[0] < -np.pi:
        b0 += two_pi
    B[0] = b0
    for k in range(1, n_in + 1):
        d = ang_in[(best + k) % n_in] - ang_in[(best + k - 1) % n_in]
        if d <= 0.0:
            d += two_pi
        B[k] = B[k - 1] + d

    i = 0
    j = 0
    nt = 0
    while i < n_out or j < n_in:
        # advance the side whose new diagonal has the smaller angular span;
        # on 2:1 merges this picks the short diagonal of each transition quad
        take_out = i < n_out and (j >= n_in
                                  or A[i + 1] - B[j] <= B[j + 1] - A[i])
        oi = idx_out[i % n_out]
        ij = idx_in[(best + j) % n_in]
        if take_out:
            tris[nt, 0] = oi
            tris[nt, 1] = idx_out[(i + 1) % n_out]
            tris[nt, 2] = ij
            i += 1
        else:
            tris[nt, 0] = oi
            tris[nt, 1] = idx_in[(best + j + 1) % n_in]
            tris[nt, 2] = ij
            j += 1
        nt += 1
    return nt


_TWO_PI = 6.283185307179586


@njit(cache=True)
def _earliest_hit(prims, px, py, vx, vy, skip):
    """First boundary crossing of the segment p -> p + v.

    prims rows: [type, tag, ...]; type 0 segment (ax, ay, bx, by),
    type 1 arc (cx, cy, r, a0, da).  skip suppresses near-zero re-hits
    of the piece the walker just reflected off.  Returns (tau, index)
    with tau in (0, 1], or (2.0, -1) when the segment stays inside.
    """
    best_t = 2.0
    best_i = -1
    for i in range(prims.shape[0]):
        tmin = 1e-9 if i == skip else 0.0
        if prims[i, 0] == 0.0:
            ax = prims[i, 2]
            ay = prims[i, 3]
            dx = prims[i, 4] - ax
            dy = prims[i, 5] - ay
            den = dx * vy - dy * vx
            if den == 0.0:
                continue
            wx = ax - px
            wy = ay - py
            t = (dx * wy - dy * wx) / den
            if t <= tmin or t > 1.0 or t >= best_t:
                continue
            s = (vx * wy - vy * wx) / den
            if 0.0 <= s <= 1.0:
                best_t = t
                best_i = i
        else:
            cx = prims[i, 2]
            cy = prims[i, 3]
            r = prims[i, 4]
            a0 = prims[i, 5]
            da = prims[i, 6]
            wx = px - cx
            wy = py - cy
            a = vx * vx + vy * vy
            if a == 0.0:
                continue
            b = wx * vx + wy * vy
            c = wx * wx + wy * wy - r * r
            disc = b * b - a * c
            if disc <= 0.0:
                continue
            root = np.sqrt(disc)
            # stable quadratic split avoids cancellation on grazing hits
            q = -(b + root) if b >= 0.0 else root - b
            for t in (q / a, c / q if q != 0.0 else -1.0):
                if t <= tmin or t > 1.0 or t >= best_t:
                    continue
                hx = wx + t * vx
                hy = wy + t * vy
                rel = np.arctan2(hy, hx) - a0
                rel -= _TWO_PI * np.floor(rel / _TWO_PI)
                if rel <= da:
                    best_t = t
                    best_i = i
    return best_t, best_i


@njit(cache=True)
def _boundary_distance(prims, px, py):
    """Distance from a point to the nearest boundary piece."""
    best = 1e300
    for i in range(prims.shape[0]):
        if prims[i, 0] == 0.0:
            ax = prims[i, 2]
            ay = prims[i, 3]
            dx = prims[i, 4] - ax
            dy = prims[i, 5] - ay
            t = ((px - ax) * dx + (py - ay) * dy) / (dx * dx + dy * dy)
            if t < 0.0:
                t = 0.0
            elif t > 1.0:
                t = 1.0
            ex = ax + t * dx - px
            ey = ay + t * dy - py
            d = np.sqrt(ex * ex + ey * ey)
        else:
            cx = prims[i, 2]
            cy = prims[i, 3]
            r = prims[i, 4]
            a0 = prims[i, 5]
            da = prims[i, 6]
            wx = px - cx
            wy = py - cy
            rel = np.arctan2(wy, wx) - a0
            rel -= _TWO_PI * np.floor(rel / _TWO_PI)
            if rel <= da:
                d = abs(np.sqrt(wx * wx + wy * wy) - r)
            else:
                e1x = cx + r * np.cos(a0) - px
                e1y = cy + r * np.sin(a0) - py
                e2x = cx + r * np.cos(a0 + da) - px
                e2y = cy + r * np.sin(a0 + da) - py
                d1 = np.sqrt(e1x * e1x + e1y * e1y)
                d2 = np.sqrt(e2x * e2x + e2y * e2y)
                d = d1 if d1 < d2 else d2
        if d < best:
            best = d
    return best


_SLACK = 1e-9  # containment tolerance: reflection points sit on the wall


@njit(cache=True)
def _inside(regions, px, py):
    """Union-of-regions containment: disk / line strip / arc strip rows."""
    for i in range(regions.shape[0]):
        t = regions[i, 0]
        if t == 0.0:
            dx = px - regions[i, 1]
            dy = py - regions[i, 2]
            rs = regions[i, 3] + _SLACK
            if dx * dx + dy * dy <= rs * rs:
                return True
        elif t == 1.0:
            wx = px - regions[i, 1]
            wy = py - regions[i, 2]
            ux = regions[i, 3]
            uy = regions[i, 4]
            s = wx * ux + wy * uy
            off = wy * ux - wx * uy
            if (-_SLACK <= s <= regions[i, 5] + _SLACK
                    and abs(off) <= regions[i, 6] + _SLACK):
                return True
        else:
            wx = px - regions[i, 1]
            wy = py - regions[i, 2]
            rho = np.sqrt(wx * wx + wy * wy)
            if abs(rho - regions[i, 3]) <= regions[i, 6] + _SLACK:
                rel = np.arctan2(wy, wx) - regions[i, 4]
                rel -= _TWO_PI * np.floor(rel / _TWO_PI)
                if rel <= regions[i, 5] + 1e-12:
                    return True
    return False


@njit(cache=True)
def _reflect_step(prims, px, py, vx, vy):
    """Resolve one displacement with specular reflections (cap 8).

    Returns (x, y, status, frac): status 0 moved, 1 absorbed at
    fraction frac of the step's path length, 2 needs a fresh sample.
    """
    ell0 = np.sqrt(vx * vx + vy * vy)
    if ell0 == 0.0:
        return px, py, 0, 0.0
    consumed = 0.0
    skip = -1
    for _ in range(8):
        tau, idx = _earliest_hit(prims, px, py, vx, vy, skip)
        if idx < 0:
            return px + vx, py + vy, 0, 0.0
        hx = px + tau * vx
        hy = py + tau * vy
        consumed += tau * np.sqrt(vx * vx + vy * vy)
        if prims[idx, 1] == 1.0:
            return hx, hy, 1, consumed / ell0
        if prims[idx, 0] == 0.0:
            dx = prims[idx, 4] - prims[idx, 2]
            dy = prims[idx, 5] - prims[idx, 3]
            ln = np.sqrt(dx * dx + dy * dy)
            nx = dy / ln
            ny = -dx / ln
        else:
            nx = hx - prims[idx, 2]
            ny = hy - prims[idx, 3]
            ln = np.sqrt(nx * nx + ny * ny)
            nx /= ln
            ny /= ln
        side = 1.0 if vx * nx + vy * ny > 0.0 else -1.0
        rx = (1.0 - tau) * vx
        ry = (1.0 - tau) * vy
        dot = rx * nx + ry * ny
        vx = rx - 2.0 * dot * nx
        vy = ry - 2.0 * dot * ny
        # pull the pivot strictly inside so rounding cannot strand the
        # walker a hair outside the wall it just bounced off
        px = hx - 1e-12 * side * nx
        py = hy - 1e-12 * side * ny
        skip = idx
    return px, py, 2, 0.0


@njit(cache=True)
def walk_one(prims, regions, x0, y0, dt, max_steps, key, sign):
    """Advance one walker to absorption; returns (exit_time, absorbed).

    Counter-based draws: two uniforms per proposed displacement, so the
    trajectory is a pure function of (key, sign).  A cached distance to
    the boundary skips crossing tests for interior steps; reflected moves
    whose endpoint falls outside the region union (lost grazing roots)
    are resampled like near-corner steps.
    """
    root = np.sqrt(2.0 * dt)
    px = x0
    py = y0
    dsafe = _boundary_distance(prims, px, py)
    c = np.uint64(0)
    one = np.uint64(1)
    two = np.uint64(2)
    for n in range(max_steps):
        moved = False
        for _ in range(64):
            u1 = uniform01(key, c)
            u2 = uniform01(key, c + one)
            c += two
            amp = root * np.sqrt(-2.0 * np.log(u1))
            ang = _TWO_PI * u2
            vx = sign * amp * np.cos(ang)
            vy = sign * amp * np.sin(ang)
            if amp < dsafe:
                px += vx
                py += vy
                dsafe -= amp
                moved = True
                break
            dsafe = _boundary_distance(prims, px, py)
            if amp < dsafe:
                px += vx
                py += vy
                dsafe -= amp
                moved = True
                break
            nx, ny, status, frac = _reflect_step(prims, px, py, vx, vy)
            if status == 1:
                return (n + frac) * dt, 1
            if status == 0 and _inside(regions, nx, ny):
                px = nx
                py = ny
                dsafe = 0.0
                moved = True
                break
        if not moved:
            return n * dt, 0
    return max_steps * dt, 0


@njit(cache=True)
def mc_walk(prims, regions, x0, y0, dt, max_steps, keys, signs, times,
            absorbed):
    """JIT lane: run every walker stream serially."""
    for w in range(keys.shape[0]):
        t, a = walk_one(prims, regions, x0, y0, dt, max_steps, keys[w],
                        signs[w])
        times[w] = t
        absorbed[w] = a
    return times, absorbed


def mc_walk_np(prims, regions, x0, y0, dt, max_steps, keys, signs, times,
               absorbed):
    """Vectorized lane: lockstep interior moves, scalar boundary handling.

    Draws and the interior fast path are whole-array operations; walkers
    within one step of the boundary fall back to the shared scalar
    resolver.  Deterministic for a fixed (keys, signs) assignment, but
    trajectories are not bitwise-identical to the JIT lane (library sin/
    cos/log differ in the last ulp), so lanes agree only statistically.
    """
    n = keys.shape[0]
    root = np.sqrt(2.0 * dt)
    px = np.full(n, float(x0))
    py = np.full(n, float(y0))
    ctr = np.zeros(n, dtype=np.uint64)
    dsafe = np.full(n, _boundary_distance(prims, float(x0), float(y0)))
    alive = np.ones(n, dtype=bool)
    times[:] = max_steps * dt
    absorbed[:] = 0
    one = np.uint64(1)
    two = np.uint64(2)
    for step in range(max_steps):
        idx = np.nonzero(alive)[0]
        if idx.size == 0:
            break
        u1 = uniform01_np(keys[idx], ctr[idx])
        u2 = uniform01_np(keys[idx], ctr[idx] + one)
        ctr[idx] += two
        amp = root * np.sqrt(-2.0 * np.log(u1))
        ang = _TWO_PI * u2
        vx = signs[idx] * amp * np.cos(ang)
        vy = signs[idx] * amp * np.sin(ang)
        fast = amp < dsafe[idx]
        f = idx[fast]
        px[f] += vx[fast]
        py[f] += vy[fast]
        dsafe[f] -= amp[fast]
        for k in np.nonzero(~fast)[0]:
            i = idx[k]
            d = _boundary_distance(prims, px[i], py[i])
            if amp[k] < d:
                px[i] += vx[k]
                py[i] += vy[k]
                dsafe[i] = d - amp[k]
                continue
            wx, wy = vx[k], vy[k]
            settled = False
            for _ in range(64):
                nx, ny, status, frac = _reflect_step(prims, px[i], py[i],
                                                     wx, wy)
                if status == 1:
                    times[i] = (step + frac) * dt
                    absorbed[i] = 1
                    alive[i] = False
                    settled = True
                    break
                if status == 0 and _inside(regions, nx, ny):
                    px[i] = nx
                    py[i] = ny
                    dsafe[i] = 0.0
                    settled = True
                    break
                w1 = uniform01(keys[i], ctr[i])
                w2 = uniform01(keys[i], ctr[i] + one)
                ctr[i] += two
                a2 = root * np.sqrt(-2.0 * np.log(w1))
                g2 = _TWO_PI * w2
                wx = signs[i] * a2 * np.cos(g2)
                wy = signs[i] * a2 * np.sin(g2)
            if not settled:
                times[i] = step * dt
                absorbed[i] = 0
                alive[i] = False
    return times, absorbed

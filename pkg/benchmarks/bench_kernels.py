"""Compare the JIT kernel lane against the numpy fallback lane.

Times the three hot kernels on identical inputs: the preconditioned CG
solve, the Monte Carlo walker loop, and the ring stitcher used by the
mesh generator.  Run as a script:

    python3 benchmarks/bench_kernels.py [--walkers N] [--grid N] [--repeats K]

The environment variable SPINEMFPT_DISABLE_NUMBA=1 removes the JIT lane
entirely; this script instead selects lanes explicitly so both are
measured in one process.  Note the first JIT call includes compilation;
a warmup call is excluded from the timings.
"""

import argparse
import time

import numpy as np
from scipy.sparse import csr_matrix, eye, kron

from spinemfpt import geometry, kernels, montecarlo


def _median_time(fn, repeats):
    best = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best.append(time.perf_counter() - t0)
    return float(np.median(best))


def _poisson_csr(n):
    """5-point Laplacian on an n x n grid with Dirichlet boundary (SPD)."""
    main = 2.0 * np.ones(n)
    off = -1.0 * np.ones(n - 1)
    t = csr_matrix(np.diag(main) + np.diag(off, 1) + np.diag(off, -1))
    a = kron(eye(n), t) + kron(t, eye(n))
    return csr_matrix(a)


def bench_pcg(grid, repeats):
    a = _poisson_csr(grid)
    rng = np.random.default_rng(11)
    b = rng.standard_normal(a.shape[0])
    diag = a.diagonal()
    args = (a.indptr, a.indices, a.data, b, diag)

    def run(lane):
        return kernels.pcg(*args, tol=1e-10, use_numba=lane)

    if kernels.HAS_NUMBA:
        run(True)  # warm the compile cache
    x_np, it_np = run(False)
    t_np = _median_time(lambda: run(False), repeats)
    if not kernels.HAS_NUMBA:
        return ("pcg", a.shape[0], None, t_np, f"{it_np} iterations")
    x_jit, it_jit = run(True)
    t_jit = _median_time(lambda: run(True), repeats)
    agree = float(np.max(np.abs(x_jit - x_np)))
    return ("pcg", a.shape[0], t_jit, t_np,
            f"max|dx| = {agree:.1e}, {it_jit}/{it_np} iters")


def bench_mc_walk(walkers, repeats):
    g = geometry.build_neck_only(1.0, 0.1)
    prims = montecarlo.domain_primitives(g)
    regions = montecarlo.domain_regions(g)
    keys, signs = montecarlo._streams(123, 0, walkers, False)
    dt = 1e-4
    max_steps = int(25.0 * 0.5 / dt)

    def run(impl):
        times = np.empty(walkers)
        absorbed = np.zeros(walkers, dtype=np.int64)
        with np.errstate(over="ignore"):  # splitmix64 wraps by design
            impl(prims, regions, 0.0, 0.0, dt, max_steps, keys, signs,
                 times, absorbed)
        return times, absorbed

    t_np = _median_time(lambda: run(kernels.mc_walk_np), repeats)
    times_np, abs_np = run(kernels.mc_walk_np)
    if not kernels.HAS_NUMBA:
        return ("mc_walk", walkers, None, t_np,
                f"mean exit {times_np[abs_np == 1].mean():.4f}")
    run(kernels.mc_walk)  # warm the compile cache
    t_jit = _median_time(lambda: run(kernels.mc_walk), repeats)
    times_jit, abs_jit = run(kernels.mc_walk)
    # lanes share streams but differ in last-ulp libm rounding, so the
    # agreement check is statistical, not bitwise
    m_jit = times_jit[abs_jit == 1].mean()
    m_np = times_np[abs_np == 1].mean()
    sig = times_jit[abs_jit == 1].std(ddof=1) / np.sqrt(max(abs_jit.sum(), 2))
    return ("mc_walk", walkers, t_jit, t_np,
            f"means {m_jit:.4f}/{m_np:.4f} (stderr {sig:.4f})")


def bench_stitch(n_out, repeats):
    rng = np.random.default_rng(5)
    n_in = int(0.7 * n_out)
    ang_out = np.sort(rng.uniform(0.0, 2.0 * np.pi, n_out))
    ang_in = np.sort(rng.uniform(0.0, 2.0 * np.pi, n_in))
    idx_out = np.arange(n_out, dtype=np.int64)
    idx_in = np.arange(n_out, n_out + n_in, dtype=np.int64)

    def run(fn):
        tris = np.empty((n_out + n_in, 3), dtype=np.int64)
        nt = fn(ang_out, ang_in, idx_out, idx_in, tris)
        return tris[:nt]

    if not kernels.HAS_NUMBA:
        t_np = _median_time(lambda: run(kernels.stitch_loops), repeats)
        tris = run(kernels.stitch_loops)
        return ("stitch_loops", n_out + n_in, None, t_np,
                f"{tris.shape[0]} triangles")
    py_fn = kernels.stitch_loops.py_func
    run(kernels.stitch_loops)  # warm the compile cache
    t_jit = _median_time(lambda: run(kernels.stitch_loops), repeats)
    t_np = _median_time(lambda: run(py_fn), repeats)
    same = np.array_equal(run(kernels.stitch_loops), run(py_fn))
    return ("stitch_loops", n_out + n_in, t_jit, t_np,
            "identical triangles" if same else "LANES DISAGREE")


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--walkers", type=int, default=200,
                    help="walker count for the mc_walk benchmark")
    ap.add_argument("--grid", type=int, default=120,
                    help="grid side for the pcg benchmark (n^2 unknowns)")
    ap.add_argument("--stitch", type=int, default=20000,
                    help="outer ring size for the stitcher benchmark")
    ap.add_argument("--repeats", type=int, default=3,
                    help="timing repeats (median reported)")
    args = ap.parse_args(argv)

    lane = "jit+numpy" if kernels.HAS_NUMBA else "numpy only"
    print(f"kernel lanes: {lane}")
    rows = [
        bench_pcg(args.grid, args.repeats),
        bench_mc_walk(args.walkers, args.repeats),
        bench_stitch(args.stitch, args.repeats),
    ]
    print(f"{'kernel':<14} {'n':>8} {'jit_ms':>9} {'numpy_ms':>9} "
          f"{'ratio':>7}  agreement")
    for name, n, t_jit, t_np, note in rows:
        jit_ms = f"{1e3 * t_jit:.2f}" if t_jit is not None else "-"
        ratio = f"{t_np / t_jit:.1f}x" if t_jit else "-"
        print(f"{name:<14} {n:>8} {jit_ms:>9} {1e3 * t_np:>9.2f} "
              f"{ratio:>7}  {note}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

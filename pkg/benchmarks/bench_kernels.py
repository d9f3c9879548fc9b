"""Benchmark numba element kernels against the pure-numpy fallbacks.

Runs every kernel on meshes of increasing size and reports per-call wall
times for both backends plus the end-to-end modulated-assembly time that
dominates the measurement sweep.

Usage:
    python benchmarks/bench_kernels.py [--levels 3 4 5] [--repeats 20]

The numpy timings here equal what the package does under
ACOUSTOMAX_NO_NUMBA=1; the numba timings exclude JIT warmup.
"""

import argparse
import time

import numpy as np

from acoustomax import _kernels
from acoustomax.fem import QuadratureCache
from acoustomax.mesh import gen_disk_mesh


def timeit(fn, repeats):
    fn()  # warmup (JIT compile for the numba path)
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn()
    return (time.perf_counter() - t0) / repeats


def bench_level(level, repeats):
    cache = QuadratureCache(gen_disk_mesh(1.0, level))
    T, Q = cache.points.shape[:2]
    rng = np.random.default_rng(0)
    coeff = rng.uniform(0.5, 2.0, (T, Q))
    coeffT = rng.uniform(0.5, 2.0, T)
    f = rng.standard_normal((T, Q, 2)) + 1j * rng.standard_normal((T, Q, 2))
    dofs = rng.standard_normal(cache.n_edges) + 1j * rng.standard_normal(cache.n_edges)
    tri_edges = cache.mesh.triangle_edges

    kernels = {
        "mass_elems": (
            lambda impl: impl(cache.areas, cache.qweights, cache.basis, coeff)),
        "stiff_elems": (
            lambda impl: impl(cache.areas, cache.curls, coeffT)),
        "load_elems": (
            lambda impl: impl(cache.areas, cache.qweights, cache.basis, f)),
        "eval_at_quad": (
            lambda impl: impl(dofs, tri_edges, cache.basis)),
        "curl_per_tri": (
            lambda impl: impl(dofs, tri_edges, cache.curls)),
    }
    print(f"\nlevel {level}: {T} triangles, {cache.n_edges} edges")
    print(f"{'kernel':>14} {'numpy':>12} {'numba':>12} {'speedup':>9}")
    for name, runner in kernels.items():
        t_np = timeit(lambda: runner(getattr(_kernels, f"_{name}_np")), repeats)
        if _kernels.BACKEND == "numba":
            t_nb = timeit(lambda: runner(getattr(_kernels, f"_{name}_nb")), repeats)
            print(f"{name:>14} {t_np * 1e3:>10.3f}ms {t_nb * 1e3:>10.3f}ms "
                  f"{t_np / t_nb:>8.2f}x")
        else:
            print(f"{name:>14} {t_np * 1e3:>10.3f}ms {'n/a':>12} {'':>9}")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--levels", type=int, nargs="+", default=[3, 4, 5])
    ap.add_argument("--repeats", type=int, default=20)
    args = ap.parse_args()
    print(f"active backend: {_kernels.BACKEND}")
    for level in args.levels:
        bench_level(level, args.repeats)


if __name__ == "__main__":
    main()

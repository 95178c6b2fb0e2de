"""Compare the compiled and numpy Schur-complement kernels.

Times the isolated kernel on the blocks of an assembled problem and a full
interior-point solve with each backend.  Usage:

    python benchmarks/bench_schur.py --task invert --d 3 --n 4
"""
import argparse
import time

import numpy as np

from symcomb import kernels
from symcomb.comb_sdp import assemble_sdp, comb_structure
from symcomb.sdp_solver import solve


def time_kernel(P, kernel, repeats):
    rng = np.random.default_rng(0)
    mats = []
    for n in P.block_sizes:
        G = rng.standard_normal((n, n))
        mats.append((G @ G.T + n * np.eye(n), np.linalg.inv(G @ G.T + n * np.eye(n))))
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = [kernel(A.indptr, A.indices, A.data, X, Zi) for A, (X, Zi) in zip(P.A, mats)]
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--task", default="invert")
    ap.add_argument("--d", type=int, default=3)
    ap.add_argument("--n", type=int, default=4)
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args()

    P = assemble_sdp(comb_structure(args.task, args.d, args.n))
    print(f"{args.task} d={args.d} n={args.n}: {P.m} constraints, blocks {sorted(P.block_sizes)[-5:]} (largest)")
    if kernels.BACKEND != "cython":
        print("compiled extension not available; only the numpy kernel is timed")
    names = [("numpy", kernels.schur_block_py)]
    if kernels.BACKEND == "cython":
        names.insert(0, ("cython", kernels.schur_block))
    ref = None
    for name, k in names:
        t, out = time_kernel(P, k, args.repeats)
        if ref is None:
            ref = out
            diff = 0.0
        else:
            diff = max(float(np.abs(a - b).max()) for a, b in zip(ref, out))
        t0 = time.perf_counter()
        sol = solve(P, kernel=k)
        ts = time.perf_counter() - t0
        print(f"{name:7s} kernel {t * 1e3:9.2f} ms   solve {ts:7.2f} s ({sol.iterations} it, "
              f"obj {sol.pobj:.9f})   max diff {diff:.1e}")


if __name__ == "__main__":
    main()

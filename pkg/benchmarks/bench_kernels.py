"""Time the numba kernels against their numpy/pure-Python twins.

    python benchmarks/bench_kernels.py [--repeat 5] [--quick]

With ``B2UH_NO_JIT=1`` only the fallback paths are timed. The compiled
functions are warmed up once before timing, so compilation is excluded.
"""

import argparse
import time

import numpy as np

from b2uh import kernels
from b2uh._accel import USE_NUMBA
from b2uh.consensus import Committee, run_pbft
from b2uh.grouping import Candidates
from b2uh.kernels import neighbor_counts_bruteforce


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def bench_pbft(repeat, rounds):
    rng = np.random.default_rng(0)
    masks = [rng.random(40) < 0.2 for _ in range(rounds)]

    def run(fn):
        for m in masks:
            fn(m, 0, False)

    out = {}
    if USE_NUMBA:
        kernels.pbft_round(masks[0], 0, False)
        out["numba"] = best_of(lambda: run(kernels.pbft_round), repeat)
        out["python"] = best_of(lambda: run(kernels.pbft_round.py_func), repeat)
    else:
        out["python"] = best_of(lambda: run(kernels.pbft_round), repeat)
    return f"pbft_round n=40 x{rounds}", out


def bench_mc(repeat, trials):
    out = {}
    if USE_NUMBA:
        kernels._mc_b2uh_loop(12, 4, 0.2, 10, 0)
        out["numba"] = best_of(lambda: kernels._mc_b2uh_loop(12, 4, 0.2, trials, 0), repeat)
    out["numpy"] = best_of(lambda: kernels._mc_b2uh_numpy(12, 4, 0.2, trials, 0), repeat)
    return f"two-layer Monte Carlo (12, 4, 0.2) x{trials}", out


def bench_neighbors(repeat, n):
    rng = np.random.default_rng(1)
    pos = rng.uniform(0, [2000, 1600], size=(n, 2))
    cells, ncx, ncy = kernels._grid_keys(pos, 150.0)
    out = {}
    if USE_NUMBA:
        kernels._neighbor_counts_loop(pos, cells, ncx, ncy, 150.0)
        out["numba"] = best_of(lambda: kernels._neighbor_counts_loop(pos, cells, ncx, ncy, 150.0), repeat)
    out["numpy"] = best_of(lambda: kernels._neighbor_counts_numpy(pos, cells, ncx, ncy, 150.0), repeat)
    if n <= 5000:
        out["bruteforce"] = best_of(lambda: neighbor_counts_bruteforce(pos, 150.0), repeat)
    return f"neighbor counts n={n} S=150", out


def bench_defer(repeat, nv):
    rng = np.random.default_rng(2)
    nf = max(4, nv // 20)
    cand = Candidates.from_dense(rng.random((nv, nf)))
    ids = np.arange(nv, dtype=np.int64)
    elig = cand.eligible(0.8)

    def run(fn):
        return fn(cand.ptr, cand.fogs, cand.betas, elig, ids, 19, nf)

    out = {}
    if USE_NUMBA:
        run(kernels.defer_accept_kernel)
        out["numba"] = best_of(lambda: run(kernels.defer_accept_kernel), repeat)
        out["python"] = best_of(lambda: run(kernels.defer_accept_kernel.py_func), repeat)
    else:
        out["python"] = best_of(lambda: run(kernels.defer_accept_kernel), repeat)
    return f"deferred acceptance {nv}x{nf} dense", out


def bench_round_trip(repeat, rounds):
    c = Committee(tuple(range(10)), 0)
    return f"run_pbft n=10 x{rounds} (dispatcher)", {
        "active": best_of(lambda: [run_pbft(c, "d", {3}) for _ in range(rounds)], repeat)
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--quick", action="store_true", help="smaller problem sizes")
    args = ap.parse_args()
    scale = 10 if args.quick else 1
    cases = [
        bench_pbft(args.repeat, 2000 // scale),
        bench_mc(args.repeat, 1_000_000 // scale),
        bench_neighbors(args.repeat, 2000 if args.quick else 4000),
        bench_defer(args.repeat, 400 if args.quick else 2000),
        bench_round_trip(args.repeat, 2000 // scale),
    ]
    print(f"backend: {'numba' if USE_NUMBA else 'numpy (JIT disabled)'}")
    for name, res in cases:
        base = res.get("numpy") or res.get("python")
        cols = []
        for k, v in res.items():
            ratio = f" ({base / v:.1f}x)" if base and k in ("numba",) else ""
            cols.append(f"{k} {v * 1e3:9.2f} ms{ratio}")
        print(f"{name:<42} " + "  ".join(cols))


if __name__ == "__main__":
    main()

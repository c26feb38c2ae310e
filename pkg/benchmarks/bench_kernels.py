"""Time the numba and numpy detector kernels on the same inputs.

    python benchmarks/bench_kernels.py [--T 3200] [--d 18] [--repeat 5]

Both backends are imported from the same module, so one process compares
them directly; JIT compilation is excluded by a warm-up call.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from tfmseg.kernels import NUMBA_KERNELS, NUMPY_KERNELS
from tfmseg.segmentation import bartlett_bandwidth, default_trim, generate_seeded_intervals


def best_of(fn, args, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(*args)
        times.append(time.perf_counter() - t0)
    return min(times), out


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--T", type=int, default=3200)
    ap.add_argument("--d", type=int, default=18, help="length of the stacked second-moment vector")
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    V = rng.standard_normal((args.T, args.d)) ** 2
    S = np.vstack([np.zeros(args.d), np.cumsum(V, axis=0)])
    winv = 1.0 / rng.uniform(0.5, 2.0, args.d)
    iv = generate_seeded_intervals(args.T)
    starts = np.array([a for a, _ in iv.intervals], dtype=np.int64)
    ends = np.array([b for _, b in iv.intervals], dtype=np.int64)
    g = V - V.mean(axis=0)
    bw = bartlett_bandwidth(args.T)

    cases = {
        "scan_intervals": (S, winv, starts, ends, default_trim(args.T)),
        "bartlett_diag": (g, bw),
    }
    print(f"T={args.T} d={args.d} intervals={len(iv)} bandwidth={bw}")
    if NUMBA_KERNELS is None:
        print("numba unavailable or disabled; timing numpy only")
    for name, kargs in cases.items():
        t_np, out_np = best_of(NUMPY_KERNELS[name], kargs, args.repeat)
        line = f"{name:16s} numpy {t_np * 1e3:9.3f} ms"
        if NUMBA_KERNELS is not None:
            NUMBA_KERNELS[name](*kargs)  # compile
            t_nb, out_nb = best_of(NUMBA_KERNELS[name], kargs, args.repeat)
            a = np.concatenate([np.ravel(x) for x in (out_np if isinstance(out_np, tuple) else (out_np,))])
            b = np.concatenate([np.ravel(x) for x in (out_nb if isinstance(out_nb, tuple) else (out_nb,))])
            line += f"   numba {t_nb * 1e3:9.3f} ms   speedup {t_np / t_nb:6.1f}x   max|diff| {np.max(np.abs(a - b)):.2e}"
        print(line)


if __name__ == "__main__":
    main()

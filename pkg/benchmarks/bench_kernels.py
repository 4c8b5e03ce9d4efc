"""Time the numba kernels against their numpy fallbacks.

    python3 benchmarks/bench_kernels.py [--repeat 3]

The first numba call includes JIT compilation; it is timed separately.
"""
import argparse
import time

import numpy as np

from lutna import kernels
from lutna._accel import HAS_NUMBA


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    if not HAS_NUMBA:
        raise SystemExit("numba is not importable; nothing to compare")

    rng = np.random.default_rng(args.seed)
    W = rng.integers(-255, 256, size=(256, 512))
    X = rng.integers(-255, 256, size=(512, 512))
    cases = [
        ("exhaustive exact 8b signed", lambda: kernels.exhaustive_exact_nb(8, True),
         lambda: kernels.exhaustive_exact_np(8, True)),
        ("exhaustive approx 8b split 4", lambda: kernels.exhaustive_approx_nb(8, 4),
         lambda: kernels.exhaustive_approx_np(8, 4)),
        ("matmul dnc-exact 256x512x512", lambda: kernels.matmul_nb(W, X, kernels.DNC_EXACT, 8, 0),
         lambda: kernels.matmul_np(W, X, kernels.DNC_EXACT, 8, 0)),
        ("matmul dnc-approx 256x512x512", lambda: kernels.matmul_nb(W, X, kernels.DNC_APPROX, 8, 4),
         lambda: kernels.matmul_np(W, X, kernels.DNC_APPROX, 8, 4)),
    ]
    print(f"{'kernel':32s} {'jit s':>8s} {'numba s':>9s} {'numpy s':>9s} {'speedup':>8s}")
    for name, nb, np_ in cases:
        t0 = time.perf_counter()
        nb()
        jit = time.perf_counter() - t0
        t_nb, t_np = best_of(nb, args.repeat), best_of(np_, args.repeat)
        print(f"{name:32s} {jit:8.3f} {t_nb:9.4f} {t_np:9.4f} {t_np / t_nb:7.1f}x")


if __name__ == "__main__":
    main()

"""Benchmark the compiled kernel backend against the numpy fallback.

Usage: python benchmarks/bench_kernels.py [--sizes 32,64,128] [--repeats 20]
"""

import argparse
import time

import numpy as np

from blindsr import kernels
from blindsr.degradation import gaussian_kernel, resize_contributions


def time_call(fn, *args, repeats: int) -> float:
    fn(*args)  # warm up
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn(*args)
    return (time.perf_counter() - t0) / repeats


def bench(sizes, kernel_size, dyn_kernel, repeats):
    rng = np.random.default_rng(0)
    rows = []
    for n in sizes:
        img = rng.random((n, n, 3)).astype(np.float32)
        k = gaussian_kernel(1.3, kernel_size)
        field = (rng.random((n, n, dyn_kernel ** 2)).astype(np.float32) - 0.5) / dyn_kernel ** 2
        idx, w = resize_contributions(n, n // 2)

        cases = [
            (f"blur {n}x{n} k{kernel_size}", kernels.correlate2d_reflect, (img, k)),
            (f"dynamic_conv {n}x{n} k{dyn_kernel}", kernels.dynamic_conv, (img, field)),
            (f"resample {n}->{n // 2}", kernels.resample_axis0, (img, idx, w)),
        ]
        for label, fn, args in cases:
            timings = {}
            for backend in kernels.available_backends():
                kernels.set_backend(backend)
                timings[backend] = time_call(fn, *args, repeats=repeats)
            rows.append((label, timings))
    return rows


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--sizes", default="32,64,128,256")
    parser.add_argument("--kernel-size", type=int, default=15)
    parser.add_argument("--dyn-kernel", type=int, default=15)
    parser.add_argument("--repeats", type=int, default=20)
    args = parser.parse_args()

    backends = kernels.available_backends()
    if "native" not in backends:
        print("compiled extension not available; benchmarking numpy fallback only")
    sizes = [int(s) for s in args.sizes.split(",")]
    rows = bench(sizes, args.kernel_size, args.dyn_kernel, args.repeats)

    width = max(len(r[0]) for r in rows)
    header = f"{'case':<{width}}  " + "".join(f"{b:>12}" for b in backends)
    if len(backends) > 1:
        header += f"{'speedup':>10}"
    print(header)
    print("-" * len(header))
    for label, timings in rows:
        line = f"{label:<{width}}  " + "".join(f"{timings[b] * 1e3:>10.2f}ms" for b in backends)
        if len(backends) > 1:
            line += f"{timings['numpy'] / timings['native']:>9.1f}x"
        print(line)


if __name__ == "__main__":
    main()

"""Compiled vs numpy recurrence kernels on batched trajectories.

Run: python3 benchmarks/bench_kernels.py [--batch 256] [--length 2000] [--repeat 5]
"""
import argparse
import time

import numpy as np

from afm import kernels


def _case(kind, n, rng):
    A = rng.normal(size=(n, n))
    A *= 0.8 / max(np.max(np.abs(np.linalg.eigvals(A))), 1e-12)
    return kind, A, rng.normal(size=n), rng.normal(size=n)


def bench(batch, length, repeat, n):
    rng = np.random.default_rng(0)
    U = rng.uniform(-1, 1, size=(batch, length))
    X0 = np.zeros((1, n))
    cases = {
        "linear": (_case(kernels.LINEAR, n, rng), 0, 0.0),
        "tanh": (_case(kernels.TANH, n, rng), 0, 0.0),
        "lure/tanh": (_case(kernels.LURE, n, rng), kernels.PSI_CODES["tanh"], 0.2),
    }
    print(f"batch={batch} length={length} n={n} backends={kernels.available_backends()}")
    for name, ((kind, A, B, C), pk, pg) in cases.items():
        times, outs = {}, {}
        for backend in kernels.available_backends():
            best = float("inf")
            for _ in range(repeat):
                t0 = time.perf_counter()
                outs[backend] = kernels.simulate(kind, A, B, C, X0, U, pk, pg, backend=backend)
                best = min(best, time.perf_counter() - t0)
            times[backend] = best
        line = f"{name:10s} " + "  ".join(f"{b}={t * 1e3:8.2f} ms" for b, t in times.items())
        if len(outs) == 2:
            diff = float(np.max(np.abs(outs["cython"] - outs["python"])))
            line += f"  speedup={times['python'] / times['cython']:.1f}x  max|diff|={diff:.1e}"
        print(line)


if __name__ == "__main__":
    p = argparse.ArgumentParser()
    p.add_argument("--batch", type=int, default=256)
    p.add_argument("--length", type=int, default=2000)
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--n", type=int, default=2)
    a = p.parse_args()
    bench(a.batch, a.length, a.repeat, a.n)

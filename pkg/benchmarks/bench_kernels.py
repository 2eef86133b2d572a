"""Compare the numba kernels against the pure-numpy fallback.

Run from the repository root:

    python3 benchmarks/bench_kernels.py [--repeats 20]

Shapes mirror the training hot path (batch 16, toy widths, 64-step rolls)
and the sampler's per-step rhythm selection.
"""

import argparse
import time

import numpy as np

from ftg.kernels import get_impl
from ftg.theory import R_AT_LEAST, R_EXACTLY, R_FREE, R_NONE


def timeit(fn, repeats):
    fn()                                   # warmup (numba jit compile)
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_case(name, make_args, call, repeats):
    rows = []
    args = make_args()
    for backend in ("numpy", "numba"):
        try:
            impl = get_impl(backend)
        except Exception as err:
            rows.append((backend, None, f"unavailable: {err}"))
            continue
        dt = timeit(lambda: call(impl, *args), repeats)
        rows.append((backend, dt, None))
    print(f"\n{name}")
    base = next((dt for b, dt, _ in rows if b == "numpy" and dt), None)
    for backend, dt, note in rows:
        if dt is None:
            print(f"  {backend:<6} {note}")
        else:
            speedup = f"  ({base / dt:4.1f}x vs numpy)" if base else ""
            print(f"  {backend:<6} {dt * 1e3:8.3f} ms{speedup}")


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=20)
    args = parser.parse_args()
    rng = np.random.default_rng(0)

    x = rng.standard_normal((16, 6, 64, 128)).astype(np.float32)
    w1 = rng.standard_normal((8, 6, 3, 3)).astype(np.float32)
    b1 = rng.standard_normal(8).astype(np.float32)
    bench_case("conv3x3 forward (16, 6->8, 64x128)",
               lambda: (x, w1, b1),
               lambda impl, *a: impl.conv3x3_forward(*a), args.repeats)

    gy = rng.standard_normal((16, 8, 64, 128)).astype(np.float32)
    bench_case("conv3x3 backward (16, 6->8, 64x128)",
               lambda: (x, w1, gy),
               lambda impl, *a: impl.conv3x3_backward(*a), args.repeats)

    p = rng.random((4, 64, 128))
    candidates = rng.random((64, 128)) < 0.6
    kinds = rng.choice([R_FREE, R_EXACTLY, R_AT_LEAST, R_NONE],
                       size=64).astype(np.int8)
    ns = rng.integers(1, 5, size=64).astype(np.int32)
    bench_case("rhythm_select (4 trajectories, 64x128)",
               lambda: (np.ascontiguousarray(p),
                        np.ascontiguousarray(candidates), kinds, ns, 1e-6),
               lambda impl, *a: impl.rhythm_select(*a), args.repeats)


if __name__ == "__main__":
    main()

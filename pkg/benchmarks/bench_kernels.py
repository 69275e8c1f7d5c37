"""Timing comparison of the compiled kernels against the NumPy fallback.

Runs both implementations on identical inputs, checks they agree
bit-for-bit, and prints per-call medians plus the speedup. Usage:

    python3 benchmarks/bench_kernels.py [--size 256] [--points 600] [--repeats 30]
"""

import argparse
import statistics
import time

import numpy as np

from dnseg import bezier
from dnseg.kernels import _fallback

try:
    from dnseg.kernels import _core
except ImportError:
    _core = None


def _time(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def _report(name, py_t, cy_t):
    line = f"{name:<24} python {py_t * 1e3:8.3f} ms"
    if cy_t is not None:
        line += f"   cython {cy_t * 1e3:8.3f} ms   speedup {py_t / cy_t:6.2f}x"
    print(line)


def bench_lut(size, repeats, rng):
    curve = bezier.make_curve(bezier.CurveDirection.INCREASING, 0.5)
    image = rng.uniform(-1.0, 1.0, size=(size, size))
    mask = rng.uniform(size=(size, size)) > 0.3

    py = _time(lambda: _fallback.lut_apply(image, curve.lut_x, curve.lut_y, mask), repeats)
    cy = None
    if _core is not None:
        cy = _time(lambda: _core.lut_apply(image, curve.lut_x, curve.lut_y, mask), repeats)
        a = _fallback.lut_apply(image, curve.lut_x, curve.lut_y, mask)
        b = _core.lut_apply(image, curve.lut_x, curve.lut_y, mask)
        assert np.array_equal(a, b), "backends disagree on lut_apply"
    _report(f"lut_apply {size}x{size}", py, cy)


def bench_hausdorff(points, repeats, rng):
    a = rng.integers(0, 512, size=(points, 2)).astype(np.int64)
    b = rng.integers(0, 512, size=(points, 2)).astype(np.int64)

    py = _time(lambda: _fallback.directed_hausdorff(a, b, 1.0, 1.0), repeats)
    cy = None
    if _core is not None:
        cy = _time(lambda: _core.directed_hausdorff(a, b, 1.0, 1.0), repeats)
        assert _fallback.directed_hausdorff(a, b, 1.0, 1.0) == _core.directed_hausdorff(
            a, b, 1.0, 1.0
        ), "backends disagree on directed_hausdorff"
    _report(f"hausdorff {points}pts", py, cy)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--size", type=int, default=256)
    parser.add_argument("--points", type=int, default=600)
    parser.add_argument("--repeats", type=int, default=30)
    args = parser.parse_args()

    if _core is None:
        print("compiled extension not built; timing the fallback only")
    rng = np.random.default_rng(0)
    bench_lut(args.size, args.repeats, rng)
    bench_hausdorff(args.points, args.repeats, rng)


if __name__ == "__main__":
    main()

"""Benchmark the compiled bit kernels against the NumPy fallback.

Both implementations are imported side by side, so one run reports the
speedup of the extension on this machine. Exercises the two hot loops
(row-wise popcount and Hamming distance) over packed templates of a few
realistic geometries.

Usage:
    python3 benchmarks/bench_kernels.py [--rows N] [--repeats R]
"""

import argparse
import time

import numpy as np

from unlinkeval import _kernels_py
from unlinkeval.kernels import pack_rows

try:
    from unlinkeval import _kernels as _ext
except ImportError:
    _ext = None


def _median_time(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return float(np.median(times))


def bench(rows, bits, repeats, rng):
    a = pack_rows((rng.random((rows, bits)) < 0.5).astype(np.uint8))
    b = pack_rows((rng.random((rows, bits)) < 0.5).astype(np.uint8))

    cases = [
        ("popcount", lambda impl: impl.popcount_rows(a)),
        ("hamming", lambda impl: impl.hamming_rows(a, b)),
    ]
    for name, call in cases:
        t_py = _median_time(lambda: call(_kernels_py), repeats)
        line = f"{rows:>9} x {bits:<5} {name:<9} numpy {t_py * 1e3:8.2f} ms"
        if _ext is not None:
            # equality check guards against benchmarking diverging kernels
            assert np.array_equal(call(_ext), call(_kernels_py))
            t_c = _median_time(lambda: call(_ext), repeats)
            line += f"   compiled {t_c * 1e3:8.2f} ms   speedup {t_py / t_c:5.1f}x"
        print(line)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--rows", type=int, default=200_000,
                        help="template pairs per case (default 200000)")
    parser.add_argument("--repeats", type=int, default=7,
                        help="repeats per case, median reported (default 7)")
    args = parser.parse_args()

    if _ext is None:
        print("compiled extension not available; timing the fallback only")
    rng = np.random.default_rng(0)
    for bits in (64, 512, 4096):
        bench(args.rows, bits, args.repeats, rng)


if __name__ == "__main__":
    main()

"""Benchmark: compiled pool-adjacent-violators kernel vs pure-Python fallback.

Run with `python benchmarks/bench_pava.py`.  Times the row-batched isotonic
fit on Gaussian batches at the sizes the Monte-Carlo engines use, verifies
the two implementations agree bitwise-closely, and reports the speedup.
"""

import time

import numpy as np

from conelrt._kernels import _pava_py

try:
    from conelrt._kernels import _pava as compiled
except ImportError:
    compiled = None


def time_call(fn, *args, repeat=3):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    rng = np.random.default_rng(0)
    print(f"{'rows x n':>14} {'python (s)':>12} {'compiled (s)':>13} {'speedup':>9}")
    for rows, n in [(2000, 256), (2000, 1024), (500, 4096)]:
        Y = rng.standard_normal((rows, n))
        t_py = time_call(_pava_py.pava_batch, Y, repeat=1)
        if compiled is None:
            print(f"{rows:>6} x {n:<5} {t_py:>12.4f} {'(not built)':>13} {'-':>9}")
            continue
        t_cy = time_call(compiled.pava_batch, Y)
        fit_py, nb_py = _pava_py.pava_batch(Y)
        fit_cy, nb_cy = compiled.pava_batch(Y)
        assert np.array_equal(nb_py, nb_cy)
        assert np.allclose(fit_py, fit_cy, atol=1e-12)
        print(f"{rows:>6} x {n:<5} {t_py:>12.4f} {t_cy:>13.4f} {t_py / t_cy:>8.1f}x")
    if compiled is None:
        print("compiled kernel unavailable; install with `pip install -e .` to build it")


if __name__ == "__main__":
    main()

"""Benchmark the numba kernels against the pure-numpy fallback.

The backend is chosen at import time from the MCFSPI_NO_NUMBA environment
variable, so each backend runs in its own subprocess.  Invoke with no
arguments to print a comparison table:

    python3 benchmarks/bench_kernels.py

or time one backend directly:

    MCFSPI_NO_NUMBA=1 python3 benchmarks/bench_kernels.py --single
"""

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np

CASES = [
    # (name, Q, M, n)
    ("small", 32, 200, 32),
    ("medium", 110, 2000, 64),
    ("large", 110, 20000, 64),
]
REPEATS = 5


def _bench_single():
    from mcfspi import _kernels

    results = {"backend": _kernels.backend(), "cases": {}}
    rng = np.random.default_rng(0)
    for name, Q, M, n in CASES:
        A = (rng.normal(size=(M, Q)) + 1j * rng.normal(size=(M, Q))) / np.sqrt(2 * Q)
        H = rng.normal(size=(Q, Q)) + 1j * rng.normal(size=(Q, Q))
        H = np.ascontiguousarray(H + H.conj().T)
        y = rng.normal(size=M)
        bx = rng.uniform(-n / 4, n / 4, size=Q)
        by = rng.uniform(-n / 4, n / 4, size=Q)
        alpha = A[0] * np.sqrt(Q)

        timings = {}
        for label, fn in (
            ("srop_quadforms", lambda: _kernels.srop_quadforms(A, H)),
            ("srop_accumulate", lambda: _kernels.srop_accumulate(A, y)),
            ("speckle_field", lambda: _kernels.speckle_field(bx, by, alpha, n)),
        ):
            fn()  # warm-up (numba compilation happens here)
            best = min(_timed(fn) for _ in range(REPEATS))
            timings[label] = best
        results["cases"][name] = {"Q": Q, "M": M, "n": n, "seconds": timings}
    return results


def _timed(fn):
    t0 = time.perf_counter()
    fn()
    return time.perf_counter() - t0


def _run_backend(no_numba):
    env = dict(os.environ, MCFSPI_NO_NUMBA="1" if no_numba else "0")
    out = subprocess.run(
        [sys.executable, os.path.abspath(__file__), "--single"],
        env=env, capture_output=True, text=True, check=True,
    )
    return json.loads(out.stdout.splitlines()[-1])


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--single", action="store_true",
                        help="benchmark only the backend selected by the environment")
    args = parser.parse_args()

    if args.single:
        print(json.dumps(_bench_single()))
        return

    numba_res = _run_backend(no_numba=False)
    numpy_res = _run_backend(no_numba=True)
    print(f"backends: {numba_res['backend']} vs {numpy_res['backend']}")
    header = f"{'case':<8} {'kernel':<18} {'numba [ms]':>12} {'numpy [ms]':>12} {'speedup':>9}"
    print(header)
    print("-" * len(header))
    for name, _, _, _ in CASES:
        for kernel in ("srop_quadforms", "srop_accumulate", "speckle_field"):
            tb = numba_res["cases"][name]["seconds"][kernel]
            tp = numpy_res["cases"][name]["seconds"][kernel]
            print(f"{name:<8} {kernel:<18} {tb * 1e3:>12.3f} {tp * 1e3:>12.3f} "
                  f"{tp / tb:>8.2f}x")


if __name__ == "__main__":
    main()

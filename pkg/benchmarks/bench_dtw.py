"""Compare the numba and numpy DTW backends.

Run ``python benchmarks/bench_dtw.py``. Setting ``MSGAIT_DISABLE_NUMBA=1``
restricts the run to the numpy backend.
"""
import argparse
import time

import numpy as np

from msgait import kernels
from msgait._accel import HAVE_NUMBA


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--length", type=int, default=45, help="samples per sequence (one gait cycle)")
    ap.add_argument("--rows", type=int, default=50, help="sequences on the subject side")
    ap.add_argument("--cols", type=int, default=50, help="sequences on the reference side")
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    rng = np.random.default_rng(args.seed)

    def seqs(n):
        return [rng.uniform(0, 60, size=args.length + int(rng.integers(-5, 6))) for _ in range(n)]

    a, b = seqs(args.rows), seqs(args.cols)
    backends = ["numpy"] + (["numba"] if HAVE_NUMBA else [])
    results = {}
    for name in backends:
        with kernels.use_backend(name):
            kernels.pairwise(a[:2], b[:2])  # compile / warm up
            single = best_of(lambda: kernels.distance(a[0], b[0]), args.repeat * 10)
            batch = best_of(lambda: kernels.pairwise(a, b), args.repeat)
            results[name] = kernels.pairwise(a, b)
        pairs = args.rows * args.cols
        print(f"{name:6s} single pair {single * 1e6:9.1f} us   {pairs} pairs {batch * 1e3:9.1f} ms")
    if len(results) == 2:
        same = np.array_equal(results["numpy"], results["numba"])
        print(f"backends bit-identical: {same}")


if __name__ == "__main__":
    main()

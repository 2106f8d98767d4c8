"""Compare the compiled kernels with the pure-numpy fallback.

Both backends must give bit-identical results; this script checks that
and reports the median time of each.

    python3 benchmarks/bench_kernels.py [--sizes 64,128,256] [--repeat 5]
"""
import argparse
import statistics
import time

import numpy as np

from orthokd import _fallback

try:
    from orthokd import _kernels
except ImportError:
    _kernels = None


def median_ms(fn, *args, repeat=5):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        times.append((time.perf_counter() - t0) * 1e3)
    return statistics.median(times)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", default="64,128,256")
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if _kernels is None:
        print("compiled kernels not built; nothing to compare")
        return 1
    rng = np.random.default_rng(0)
    print("kernel,n,compiled_ms,fallback_ms,speedup,identical")
    for n in (int(s) for s in args.sizes.split(",")):
        a = rng.standard_normal((n, n))
        b = rng.standard_normal((n, n))
        z = rng.standard_normal((4 * n, min(n, 64)))
        cases = [("gemm", (a, b)), ("col_dist", (z, z[::-1].copy()))]
        for name, inputs in cases:
            fast, slow = getattr(_kernels, name), getattr(_fallback, name)
            same = fast(*inputs).tobytes() == slow(*inputs).tobytes()
            t_fast = median_ms(fast, *inputs, repeat=args.repeat)
            t_slow = median_ms(slow, *inputs, repeat=args.repeat)
            print(f"{name},{n},{t_fast:.3f},{t_slow:.3f},{t_slow / t_fast:.2f},{same}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

"""Compare the compiled kernels with the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--size N] [--repeat R]

Prints per-kernel best-of-R timings, the speedup, and the largest absolute
difference between the two backends' outputs.
"""
import argparse
import timeit

import numpy as np

from pessirank import _fallback


def _inputs(size, rng):
    return {
        "log_gamma_array": (rng.uniform(0.01, 500.0, size),),
        "betainc_array": (rng.uniform(0.5, 200.0, size), rng.uniform(0.5, 200.0, size), rng.random(size)),
        "betaincinv_array": (rng.uniform(0.5, 200.0, size), rng.uniform(0.5, 200.0, size), rng.random(size)),
    }


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--size", type=int, default=5_000)
    parser.add_argument("--repeat", type=int, default=3)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    try:
        from pessirank import _speedups
    except ImportError:
        print("compiled kernels are not built; nothing to compare")
        return 1

    rng = np.random.default_rng(args.seed)
    print(f"{'kernel':<18}{'python s':>12}{'compiled s':>12}{'speedup':>10}{'max |diff|':>14}")
    for name, inputs in _inputs(args.size, rng).items():
        slow, fast = getattr(_fallback, name), getattr(_speedups, name)
        t_slow = min(timeit.repeat(lambda: slow(*inputs), number=1, repeat=args.repeat))
        t_fast = min(timeit.repeat(lambda: fast(*inputs), number=1, repeat=args.repeat))
        diff = float(np.max(np.abs(np.asarray(slow(*inputs)) - np.asarray(fast(*inputs)))))
        print(f"{name:<18}{t_slow:>12.4f}{t_fast:>12.4f}{t_slow / t_fast:>9.1f}x{diff:>14.3g}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

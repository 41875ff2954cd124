"""Benchmark the compiled constraint kernels against the numpy fallback.

Run from the repository root after installing the package:

    python3 benchmarks/bench_kernels.py --events 1000000
"""

import argparse
import time

import numpy as np

from evline._kernels import _celc_numpy, backend_name

try:
    from evline._kernels import _celc
except ImportError:
    _celc = None


def _random_inputs(n_events, rng):
    l1 = rng.normal(size=3)
    l1 /= np.linalg.norm(l1)
    l3 = rng.normal(size=3)
    l3 /= np.linalg.norm(l3)
    omega = rng.normal(size=3)
    t = np.sort(rng.uniform(0.0, 0.5, n_events))
    f = rng.normal(size=(n_events, 3))
    f /= np.linalg.norm(f, axis=1, keepdims=True)
    return l1, l3, 0.0, 0.5, omega, t, f


def _time(fn, args, repeats):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--events", type=int, default=1_000_000)
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    rng = np.random.default_rng(args.seed)
    inputs = _random_inputs(args.events, rng)
    print(f"selected backend at import: {backend_name()}")
    print(f"{args.events} events, best of {args.repeats} runs\n")

    rows_np = _celc_numpy.celc_rows(*inputs)
    t_np = _time(_celc_numpy.celc_rows, inputs, args.repeats)
    print(f"numpy  celc_rows: {t_np * 1e3:8.2f} ms "
          f"({args.events / t_np / 1e6:6.1f} M events/s)")

    if _celc is None:
        print("cython extension not built; skipping compiled timing")
        return
    rows_cy = _celc.celc_rows(*inputs)
    t_cy = _time(_celc.celc_rows, inputs, args.repeats)
    print(f"cython celc_rows: {t_cy * 1e3:8.2f} ms "
          f"({args.events / t_cy / 1e6:6.1f} M events/s)")
    print(f"\nspeedup: {t_np / t_cy:.2f}x, max abs difference: "
          f"{np.abs(rows_np - rows_cy).max():.3e}")


if __name__ == "__main__":
    main()

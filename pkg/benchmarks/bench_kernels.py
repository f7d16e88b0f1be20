"""Time the numpy kernels against their numba twins.

Run from the repository root:

    python3 benchmarks/bench_kernels.py
    python3 benchmarks/bench_kernels.py --n 20000 --k 16 --repeats 9

The numba column includes a warmup call outside the clock, so the numbers
compare steady-state throughput, not JIT compilation.
"""

import argparse
import statistics
import time

import numpy as np

from dmll import _kernels_nb, _kernels_np


def _time(fn, args, repeats: int) -> float:
    fn(*args)  # warmup; JIT compiles here on the numba side
    samples = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        samples.append(time.perf_counter() - t0)
    return statistics.median(samples)


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--n", type=int, default=10_000, help="rows per batch")
    parser.add_argument("--k", type=int, default=12, help="classes (powerset kernel enumerates 2^k)")
    parser.add_argument("--repeats", type=int, default=7)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    rng = np.random.default_rng(args.seed)
    probs = rng.uniform(0.02, 0.98, size=(args.n, args.k))
    soft = rng.uniform(0.0, 1.0, size=(args.n, args.k))
    labels = rng.random((args.n, args.k)) < 0.3
    vec_probs = rng.uniform(0.02, 0.98, size=args.k)
    vec_cond = rng.uniform(0.0, 1.0, size=args.k)

    cases = [
        ("soft_bce", (probs, soft)),
        ("set_bce", (probs, labels)),
        ("powerset_expected_loss", (vec_probs, vec_cond)),
        ("ranking_terms", (probs, labels)),
    ]
    print(f"n={args.n} k={args.k} repeats={args.repeats} (median seconds)")
    print(f"{'kernel':<24} {'numpy':>10} {'numba':>10} {'speedup':>8}")
    for name, case_args in cases:
        t_np = _time(getattr(_kernels_np, name), case_args, args.repeats)
        t_nb = _time(getattr(_kernels_nb, name), case_args, args.repeats)
        print(f"{name:<24} {t_np:>10.6f} {t_nb:>10.6f} {t_np / t_nb:>7.2f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

"""Benchmark the numba kernels against the pure-numpy fallback.

Times the three distinct hot kernels (``conv2d_grad_input`` reuses the
forward kernel on a flipped filter, so it is covered by the forward rows)
and verifies that both flavours agree on every case before timing them.

Usage:
    python3 benchmarks/bench_kernels.py [--repeats N] [--seed S]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from hvgan import kernels


def best_of(fn, args, repeats: int) -> float:
    """Best wall time in seconds over ``repeats`` calls (after one warmup)."""
    fn(*args)
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def conv_cases(rng):
    for label, xshape, oc in (
        ("conv2d forward 4x8x16x16 k3", (4, 8, 16, 16), 16),
        ("conv2d forward 4x16x48x48 k3", (4, 16, 48, 48), 16),
        ("conv2d forward 1x16x96x96 k5", (1, 16, 96, 96), 8),
    ):
        k = 5 if label.endswith("k5") else 3
        x = rng.standard_normal(xshape)
        w = rng.standard_normal((oc, xshape[1], k, k))
        yield label, (x, w)


def grad_weight_cases(rng):
    for label, xshape, oc in (
        ("conv2d grad-weight 4x8x16x16 k3", (4, 8, 16, 16), 16),
        ("conv2d grad-weight 4x16x48x48 k3", (4, 16, 48, 48), 16),
    ):
        x = rng.standard_normal(xshape)
        gy = rng.standard_normal((xshape[0], oc, xshape[2], xshape[3]))
        yield label, (x, gy, 3, 3)


def dominance_cases(rng):
    for label, m, k, n in (
        ("dominance 200k samples, 64 pts, 3d", 200_000, 64, 3),
        ("dominance 1M samples, 8 pts, 2d", 1_000_000, 8, 2),
    ):
        samples = rng.uniform(size=(m, n))
        points = rng.uniform(size=(k, n))
        yield label, (samples, points)


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    if not kernels.NUMBA_AVAILABLE:
        print("numba is not importable; nothing to compare against.")
        print("Install numba or rerun without HVGAN_KERNELS=numpy.")
        return 0

    rng = np.random.default_rng(args.seed)
    groups = [
        (kernels.conv2d_forward_numpy, kernels.conv2d_forward_numba,
         list(conv_cases(rng))),
        (kernels.conv2d_grad_weight_numpy, kernels.conv2d_grad_weight_numba,
         list(grad_weight_cases(rng))),
        (kernels.count_dominated_numpy, kernels.count_dominated_numba,
         list(dominance_cases(rng))),
    ]

    width = max(len(label) for _, _, cases in groups for label, _ in cases)
    print(f"{'case':<{width}}  {'numpy':>10}  {'numba':>10}  {'speedup':>8}")
    for fn_numpy, fn_numba, cases in groups:
        for label, call_args in cases:
            a = np.asarray(fn_numpy(*call_args), dtype=np.float64)
            b = np.asarray(fn_numba(*call_args), dtype=np.float64)
            gap = float(np.max(np.abs(a - b)))
            if gap > 1e-9:
                print(f"{label}: backends disagree by {gap:.3e}")
                return 1
            t_numpy = best_of(fn_numpy, call_args, args.repeats)
            t_numba = best_of(fn_numba, call_args, args.repeats)
            print(
                f"{label:<{width}}  {t_numpy * 1e3:>8.2f}ms  "
                f"{t_numba * 1e3:>8.2f}ms  {t_numpy / t_numba:>7.2f}x"
            )
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

"""Time the numba kernels against the pure-numpy fallback.

Run from the repository root:

    python3 benchmarks/kernel_benchmark.py [--paths 20000] [--steps 512] [--rate 1.0]

The numbers that matter are the per-call medians after warmup; the first
numba call includes JIT compilation and is reported separately.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from levyhjm import kernels
from levyhjm.measures import DoubleExponentialMeasure
from levyhjm.paths import LevyTriplet, simulate_batch


def make_data(n_paths: int, n_steps: int, rate: float, seed: int = 1234):
    measure = DoubleExponentialMeasure(lam=rate, p=0.5, eta_plus=2.0, eta_minus=2.0)
    triplet = LevyTriplet(a=0.05, q=0.02, measure=measure)
    grid = np.linspace(0.0, 1.0, n_steps + 1)
    batch = simulate_batch(triplet, grid, seed, 0, n_paths)
    return grid, batch


def bench(fn, args, repeats: int = 7):
    first = None
    times = []
    for i in range(repeats + 1):
        t0 = time.perf_counter()
        fn(*args)
        dt = time.perf_counter() - t0
        if i == 0:
            first = dt
        else:
            times.append(dt)
    return first, float(np.median(times))


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--paths", type=int, default=20000)
    ap.add_argument("--steps", type=int, default=512)
    ap.add_argument("--rate", type=float, default=1.0)
    ns = ap.parse_args()

    grid, batch = make_data(ns.paths, ns.steps, ns.rate)
    n_jumps = batch.jump_times.shape[0]
    print(f"backend available: numba={kernels.NUMBA_AVAILABLE}, active={kernels.active_backend()}")
    print(f"{ns.paths} paths x {ns.steps} steps, {n_jumps} jumps total\n")

    comp = grid * ns.rate
    keys = np.repeat(np.arange(batch.n_paths), np.diff(batch.offsets))
    vals2d = np.ones((n_jumps, 3))
    cases = [
        (
            "cumulative_jump_sums",
            (grid, batch.jump_times, batch.jump_sizes, batch.offsets),
            kernels._cumulative_jump_sums_numba,
            kernels._cumulative_jump_sums_numpy,
        ),
        (
            "segment_sums",
            (batch.jump_sizes, batch.offsets),
            kernels._segment_sums_numba,
            kernels._segment_sums_numpy,
        ),
        (
            "accumulate_jump_matrix",
            (grid, batch.jump_times, batch.offsets, vals2d),
            kernels._accumulate_jump_matrix_numba,
            kernels._accumulate_jump_matrix_numpy,
        ),
        (
            "stopped_compensated_scan",
            (grid, batch.jump_times, batch.jump_sizes, batch.offsets, comp, 0.5),
            kernels._stopped_scan_numba,
            kernels._stopped_scan_numpy,
        ),
        (
            "segmented_prior_cumsum",
            (keys, vals2d),
            kernels._segmented_prior_cumsum_numba,
            kernels._segmented_prior_cumsum_numpy,
        ),
    ]

    header = f"{'kernel':28s} {'numba jit+1st':>14s} {'numba':>10s} {'numpy':>10s} {'speedup':>8s}"
    print(header)
    print("-" * len(header))
    for name, args, fn_nb, fn_np in cases:
        if kernels.NUMBA_AVAILABLE:
            first_nb, med_nb = bench(fn_nb, args)
        else:
            first_nb, med_nb = float("nan"), float("nan")
        _, med_np = bench(fn_np, args)
        speed = med_np / med_nb if med_nb == med_nb else float("nan")
        print(
            f"{name:28s} {first_nb * 1e3:13.1f}ms {med_nb * 1e3:9.2f}ms"
            f" {med_np * 1e3:9.2f}ms {speed:7.1f}x"
        )

    # segment_sums rides numpy's vectorized reduction, whose summation order
    # can differ from the scalar loop by one ulp; everything else is
    # order-identical in both backends.
    loose = {"segment_sums"}
    for name, args, fn_nb, fn_np in cases:
        if not kernels.NUMBA_AVAILABLE:
            break
        out_nb = fn_nb(*args)
        out_np = fn_np(*args)
        pairs = zip(out_nb, out_np) if isinstance(out_nb, tuple) else [(out_nb, out_np)]
        for a, b in pairs:
            if name in loose:
                same = np.allclose(a, b, rtol=1e-12, atol=1e-15)
            else:
                same = np.array_equal(a, b)
            if not same:
                raise SystemExit(f"backend mismatch in {name}")
    print("\nbackends agree (bit-for-bit, reductions to 1e-12) on all kernels")


if __name__ == "__main__":
    main()

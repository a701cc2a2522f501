"""Timing comparison of the python and cython kernel backends.

Times the two hot kernels (batched drift evaluation, batched RK4) at a
few problem sizes and prints a table with the speedup.  Run directly:

    python3 benchmarks/bench_kernels.py [--samples N] [--repeat R]
"""

import argparse
import time

import numpy as np

from nstorus import kernels
from nstorus.measure import MeasureSpec, sample_batch
from nstorus.nonlinear import build_term_table, extend_ones, stage_weights, term_weights


def best_of(repeat, fn):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def bench_case(dim, radius, samples, steps, repeat):
    spec = MeasureSpec(dim, radius, 0.0, float(radius) + dim / 2, 0.5)
    table = build_term_table(dim, radius)
    X = extend_ones(sample_batch(spec, 0, samples))
    w_drift = term_weights(table, 0.2, spec.nu)
    w_rk4 = stage_weights(table, 0.0, 1.0 / steps, steps, spec.nu)
    snap = np.array([steps], dtype=np.int64)

    rows = []
    for op, run in (
        ("drift", lambda impl: impl.drift_batch(
            X, table.i1, table.i2, w_drift, table.seg_bounds,
            table.seg_slots, table.nslots)),
        ("rk4", lambda impl: impl.rk4_batch(
            X, 1.0 / steps, table.i1, table.i2, table.seg_bounds,
            table.seg_slots, w_rk4, snap)),
    ):
        timings = {}
        for name in ("python", "cython"):
            try:
                _, impl = kernels.get_backend(name)
            except ImportError:
                timings[name] = None
                continue
            run(impl)  # warm-up excluded from timing
            timings[name] = best_of(repeat, lambda: run(impl))
        rows.append((op, timings))
    return rows


def fmt(seconds):
    return "    n/a" if seconds is None else f"{seconds * 1e3:7.2f}"


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--samples", type=int, default=512)
    ap.add_argument("--steps", type=int, default=100)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    print(f"default backend: {kernels.BACKEND}")
    print(f"{'case':24s} {'op':6s} {'python ms':>9s} {'cython ms':>9s} {'speedup':>8s}")
    for dim, radius in ((2, 3), (2, 6), (3, 2), (3, 3)):
        case = f"d={dim} n={radius} M={args.samples}"
        for op, t in bench_case(dim, radius, args.samples, args.steps,
                                args.repeat):
            py, cy = t["python"], t["cython"]
            speed = "n/a" if not (py and cy) else f"{py / cy:7.1f}x"
            print(f"{case:24s} {op:6s} {fmt(py):>9s} {fmt(cy):>9s} {speed:>8s}")


if __name__ == "__main__":
    main()

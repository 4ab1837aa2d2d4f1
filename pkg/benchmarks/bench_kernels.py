"""Benchmark the compiled kernels against the numpy fallback.

Runs each hot kernel on realistic tensor sizes under both lanes and
prints a table of best-of-N wall times plus the speedup. The two lanes
are bit-exact by contract, so this is purely a performance comparison.

Usage: python3 benchmarks/bench_kernels.py [--repeats N] [--size C,H,W]
"""
import argparse
import time

import numpy as np

import eadt._kernels_py as lane_py

try:
    import eadt._kernels as lane_c
except ImportError:
    lane_c = None


def best_of(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def build_cases(c, h, w, stack_depth):
    rng = np.random.default_rng(12345)
    prob = rng.random((c, h, w), dtype=np.float32)
    mask_a = (rng.random((c, h, w)) > 0.5).astype(np.uint8)
    mask_b = (rng.random((c, h, w)) > 0.5).astype(np.uint8)
    stack = rng.random((stack_depth, c, h, w), dtype=np.float32)
    areas = np.full(c, h * w // 20, dtype=np.int64)

    u8 = np.empty((c, h, w), np.uint8)
    f32 = np.empty((c, h, w), np.float32)
    i64_c = np.empty(c, np.int64)
    i64_c3 = np.empty((c, 3), np.int64)

    return [
        ("binarize", lambda k: k.binarize(prob, 0.5, u8)),
        ("count_above", lambda k: k.count_above(prob, 0.7, i64_c)),
        ("positive_areas", lambda k: k.positive_areas(mask_a, i64_c)),
        ("triple_threshold", lambda k: k.triple_threshold(prob, 0.7, 0.5, areas, u8)),
        ("pair_counts", lambda k: k.pair_counts(mask_a, mask_b, i64_c3)),
        (f"mean_stack(x{stack_depth})", lambda k: k.mean_stack(stack, f32)),
    ]


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--size", default="5,512,512",
                        help="tensor size as C,H,W")
    parser.add_argument("--stack-depth", type=int, default=4,
                        help="number of maps averaged by mean_stack")
    args = parser.parse_args()
    c, h, w = (int(v) for v in args.size.split(","))

    if lane_c is None:
        print("compiled lane not available; showing numpy lane only")
    cases = build_cases(c, h, w, args.stack_depth)

    print(f"tensor {c}x{h}x{w}, best of {args.repeats}")
    header = f"{'kernel':22} {'numpy':>12} {'compiled':>12} {'speedup':>9}"
    print(header)
    print("-" * len(header))
    for name, call in cases:
        t_py = best_of(lambda: call(lane_py), args.repeats)
        if lane_c is not None:
            t_c = best_of(lambda: call(lane_c), args.repeats)
            print(f"{name:22} {t_py * 1e3:10.3f}ms {t_c * 1e3:10.3f}ms "
                  f"{t_py / t_c:8.1f}x")
        else:
            print(f"{name:22} {t_py * 1e3:10.3f}ms {'-':>12} {'-':>9}")


if __name__ == "__main__":
    main()

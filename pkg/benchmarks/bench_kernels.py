"""Benchmark the compiled kernel backend against the numpy fallback.

Times the four hot kernels (conv forward, both conv backward passes, exact
squared EDT) on representative shapes, plus an end-to-end Score-CAM run per
backend, and prints a table with speedups. Run from the repo root:

    python3 benchmarks/bench_kernels.py
"""

import argparse
import time

import numpy as np

import fundus_xai._kernels as kernels
from fundus_xai._kernels import fallback
from fundus_xai import backbone, cam


def best_of(fn, repeats):
    """Minimum wall time over `repeats` runs; min is the stablest estimator
    for short CPU-bound kernels."""
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def conv_cases(rng):
    """(name, x, kernel, bias, stride, pad) for the backbone's two layers and
    one larger grid to show scaling."""
    cases = []
    for name, hwc, cout, stride in (
        ("conv 32x32x3 -> 8, s1", (32, 32, 3), 8, 1),
        ("conv 16x16x8 -> 16, s2", (16, 16, 8), 16, 2),
        ("conv 128x128x8 -> 16, s1", (128, 128, 8), 16, 1),
    ):
        x = rng.random(hwc)
        k = rng.standard_normal((3, 3, hwc[2], cout)) * 0.1
        b = np.zeros(cout)
        cases.append((name, x, k, b, stride, 1))
    return cases


def bench_pair(label, make_compiled, make_fallback, repeats, rows):
    t_fast = best_of(make_compiled, repeats)
    t_slow = best_of(make_fallback, repeats)
    rows.append((label, t_fast, t_slow))


def run_conv_benches(rng, repeats, rows):
    for name, x, k, b, stride, pad in conv_cases(rng):
        bench_pair(name,
                   lambda: kernels.conv2d_forward(x, k, b, stride, pad),
                   lambda: fallback.conv2d_forward(x, k, b, stride, pad),
                   repeats, rows)
        out = kernels.conv2d_forward(x, k, b, stride, pad)
        go = rng.standard_normal(out.shape)
        bench_pair(name.replace("conv", "conv dL/dK"),
                   lambda: kernels.conv2d_backward_kernel(x, go, stride, pad,
                                                          3, 3),
                   lambda: fallback.conv2d_backward_kernel(x, go, stride, pad,
                                                           3, 3),
                   repeats, rows)
        bench_pair(name.replace("conv", "conv dL/dX"),
                   lambda: kernels.conv2d_backward_input(go, k, stride, pad,
                                                         x.shape[0], x.shape[1]),
                   lambda: fallback.conv2d_backward_input(go, k, stride, pad,
                                                          x.shape[0], x.shape[1]),
                   repeats, rows)


def run_edt_benches(rng, repeats, rows):
    for size in (64, 256, 512):
        mask = np.ascontiguousarray(rng.random((size, size)) < 0.3,
                                    dtype=np.uint8)
        bench_pair(f"edt {size}x{size}",
                   lambda: kernels.edt_sq(mask),
                   lambda: fallback.edt_sq(mask),
                   repeats, rows)


def run_score_cam_bench(rng, repeats, rows):
    """Score-CAM's 16 masked forward passes per image lean on the conv
    kernels; rebinding the backend shows the end-to-end effect."""
    params = backbone.init_params(seed=0)
    image = rng.random((32, 32, 3))
    originals = {name: getattr(kernels, name)
                 for name in ("conv2d_forward", "conv2d_backward_kernel",
                              "conv2d_backward_input")}

    def with_backend(module):
        for name in originals:
            setattr(kernels, name, getattr(module, name))
        try:
            cam.score_cam(params, image, class_index=0)
        finally:
            for name, fn in originals.items():
                setattr(kernels, name, fn)

    bench_pair("score-cam per image",
               lambda: with_backend(kernels._impl),
               lambda: with_backend(fallback),
               repeats, rows)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=5,
                        help="runs per measurement, best kept (default 5)")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    if kernels.BACKEND != "compiled":
        print("note: compiled extension not built; both columns below run "
              "the numpy fallback, so speedups will hover around 1.0x")
    rng = np.random.default_rng(args.seed)
    rows = []
    run_conv_benches(rng, args.repeats, rows)
    run_edt_benches(rng, args.repeats, rows)
    run_score_cam_bench(rng, args.repeats, rows)

    name_w = max(len(r[0]) for r in rows)
    print(f"active backend: {kernels.BACKEND}")
    print(f"{'kernel':<{name_w}}  {'compiled':>10}  {'fallback':>10}  "
          f"{'speedup':>8}")
    for label, t_fast, t_slow in rows:
        print(f"{label:<{name_w}}  {t_fast * 1e3:>8.3f}ms  "
              f"{t_slow * 1e3:>8.3f}ms  {t_slow / t_fast:>7.2f}x")


if __name__ == "__main__":
    main()

#!/usr/bin/env python3
"""Benchmark the compiled convolution kernels against the numpy fallback.

Covers the shapes the CNN baseline actually runs: a spatial stem conv,
depthwise convs at several resolutions, and (for context) the 1x1
pointwise convs that both backends route to BLAS. Usage:

    python benchmarks/bench_kernels.py [--repeats 20]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from melbird import kernels
from melbird.kernels import pure

try:
    from melbird.kernels import _ck
except ImportError:
    _ck = None

CONV_CASES = [
    # name, (c_in, h, w), (c_out, k), stride
    ("stem 3x3/2 @224", (1, 224, 224), (8, 3), 2),
    ("conv 3x3 @56 c16", (16, 56, 56), (16, 3), 1),
    ("conv 5x5 @28 c24", (24, 28, 28), (24, 5), 1),
    ("pointwise 1x1 @56", (16, 56, 56), (64, 1), 1),
]

DW_CASES = [
    ("depthwise 3x3/2 @112", (8, 112, 112), 3, 2),
    ("depthwise 3x3 @56", (32, 56, 56), 3, 1),
    ("depthwise 5x5 @28", (48, 28, 28), 5, 1),
]


def timeit(fn, repeats: int) -> float:
    fn()  # warm up
    start = time.perf_counter()
    for _ in range(repeats):
        fn()
    return (time.perf_counter() - start) / repeats * 1000.0


def bench_conv(impl, x, kern, stride, repeats):
    fwd = timeit(lambda: impl.conv2d_forward(x, kern, stride), repeats)
    gout = np.ascontiguousarray(impl.conv2d_forward(x, kern, stride))
    bwd_in = timeit(
        lambda: impl.conv2d_backward_input(gout, kern, stride, x.shape[1], x.shape[2]), repeats
    )
    bwd_k = timeit(
        lambda: impl.conv2d_backward_kernel(gout, x, kern.shape[2], kern.shape[3], stride),
        repeats,
    )
    return fwd, bwd_in, bwd_k


def bench_dw(impl, x, kern, stride, repeats):
    fwd = timeit(lambda: impl.depthwise_forward(x, kern, stride), repeats)
    gout = np.ascontiguousarray(impl.depthwise_forward(x, kern, stride))
    bwd_in = timeit(
        lambda: impl.depthwise_backward_input(gout, kern, stride, x.shape[1], x.shape[2]),
        repeats,
    )
    bwd_k = timeit(
        lambda: impl.depthwise_backward_kernel(gout, x, kern.shape[1], kern.shape[2], stride),
        repeats,
    )
    return fwd, bwd_in, bwd_k


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=20)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    print(f"active backend: {kernels.BACKEND}")
    if _ck is None:
        print("compiled extension not built (python setup.py build_ext --inplace); "
              "timing the numpy fallback only\n")
    impls = [("numpy", pure)] + ([("compiled", _ck)] if _ck is not None else [])

    header = f"{'case':24} {'pass':8}" + "".join(f"{name:>12}" for name, _ in impls)
    if _ck is not None:
        header += f"{'speedup':>10}"
    print(header)
    print("-" * len(header))

    def report(case, pass_name, times):
        line = f"{case:24} {pass_name:8}" + "".join(f"{t:10.3f}ms" for t in times)
        if len(times) == 2:
            line += f"{times[0] / times[1]:9.2f}x"
        print(line)

    for case, xshape, (c_out, k), stride in CONV_CASES:
        x = rng.normal(size=xshape)
        kern = rng.normal(size=(c_out, xshape[0], k, k))
        results = [bench_conv(impl, x, kern, stride, args.repeats) for _, impl in impls]
        for i, pass_name in enumerate(("forward", "bwd-in", "bwd-k")):
            report(case, pass_name, [r[i] for r in results])

    for case, xshape, k, stride in DW_CASES:
        x = rng.normal(size=xshape)
        kern = rng.normal(size=(xshape[0], k, k))
        results = [bench_dw(impl, x, kern, stride, args.repeats) for _, impl in impls]
        for i, pass_name in enumerate(("forward", "bwd-in", "bwd-k")):
            report(case, pass_name, [r[i] for r in results])

    return 0


if __name__ == "__main__":
    raise SystemExit(main())

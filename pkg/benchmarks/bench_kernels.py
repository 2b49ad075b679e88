"""Benchmark the two kernel backends against each other.

Runs the convolution and max-pool kernels at training-representative
shapes through both implementations (JIT loops vs im2col + BLAS) and
prints per-shape timings with throughput. The JIT path is warmed up
before timing so compilation cost does not pollute the numbers.

Usage: python3 benchmarks/bench_kernels.py [--quick] [--dtype f32|f64]
"""

import argparse
import time

import numpy as np

from segclass import kernels_numba, kernels_numpy

CASES_2D = [
    # (label, batch, cin, cout, size)  spatial = size x size
    ("enc 2d 64x64", 4, 16, 16, 64),
    ("deep 2d 8x8", 4, 128, 128, 8),
    ("head 2d 32x32", 4, 248, 16, 32),
]
CASES_3D = [
    ("enc 3d 16^3", 2, 12, 12, 16),
    ("deep 3d 4^3", 2, 96, 96, 4),
]


def _time(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def _bench_conv(mod, x, w, gy, repeats):
    fwd = _time(lambda: mod.conv_fwd(x, w), repeats)
    bwd = _time(lambda: mod.conv_bwd(x, w, gy), repeats)
    return fwd, bwd


def _macs(x, w):
    spatial = int(np.prod(x.shape[2:]))
    return x.shape[0] * spatial * w.shape[0] * int(np.prod(w.shape[1:]))


def _run_cases(cases, dim, dtype, repeats, rng):
    rows = []
    for label, batch, cin, cout, size in cases:
        shape = (batch, cin) + (size,) * dim
        x = rng.standard_normal(shape).astype(dtype)
        w = rng.standard_normal((cout, cin) + (3,) * dim).astype(dtype)
        gy = rng.standard_normal((batch, cout) + (size,) * dim).astype(dtype)
        kernels_numba.conv_fwd(x, w)  # JIT warmup
        kernels_numba.conv_bwd(x, w, gy)
        nb_f, nb_b = _bench_conv(kernels_numba, x, w, gy, repeats)
        np_f, np_b = _bench_conv(kernels_numpy, x, w, gy, repeats)
        macs = _macs(x, w)
        rows.append((label, macs, nb_f, nb_b, np_f, np_b))
    return rows


def _print_rows(rows):
    header = f"{'case':<16} {'GMAC':>6}  {'numba fwd':>10} {'numba f+b':>10} {'numpy fwd':>10} {'numpy f+b':>10}  {'fwd ratio':>9}"
    print(header)
    print("-" * len(header))
    for label, macs, nb_f, nb_b, np_f, np_b in rows:
        gmac = macs / 1e9
        print(
            f"{label:<16} {gmac:>6.3f}  "
            f"{nb_f * 1e3:>8.1f}ms {(nb_f + nb_b) * 1e3:>8.1f}ms "
            f"{np_f * 1e3:>8.1f}ms {(np_f + np_b) * 1e3:>8.1f}ms  "
            f"{np_f / nb_f:>8.2f}x"
        )
        print(
            f"{'':<16} {'':>6}  "
            f"{gmac / nb_f:>8.1f}/s {'':>10} {gmac / np_f:>8.1f}/s {'':>10}  (GMAC rates)"
        )


def _bench_pool(dtype, repeats, rng):
    x = rng.standard_normal((4, 16, 128, 128)).astype(dtype)
    kernels_numba.maxpool_fwd(x)
    y, idx = kernels_numba.maxpool_fwd(x)
    gy = rng.standard_normal(y.shape).astype(dtype)
    kernels_numba.maxpool_bwd(idx, gy, x.shape)
    nb_f = _time(lambda: kernels_numba.maxpool_fwd(x), repeats)
    nb_b = _time(lambda: kernels_numba.maxpool_bwd(idx, gy, x.shape), repeats)
    np_f = _time(lambda: kernels_numpy.maxpool_fwd(x), repeats)
    yn, idxn = kernels_numpy.maxpool_fwd(x)
    np_b = _time(lambda: kernels_numpy.maxpool_bwd(idxn, gy, x.shape), repeats)
    print(
        f"\nmaxpool 2d 4x16x128x128: numba {nb_f * 1e3:.1f}/{nb_b * 1e3:.1f} ms  "
        f"numpy {np_f * 1e3:.1f}/{np_b * 1e3:.1f} ms (fwd/bwd)"
    )


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--quick", action="store_true", help="fewer repeats")
    parser.add_argument("--dtype", choices=("f32", "f64"), default="f32")
    args = parser.parse_args()
    if not kernels_numba.NUMBA_AVAILABLE:
        parser.error("numba is not importable; nothing to compare")
    dtype = np.float32 if args.dtype == "f32" else np.float64
    repeats = 2 if args.quick else 5
    rng = np.random.default_rng(0)

    print(f"dtype={args.dtype}, best of {repeats}\n")
    print("== 2-d convolutions ==")
    _print_rows(_run_cases(CASES_2D, 2, dtype, repeats, rng))
    print("\n== 3-d convolutions ==")
    _print_rows(_run_cases(CASES_3D, 3, dtype, repeats, rng))
    _bench_pool(dtype, repeats, rng)


if __name__ == "__main__":
    main()

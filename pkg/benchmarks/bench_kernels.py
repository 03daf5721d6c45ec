"""Compare the compiled kernels with the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5]
"""
import argparse
import timeit

import numpy as np

from tasnn import _pykernels, kernels

try:
    from tasnn import _ckernels
except ImportError:
    _ckernels = None


def cases(rng):
    data = rng.integers(0, 256, 2_000_000, dtype=np.uint8)
    grid = rng.uniform(0, 255, (400, 256))
    return [
        ("segment_entropy 2 MB / 256", "segment_entropy", (data, 256)),
        ("byte_histogram 2 MB", "byte_histogram", (data,)),
        ("bilinear_resize 400x256 -> 105x105", "bilinear_resize", (grid, 105, 105)),
    ]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    print(f"active backend: {kernels.BACKEND}")
    if _ckernels is None:
        print("compiled extension not built; timing the numpy fallback only")
    print(f"{'kernel':40s} {'python ms':>10s} {'cython ms':>10s} {'speedup':>8s}")
    for label, name, argv in cases(np.random.default_rng(0)):
        py = min(timeit.repeat(lambda: getattr(_pykernels, name)(*argv), number=1,
                               repeat=args.repeat)) * 1e3
        if _ckernels is None:
            print(f"{label:40s} {py:10.2f} {'-':>10s} {'-':>8s}")
            continue
        cy = min(timeit.repeat(lambda: getattr(_ckernels, name)(*argv), number=1,
                               repeat=args.repeat)) * 1e3
        print(f"{label:40s} {py:10.2f} {cy:10.2f} {py / cy:7.1f}x")


if __name__ == "__main__":
    main()

"""Benchmark the numba-jitted warp kernels against the vectorized numpy path.

Run:  python3 benchmarks/bench_warp.py [--size 256] [--repeats 20]
The env flag COMPOSEGEN_NO_NUMBA=1 forces the numpy path package-wide; this
script times both implementations directly regardless of the flag.
"""

import argparse
import time

import numpy as np

from composegen.accel import NUMBA_ENABLED
from composegen.datagen import Homography, PerturbationSpec, homography_from_correspondences, perturb_four_points
from composegen.datagen.warp import (
    _bilinear_kernel,
    _bilinear_numpy,
    _nearest_kernel,
    _nearest_numpy,
)


def _time(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--size", type=int, default=256)
    parser.add_argument("--repeats", type=int, default=20)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    image = np.ascontiguousarray(rng.uniform(size=(args.size, args.size, 3)))
    mask = (rng.uniform(size=(args.size, args.size)) > 0.5).astype(np.uint8)
    h = homography_from_correspondences(perturb_four_points(
        (args.size // 4, args.size // 4, args.size // 2, args.size // 2),
        PerturbationSpec(corner_offset_frac=0.2, rng_seed=1)))
    inv = h.inverse().matrix

    out_img = np.zeros_like(image)
    out_mask = np.zeros_like(mask)

    print(f"canvas {args.size}x{args.size}, numba available: {NUMBA_ENABLED}")

    # warm-up to exclude jit compilation from the numbers
    _bilinear_kernel(image, inv, out_img)
    _nearest_kernel(mask, inv, out_mask)

    rows = [
        ("bilinear numba", lambda: _bilinear_kernel(image, inv, out_img)),
        ("bilinear numpy", lambda: _bilinear_numpy(image, inv, out_img)),
        ("nearest  numba", lambda: _nearest_kernel(mask, inv, out_mask)),
        ("nearest  numpy", lambda: _nearest_numpy(mask, inv, out_mask)),
    ]
    times = {}
    for name, fn in rows:
        times[name] = _time(fn, args.repeats)
        print(f"{name}: {times[name] * 1e3:8.3f} ms")

    for kind in ("bilinear", "nearest "):
        ratio = times[f"{kind} numpy"] / times[f"{kind} numba"]
        print(f"{kind.strip()} speedup (numpy time / numba time): {ratio:.2f}x")


if __name__ == "__main__":
    main()

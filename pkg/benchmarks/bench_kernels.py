"""Compare the numba and numpy kernel back ends on representative shapes.

    python3 benchmarks/bench_kernels.py [--repeat N]

Prints the best-of-N wall time per kernel and back end, the speed-up, and
the max abs difference between the two outputs.
"""

import argparse
import time

import numpy as np

from attackgen import kernels


def cases(rng):
    x = rng.normal(size=(16, 16, 16, 16))
    w = rng.normal(size=(3, 3, 16, 16))
    b = rng.normal(size=16)
    dy = rng.normal(size=(16, 16, 16, 16))
    img = rng.normal(size=(4, 16, 16, 3))
    coords = rng.uniform(-1, 17, size=(4, 16, 16, 2))
    dyb = rng.normal(size=(4, 16, 16, 3))
    labels = rng.integers(0, 4, size=(16, 16))
    return {
        "conv2d_forward": (x, w, b),
        "conv2d_backward_input": (dy, w),
        "conv2d_backward_weight": (x, dy, 3, 3),
        "bilinear_forward": (img, coords),
        "bilinear_backward": (img, coords, dyb),
        "nearest_fill": (labels, 2),
    }


def _best(fn, args, repeat):
    best = np.inf
    for _ in range(repeat):
        t = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t)
    return best


def _diff(a, b):
    if isinstance(a, tuple):
        return max(_diff(u, v) for u, v in zip(a, b))
    return float(np.abs(np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)).max())


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args(argv)
    if not kernels.NUMBA_KERNELS:
        print("numba not installed; nothing to compare")
        return 0
    rng = np.random.default_rng(0)
    print(f"{'kernel':24s} {'numpy ms':>10s} {'numba ms':>10s} {'speed-up':>9s} {'max diff':>10s}")
    for name, a in cases(rng).items():
        fast, ref = kernels.NUMBA_KERNELS[name], kernels.NUMPY_KERNELS[name]
        fast(*a)  # compile
        t_np = _best(ref, a, args.repeat)
        t_nb = _best(fast, a, args.repeat)
        print(f"{name:24s} {1e3 * t_np:10.3f} {1e3 * t_nb:10.3f} {t_np / t_nb:9.2f} {_diff(ref(*a), fast(*a)):10.2e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

"""Compare the compiled pair-loss kernel against the numpy fallback.

Run with ``python3 benchmarks/bench_kernels.py``; prints one line per batch size.
"""

import argparse
import timeit

import numpy as np

from clad import kernels


def case(B, d, seed=0):
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((B, d))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    labels = rng.integers(0, 4, B).astype(np.int64)
    anchors = (labels == 0).astype(np.uint8)
    return z, labels, anchors


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--sizes", default="32,128,512,1024")
    parser.add_argument("--dim", type=int, default=16)
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    if kernels.pair_hinge_loss_ext is None:
        print("compiled extension not available; only the numpy fallback can run")
    print(f"{'B':>6} {'numpy ms':>10} {'cython ms':>10} {'speedup':>8} {'max |dgrad|':>12}")
    for B in map(int, args.sizes.split(",")):
        z, labels, anchors = case(B, args.dim)
        run_py = lambda: kernels.pair_hinge_loss_py(z, labels, anchors, 1.0, 2, 1.0, 1.0)
        n = max(1, 2000 // B)
        t_py = min(timeit.repeat(run_py, number=n, repeat=args.repeat)) / n * 1e3
        if kernels.pair_hinge_loss_ext is None:
            print(f"{B:>6} {t_py:>10.3f} {'-':>10} {'-':>8} {'-':>12}")
            continue
        run_ext = lambda: kernels.pair_hinge_loss_ext(z, labels, anchors, 1.0, 2, 1.0, 1.0)
        t_ext = min(timeit.repeat(run_ext, number=n, repeat=args.repeat)) / n * 1e3
        diff = float(np.abs(run_py()[1] - run_ext()[1]).max())
        print(f"{B:>6} {t_py:>10.3f} {t_ext:>10.3f} {t_py / t_ext:>7.1f}x {diff:>12.1e}")


if __name__ == "__main__":
    main()

"""Time the compiled kernels against the numpy fallback on assembly-sized inputs.

Usage: python benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import timeit

import numpy as np

from wsindy import _kernels_py as fallback

try:
    from wsindy import _kernels as compiled
except ImportError:
    compiled = None


def cases(rng):
    # weak-system assembly: K query points, F stencil offsets, J trial columns, S blocks
    for K, F, J, S in [(1000, 313, 84, 1), (1000, 1249, 28, 1), (1000, 2048, 43, 8)]:
        n = 20 * F
        X = rng.normal(size=(n, J))
        centers = rng.integers(0, n - F, size=K)
        offsets = np.arange(F)
        W = rng.normal(size=(S, F))
        yield f"accumulate K={K} F={F} J={J} S={S}", "accumulate", (X, centers, offsets, W)
    for rows, n, w in [(451, 512, 21), (1, 10**6, 27), (3, 250_001, 9)]:
        Y = rng.normal(size=(rows, n + w - 1))
        yield f"moving_sum rows={rows} n={n} w={w}", "moving_sum_lastaxis", (Y, w)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    print(f"{'case':<44} {'python ms':>10} {'compiled ms':>12} {'speedup':>8} {'max diff':>10}")
    for label, name, inputs in cases(rng):
        py = getattr(fallback, name)
        t_py = min(timeit.repeat(lambda: py(*inputs), number=1, repeat=args.repeat)) * 1e3
        if compiled is None:
            print(f"{label:<44} {t_py:>10.2f} {'n/a':>12}")
            continue
        c = getattr(compiled, name)
        t_c = min(timeit.repeat(lambda: c(*inputs), number=1, repeat=args.repeat)) * 1e3
        diff = np.abs(py(*inputs) - c(*inputs)).max()
        print(f"{label:<44} {t_py:>10.2f} {t_c:>12.2f} {t_py / t_c:>8.2f} {diff:>10.1e}")


if __name__ == "__main__":
    main()

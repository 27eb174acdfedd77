"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 5]

Prints best-of-``repeat`` wall time per kernel and the speedup. Both
backends are imported directly, so the environment switch is not needed.
"""
import argparse
import timeit

import numpy as np

from minority_rtb import _pycore

try:
    from minority_rtb import _core
except ImportError:
    _core = None


def cases():
    rng = np.random.default_rng(0)
    X = np.ascontiguousarray(rng.normal(size=(100_000, 2)))
    C = np.ascontiguousarray(rng.normal(size=(2, 2)))
    C8 = np.ascontiguousarray(rng.normal(size=(8, 2)))
    labels = rng.integers(0, 8, size=X.shape[0]).astype(np.int64)
    n, s, p = 1001, 4, 64
    strat = (rng.integers(0, 2, size=(n, s, p)) * 2 - 1).astype(np.int8)
    active = rng.integers(0, s, size=n).astype(np.int64)
    idx = rng.integers(0, p, size=200)

    def game(kernels):
        vals = np.zeros((n, s))
        act = active.copy()
        for h in idx:
            _, total = kernels.mg_play(strat, act, int(h))
            best, _ = kernels.mg_update(strat, vals, int(h), total / np.sqrt(n))
            act[:] = best

    return {
        "nearest_centroid n=1e5 k=2": lambda k: k.nearest_centroid(X, C),
        "nearest_centroid n=1e5 k=8": lambda k: k.nearest_centroid(X, C8),
        "centroid_sums n=1e5 k=8": lambda k: k.centroid_sums(X, labels, 8),
        "game loop N=1001 S=4 M=6 x200": game,
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if _core is None:
        print("compiled extension not built; timing the fallback only")
    print(f"{'kernel':34s} {'python ms':>10s} {'compiled ms':>12s} {'speedup':>8s}")
    for name, fn in cases().items():
        py = min(timeit.repeat(lambda: fn(_pycore), number=1, repeat=args.repeat)) * 1e3
        if _core is None:
            print(f"{name:34s} {py:10.2f} {'-':>12s} {'-':>8s}")
            continue
        cc = min(timeit.repeat(lambda: fn(_core), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:34s} {py:10.2f} {cc:12.2f} {py / cc:7.1f}x")


if __name__ == "__main__":
    main()

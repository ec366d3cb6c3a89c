"""Compiled kernels vs the numpy fallback.

    python3 benchmarks/bench_kernels.py [--rows 5000] [--trees 100] [--repeat 3]

Checks that both backends return identical arrays, then prints best-of-N
wall times and the speedup for each kernel and for a full model fit.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from pathloss_aug import _core, gbm


def best_of(fn, repeat):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def same(a, b):
    if isinstance(a, tuple):
        return all(same(x, y) for x, y in zip(a, b))
    if isinstance(a, gbm.GbmModel):
        return gbm.save_model(a) == gbm.save_model(b)
    return np.array_equal(np.asarray(a), np.asarray(b), equal_nan=True)


def cases(rows, trees, seed=0):
    rng = np.random.default_rng(seed)
    grid = rng.normal(200, 20, (513, 513))
    grid[rng.random(grid.shape) < 0.001] = -9999.0
    xs = rng.uniform(0, 513 * 5, 200_000)
    ys = rng.uniform(0, 513 * 5, 200_000)

    X = rng.normal(size=(rows, 7))
    y = X @ rng.normal(size=7) + rng.normal(0, 0.5, rows)
    resid = y - y.mean()
    order = np.ascontiguousarray(np.stack([np.argsort(X[:, f], kind="stable") for f in range(7)]))
    model = gbm.fit(X, y, gbm.TrainConfig(n_trees=trees, min_samples_leaf=5))
    packed = model._packed
    cfg = gbm.TrainConfig(n_trees=trees)

    def bilinear(k):
        return lambda: k.bilinear(grid, -9999.0, 0.0, 513 * 5.0, 5.0, xs, ys)

    def splits(k):
        return lambda: k.best_splits(order, X, resid, 20, 1)

    def sums(k):
        return lambda: k.tree_sums(X, *packed)

    def fit(k):
        def run():
            saved = _core._impl
            _core._impl = k
            try:
                return gbm.fit(X, y, cfg)
            finally:
                _core._impl = saved
        return run

    return [("bilinear (200k points)", bilinear), (f"best_splits ({rows}x7)", splits),
            (f"tree_sums ({trees} trees)", sums), (f"fit ({rows}x7, {trees} trees)", fit)]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rows", type=int, default=5000)
    ap.add_argument("--trees", type=int, default=100)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    py = _core.get_backend("python")
    try:
        cy = _core.get_backend("cython")
    except ImportError:
        print("compiled extension not built; nothing to compare")
        return 1

    print(f"{'kernel':32s} {'cython [s]':>11s} {'python [s]':>11s} {'speedup':>8s}  identical")
    for name, make in cases(args.rows, args.trees):
        t_cy, out_cy = best_of(make(cy), args.repeat)
        t_py, out_py = best_of(make(py), args.repeat)
        print(f"{name:32s} {t_cy:11.4f} {t_py:11.4f} {t_py / t_cy:7.1f}x  {same(out_cy, out_py)}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

"""Pure-numpy twins of the compiled kernels in ``_kernels.pyx``.

Arithmetic is written in the same order as the Cython code so that both
backends return bit-identical results.
"""
from __future__ import annotations

import numpy as np


def bilinear(values, nodata, xll, ytop, cellsize, xs, ys):
    values = np.asarray(values, dtype=np.float64)
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    nrows, ncols = values.shape

    c = np.clip(np.floor((xs - xll) / cellsize), 0, ncols - 1).astype(np.intp)
    r = np.clip(np.floor((ytop - ys) / cellsize), 0, nrows - 1).astype(np.intp)
    vn = values[r, c]

    fx = np.clip((xs - xll) / cellsize - 0.5, 0.0, float(ncols - 1))
    fr = np.clip((ytop - ys) / cellsize - 0.5, 0.0, float(nrows - 1))
    c0 = np.minimum(np.floor(fx).astype(np.intp), ncols - 2)
    r0 = np.minimum(np.floor(fr).astype(np.intp), nrows - 2)
    tx = fx - c0
    ty = fr - r0
    v00 = values[r0, c0]
    v01 = values[r0, c0 + 1]
    v10 = values[r0 + 1, c0]
    v11 = values[r0 + 1, c0 + 1]
    with np.errstate(invalid="ignore", over="ignore"):
        out = (1.0 - ty) * ((1.0 - tx) * v00 + tx * v01) + ty * ((1.0 - tx) * v10 + tx * v11)
    poisoned = (v00 == nodata) | (v01 == nodata) | (v10 == nodata) | (v11 == nodata)
    out = np.where(poisoned, vn, out)
    return np.where(vn == nodata, np.nan, out)


def best_splits(order, X, resid, min_leaf, threads=1):
    nfeat, n = order.shape
    scores = np.full(nfeat, -np.inf)
    positions = np.full(nfeat, -1, dtype=np.int64)
    if n < 2:
        return scores, positions
    rs = resid[order]
    cs = np.cumsum(rs, axis=1)
    total = cs[:, -1:]
    s = cs[:, :-1]
    nl = np.arange(1, n, dtype=np.float64)
    nr = n - nl
    sr = total - s
    sc = s * s / nl + sr * sr / nr

    xs = X[order, np.arange(nfeat)[:, None]]
    ok = xs[:, 1:] > xs[:, :-1]
    ok &= (nl >= min_leaf) & (nr >= min_leaf)
    sc = np.where(ok, sc, -np.inf)
    has = ok.any(axis=1)
    best = np.argmax(sc, axis=1)
    rows = np.arange(nfeat)
    scores[has] = sc[rows, best][has]
    positions[has] = best[has]
    return scores, positions


def tree_sums(X, feature, threshold, left, right, value, roots):
    n = X.shape[0]
    acc = np.zeros(n)
    rows = np.arange(n)
    for root in roots:
        node = np.full(n, root, dtype=np.int64)
        while True:
            feat = feature[node]
            inner = feat >= 0
            if not inner.any():
                break
            idx = rows[inner]
            nd = node[inner]
            go_left = X[idx, feat[inner]] < threshold[nd]
            node[inner] = np.where(go_left, left[nd], right[nd])
        acc = acc + value[node]
    return acc

# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops.

Every routine mirrors its numpy twin in ``_fallback.py`` operation for
operation; the two must stay bit-identical (tests compare them directly).
"""
import numpy as np
cimport numpy as cnp
from cython.parallel cimport prange
from libc.math cimport floor, INFINITY, NAN

cnp.import_array()


def bilinear(const double[:, ::1] values, double nodata, double xll, double ytop,
             double cellsize, const double[::1] xs, const double[::1] ys):
    cdef Py_ssize_t nrows = values.shape[0]
    cdef Py_ssize_t ncols = values.shape[1]
    cdef Py_ssize_t n = xs.shape[0]
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i, c, r, c0, r0
    cdef double x, y, fx, fr, tx, ty, v00, v01, v10, v11, vn
    with nogil:
        for i in range(n):
            x = xs[i]
            y = ys[i]
            c = <Py_ssize_t>floor((x - xll) / cellsize)
            r = <Py_ssize_t>floor((ytop - y) / cellsize)
            if c < 0:
                c = 0
            if c > ncols - 1:
                c = ncols - 1
            if r < 0:
                r = 0
            if r > nrows - 1:
                r = nrows - 1
            vn = values[r, c]
            if vn == nodata:
                out[i] = NAN
                continue
            fx = (x - xll) / cellsize - 0.5
            fr = (ytop - y) / cellsize - 0.5
            if fx < 0.0:
                fx = 0.0
            if fx > ncols - 1:
                fx = ncols - 1
            if fr < 0.0:
                fr = 0.0
            if fr > nrows - 1:
                fr = nrows - 1
            c0 = <Py_ssize_t>floor(fx)
            r0 = <Py_ssize_t>floor(fr)
            if c0 > ncols - 2:
                c0 = ncols - 2
            if r0 > nrows - 2:
                r0 = nrows - 2
            tx = fx - c0
            ty = fr - r0
            v00 = values[r0, c0]
            v01 = values[r0, c0 + 1]
            v10 = values[r0 + 1, c0]
            v11 = values[r0 + 1, c0 + 1]
            if v00 == nodata or v01 == nodata or v10 == nodata or v11 == nodata:
                out[i] = vn
            else:
                out[i] = (1.0 - ty) * ((1.0 - tx) * v00 + tx * v01) + ty * ((1.0 - tx) * v10 + tx * v11)
    return out_arr


def best_splits(const cnp.int64_t[:, ::1] order, const double[:, ::1] X,
                const double[::1] resid, Py_ssize_t min_leaf, int threads=1):
    """Best variance-reduction split per feature.

    Returns ``(scores, positions)``; position ``k`` sends ``order[f, :k+1]``
    left. ``-1`` marks a feature with no admissible split.
    """
    cdef Py_ssize_t nfeat = order.shape[0]
    cdef Py_ssize_t n = order.shape[1]
    scores_arr = np.full(nfeat, -np.inf, dtype=np.float64)
    pos_arr = np.full(nfeat, -1, dtype=np.int64)
    cdef double[::1] scores = scores_arr
    cdef cnp.int64_t[::1] positions = pos_arr
    cdef Py_ssize_t f, k
    cdef double total, s, sr, sc, best, nl, nr
    cdef cnp.int64_t bestk
    if threads < 1:
        threads = 1
    for f in prange(nfeat, nogil=True, num_threads=threads, schedule='static'):
        total = 0.0
        for k in range(n):
            total = total + resid[order[f, k]]
        s = 0.0
        best = -INFINITY
        bestk = -1
        for k in range(n - 1):
            s = s + resid[order[f, k]]
            if k + 1 < min_leaf or n - k - 1 < min_leaf:
                continue
            if not (X[order[f, k + 1], f] > X[order[f, k], f]):
                continue
            nl = <double>(k + 1)
            nr = <double>(n - k - 1)
            sr = total - s
            sc = s * s / nl + sr * sr / nr
            if sc > best:
                best = sc
                bestk = k
        scores[f] = best
        positions[f] = bestk
    return scores_arr, pos_arr


def tree_sums(const double[:, ::1] X, const cnp.int32_t[::1] feature,
              const double[::1] threshold, const cnp.int32_t[::1] left,
              const cnp.int32_t[::1] right, const double[::1] value,
              const cnp.int64_t[::1] roots):
    """Sum of leaf outputs over all trees for every row of ``X``."""
    cdef Py_ssize_t n = X.shape[0]
    cdef Py_ssize_t ntree = roots.shape[0]
    out_arr = np.zeros(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i, t
    cdef cnp.int64_t node
    cdef double acc
    with nogil:
        for i in range(n):
            acc = 0.0
            for t in range(ntree):
                node = roots[t]
                while feature[node] >= 0:
                    if X[i, feature[node]] < threshold[node]:
                        node = left[node]
                    else:
                        node = right[node]
                acc = acc + value[node]
            out[i] = acc
    return out_arr

"""Kernel backend selection.

The compiled extension is used when it imports; otherwise the numpy
fallback is used. Set ``PATHLOSS_AUG_PURE=1`` to force the fallback.
"""
from __future__ import annotations

import os

from . import _fallback

BACKEND = "python"
_impl = _fallback

if os.environ.get("PATHLOSS_AUG_PURE", "").strip() not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled
    except ImportError:
        pass
    else:
        _impl = _compiled
        BACKEND = "cython"


def get_backend(name: str | None = None):
    """Return the kernel module for ``name`` ("cython", "python") or the active one."""
    if name is None:
        return _impl
    if name == "python":
        return _fallback
    if name == "cython":
        from . import _kernels
        return _kernels
    raise ValueError(f"unknown backend {name!r}")


def bilinear(values, nodata, xll, ytop, cellsize, xs, ys):
    return _impl.bilinear(values, nodata, xll, ytop, cellsize, xs, ys)


def best_splits(order, X, resid, min_leaf, threads=1):
    return _impl.best_splits(order, X, resid, min_leaf, threads)


def tree_sums(X, feature, threshold, left, right, value, roots):
    return _impl.tree_sums(X, feature, threshold, left, right, value, roots)

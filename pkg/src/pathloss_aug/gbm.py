"""Deterministic least-squares gradient-boosted regression trees.

Splits are found by exact enumeration over sorted feature values. Equal
gains are resolved by lowest feature index, then lowest sorted-rank
position, so the fitted partition depends only on feature ranks.
"""
from __future__ import annotations

import json
import math
from collections.abc import Mapping
from dataclasses import dataclass, field

import numpy as np

from . import _core
from .errors import ModelFormatError

MODEL_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    n_trees: int = 500
    learning_rate: float = 0.1
    max_depth: int = 6
    min_samples_leaf: int = 20
    subsample: float = 1.0
    seed: int = 0
    feature_names: tuple[str, ...] = ()

    def __post_init__(self):
        if int(self.n_trees) < 1:
            raise ValueError("n_trees must be >= 1")
        if not 0 < self.learning_rate <= 1:
            raise ValueError("learning_rate must lie in (0, 1]")
        if int(self.max_depth) < 1:
            raise ValueError("max_depth must be >= 1")
        if int(self.min_samples_leaf) < 1:
            raise ValueError("min_samples_leaf must be >= 1")
        if not 0 < self.subsample <= 1:
            raise ValueError("subsample must lie in (0, 1]")
        object.__setattr__(self, "feature_names", tuple(self.feature_names))

    def to_dict(self) -> dict:
        return {"n_trees": self.n_trees, "learning_rate": self.learning_rate,
                "max_depth": self.max_depth, "min_samples_leaf": self.min_samples_leaf,
                "subsample": self.subsample, "seed": self.seed,
                "feature_names": list(self.feature_names)}

    @classmethod
    def from_dict(cls, d: Mapping) -> "TrainConfig":
        known = {"n_trees", "learning_rate", "max_depth", "min_samples_leaf", "subsample",
                 "seed", "feature_names"}
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown model config keys: {sorted(extra)}")
        return cls(**d)


@dataclass(frozen=True, eq=False)
class RegressionTree:
    """Flat node arrays; ``feature == -1`` marks a leaf. Node 0 is the root."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def depth(self) -> int:
        def walk(i):
            if self.feature[i] < 0:
                return 0
            return 1 + max(walk(self.left[i]), walk(self.right[i]))
        return walk(0)

    def evaluate(self, row) -> float:
        i = 0
        while self.feature[i] >= 0:
            i = self.left[i] if row[self.feature[i]] < self.threshold[i] else self.right[i]
        return float(self.value[i])

    def to_json(self) -> dict:
        nodes = []
        for i in range(self.n_nodes):
            if self.feature[i] < 0:
                nodes.append({"leaf": float(self.value[i])})
            else:
                nodes.append({"f": int(self.feature[i]), "t": float(self.threshold[i]),
                              "l": int(self.left[i]), "r": int(self.right[i])})
        return {"nodes": nodes}


@dataclass(frozen=True, eq=False)
class GbmModel:
    init: float
    trees: tuple[RegressionTree, ...]
    learning_rate: float
    feature_names: tuple[str, ...]
    train_mse: tuple[float, ...] = field(default=(), repr=False)

    def __post_init__(self):
        object.__setattr__(self, "trees", tuple(self.trees))
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        offsets = np.cumsum([0] + [t.n_nodes for t in self.trees])
        if self.trees:
            cat = lambda name: np.concatenate([getattr(t, name) for t in self.trees])  # noqa: E731
            feat = cat("feature").astype(np.int32)
            left = cat("left").astype(np.int64)
            right = cat("right").astype(np.int64)
            for k, t in enumerate(self.trees):
                sl = slice(offsets[k], offsets[k + 1])
                inner = feat[sl] >= 0
                left[sl][inner] += offsets[k]
                right[sl][inner] += offsets[k]
            packed = (feat, np.ascontiguousarray(cat("threshold"), dtype=np.float64),
                      left.astype(np.int32), right.astype(np.int32),
                      np.ascontiguousarray(cat("value"), dtype=np.float64),
                      np.asarray(offsets[:-1], dtype=np.int64))
        else:
            packed = None
        object.__setattr__(self, "_packed", packed)

    def tree_sum(self, X: np.ndarray) -> np.ndarray:
        """Sum of raw tree outputs (before shrinkage) for each row."""
        X = np.ascontiguousarray(X, dtype=np.float64)
        if self._packed is None:
            return np.zeros(X.shape[0])
        return _core.tree_sums(X, *self._packed)

    def predict_matrix(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != len(self.feature_names):
            raise ValueError(f"expected {len(self.feature_names)} feature columns, got {X.shape[1]}")
        return self.init + self.learning_rate * self.tree_sum(X)

    def predict(self, features) -> np.ndarray | float:
        """Predict from a matrix, a mapping of feature values, or a FeatureVector."""
        if isinstance(features, np.ndarray):
            return self.predict_matrix(features)
        row = []
        for name in self.feature_names:
            try:
                v = features[name] if isinstance(features, Mapping) else getattr(features, name)
            except (KeyError, AttributeError):
                v = None
            if v is None:
                raise ValueError(f"missing feature {name!r}")
            row.append(float(v))
        return float(self.predict_matrix(np.array([row]))[0])


def predict(model: GbmModel, features):
    return model.predict(features)


# ---------------------------------------------------------------- training

class _TreeBuilder:
    def __init__(self, X, resid, max_depth, min_leaf, threads):
        self.X = X
        self.resid = resid
        self.max_depth = max_depth
        self.min_leaf = min_leaf
        self.threads = threads
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.value: list[float] = []

    def grow(self, order: np.ndarray, depth: int) -> int:
        node = len(self.feature)
        n = order.shape[1]
        r = self.resid[np.sort(order[0])]
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(float(np.mean(r)))
        if depth >= self.max_depth or n < 2 * self.min_leaf:
            return node
        scores, positions = _core.best_splits(order, self.X, self.resid, self.min_leaf,
                                              self.threads)
        best_f, best = -1, -math.inf
        for f in range(len(scores)):
            if positions[f] >= 0 and scores[f] > best:
                best_f, best = f, scores[f]
        if best_f < 0:
            return node
        total = float(np.sum(r))
        if best - total * total / n <= 1e-12 * float(np.dot(r, r)):
            return node
        k = int(positions[best_f])
        a = self.X[order[best_f, k], best_f]
        b = self.X[order[best_f, k + 1], best_f]
        t = (a + b) / 2
        if not a < t <= b:
            t = b
        go_left = np.zeros(self.X.shape[0], dtype=bool)
        go_left[order[best_f, :k + 1]] = True
        m = go_left[order]
        nfeat = order.shape[0]
        left_order = np.ascontiguousarray(order[m].reshape(nfeat, k + 1))
        right_order = np.ascontiguousarray(order[~m].reshape(nfeat, n - k - 1))
        self.feature[node] = best_f
        self.threshold[node] = float(t)
        self.left[node] = self.grow(left_order, depth + 1)
        self.right[node] = self.grow(right_order, depth + 1)
        return node

    def tree(self) -> RegressionTree:
        return RegressionTree(np.array(self.feature, dtype=np.int32),
                              np.array(self.threshold, dtype=np.float64),
                              np.array(self.left, dtype=np.int32),
                              np.array(self.right, dtype=np.int32),
                              np.array(self.value, dtype=np.float64))


def _check_xy(X, y, n_features=None):
    X = np.ascontiguousarray(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("X must be a 2-D array")
    if X.shape[0] != y.shape[0]:
        raise ValueError(f"X has {X.shape[0]} rows but y has {y.shape[0]}")
    if n_features is not None and X.shape[1] != n_features:
        raise ValueError(f"expected {n_features} feature columns, got {X.shape[1]}")
    if not np.all(np.isfinite(X)):
        raise ValueError("NaN or infinite feature values")
    if not np.all(np.isfinite(y)):
        raise ValueError("NaN or infinite targets")
    return X, y


def fit(X, y, config: TrainConfig | None = None, threads: int = 1) -> GbmModel:
    """Fit a boosted ensemble to ``(X, y)``.

    ``init`` is the target mean; each tree fits the current residuals and is
    added with shrinkage ``learning_rate``. With ``subsample < 1`` each tree
    sees a seeded random subset of rows. The result is independent of
    ``threads``.
    """
    config = config or TrainConfig()
    names = config.feature_names or tuple(f"f{i}" for i in range(np.shape(X)[1]))
    X, y = _check_xy(X, y, len(names))
    n = X.shape[0]
    if n < 2:
        raise ValueError("need at least 2 training rows")

    order_full = np.ascontiguousarray(
        np.stack([np.argsort(X[:, f], kind="stable") for f in range(X.shape[1])]).astype(np.int64))
    rng = np.random.default_rng(config.seed)
    init = float(np.mean(y))
    pred = np.full(n, init)
    acc = np.zeros(n)
    trees = []
    history = []
    for _ in range(config.n_trees):
        resid = np.ascontiguousarray(y - pred)
        if config.subsample < 1:
            m = max(2, int(math.floor(config.subsample * n + 0.5)))
            keep = np.zeros(n, dtype=bool)
            keep[rng.choice(n, size=min(m, n), replace=False)] = True
            order = np.ascontiguousarray(
                order_full[keep[order_full]].reshape(X.shape[1], int(keep.sum())))
        else:
            order = order_full
        builder = _TreeBuilder(X, resid, config.max_depth, config.min_samples_leaf, threads)
        builder.grow(order, 0)
        tree = builder.tree()
        trees.append(tree)
        offsets = np.zeros(1, dtype=np.int64)
        acc = acc + _core.tree_sums(X, tree.feature, tree.threshold, tree.left, tree.right,
                                    tree.value, offsets)
        pred = init + config.learning_rate * acc
        history.append(float(np.mean((y - pred) ** 2)))
    return GbmModel(init, trees, config.learning_rate, names, tuple(history))


def mae(predicted, truth) -> float:
    """Mean absolute error between two equal-length sequences."""
    p = np.asarray(predicted, dtype=float)
    t = np.asarray(truth, dtype=float)
    if p.shape != t.shape:
        raise ValueError(f"length mismatch: {p.shape} vs {t.shape}")
    if p.size == 0:
        raise ValueError("mae of empty sequences")
    return float(np.mean(np.abs(t - p)))


# ---------------------------------------------------------------- serialization

def save_model(model: GbmModel) -> str:
    doc = {
        "version": MODEL_VERSION,
        "init": model.init,
        "learning_rate": model.learning_rate,
        "feature_names": list(model.feature_names),
        "trees": [t.to_json() for t in model.trees],
    }
    return json.dumps(doc, separators=(",", ":")) + "\n"


def _tree_from_json(doc, k: int, n_features: int) -> RegressionTree:
    try:
        nodes = doc["nodes"]
    except (TypeError, KeyError):
        raise ModelFormatError(f"tree {k}: missing 'nodes'") from None
    if not isinstance(nodes, list) or not nodes:
        raise ModelFormatError(f"tree {k}: 'nodes' must be a non-empty list")
    n = len(nodes)
    feat = np.full(n, -1, dtype=np.int32)
    thr = np.zeros(n)
    left = np.full(n, -1, dtype=np.int32)
    right = np.full(n, -1, dtype=np.int32)
    val = np.zeros(n)
    for i, nd in enumerate(nodes):
        if not isinstance(nd, dict):
            raise ModelFormatError(f"tree {k} node {i}: expected an object")
        if "leaf" in nd:
            val[i] = float(nd["leaf"])
            continue
        try:
            f, t, lo, hi = int(nd["f"]), float(nd["t"]), int(nd["l"]), int(nd["r"])
        except (KeyError, TypeError, ValueError):
            raise ModelFormatError(f"tree {k} node {i}: needs f, t, l, r or leaf") from None
        if not 0 <= f < n_features:
            raise ModelFormatError(f"tree {k} node {i}: feature index {f} out of range")
        if not (i < lo < n and i < hi < n):
            raise ModelFormatError(f"tree {k} node {i}: child index out of range")
        feat[i], thr[i], left[i], right[i] = f, t, lo, hi
    if not np.all(np.isfinite(thr)) or not np.all(np.isfinite(val)):
        raise ModelFormatError(f"tree {k}: non-finite threshold or leaf value")
    return RegressionTree(feat, thr, left, right, val)


def load_model(text: str) -> GbmModel:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(
            f"model JSON parse error at line {exc.lineno} column {exc.colno} "
            f"(char {exc.pos}): {exc.msg}") from None
    if not isinstance(doc, dict):
        raise ModelFormatError("model JSON must be an object")
    version = doc.get("version")
    if version != MODEL_VERSION:
        raise ModelFormatError(
            f"incompatible model version {version!r}; this build reads version {MODEL_VERSION}")
    for key in ("init", "learning_rate", "feature_names", "trees"):
        if key not in doc:
            raise ModelFormatError(f"model JSON missing {key!r}")
    names = tuple(str(s) for s in doc["feature_names"])
    trees = [_tree_from_json(t, k, len(names)) for k, t in enumerate(doc["trees"])]
    return GbmModel(float(doc["init"]), trees, float(doc["learning_rate"]), names)

"""Multi-output regression forest (bootstrap CART, variance-reduction splits)."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

_LEAF = -1


class EmptyDataError(ValueError):
    pass


@dataclass
class Tree:
    """Flat array tree; ``feature[i] == -1`` marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray  # [node, output]

    def apply(self, x):
        x = np.atleast_2d(x)
        node = np.zeros(x.shape[0], dtype=np.int64)
        active = self.feature[node] != _LEAF
        while active.any():
            idx = np.flatnonzero(active)
            nd = node[idx]
            go_left = x[idx, self.feature[nd]] <= self.threshold[nd]
            node[idx] = np.where(go_left, self.left[nd], self.right[nd])
            active = self.feature[node] != _LEAF
        return node

    def predict(self, x):
        return self.value[self.apply(x)]

    @property
    def n_nodes(self) -> int:
        return self.feature.size


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 100
    max_depth: int | None = 12
    min_leaf: int = 2
    max_features: str | int | None = "sqrt"
    bootstrap: bool = True
    seed: int = 0


@dataclass
class ForestModel:
    trees: list
    config: ForestConfig
    n_features: int
    n_outputs: int
    extras: dict = field(default_factory=dict)

    @property
    def tree_count(self) -> int:
        return len(self.trees)


def _n_split_features(max_features, d):
    if max_features is None:
        return d
    if max_features == "sqrt":
        return max(1, int(np.sqrt(d)))
    return max(1, min(d, int(max_features)))


def _best_split(x, y, features, min_leaf):
    """Best (feature, threshold, gain) over candidate features.

    Gain is the drop in summed squared error over all outputs.
    """
    n = x.shape[0]
    total = y.sum(axis=0)
    base = (total ** 2).sum() / n
    best = (None, None, 0.0)
    for f in features:
        order = np.argsort(x[:, f], kind="stable")
        xs = x[order, f]
        cum = np.cumsum(y[order], axis=0)[:-1]
        n_left = np.arange(1, n)
        valid = (xs[1:] > xs[:-1]) & (n_left >= min_leaf) & (n - n_left >= min_leaf)
        if not valid.any():
            continue
        right = total - cum
        score = ((cum ** 2).sum(axis=1) / n_left
                 + (right ** 2).sum(axis=1) / (n - n_left)) - base
        score = np.where(valid, score, -np.inf)
        i = int(np.argmax(score))
        if score[i] > best[2] + 1e-12:
            thr = 0.5 * (xs[i] + xs[i + 1])
            if thr >= xs[i + 1]:  # neighbours one ulp apart
                thr = xs[i]
            best = (int(f), thr, float(score[i]))
    return best


def fit_tree(x, y, rng, max_depth=None, min_leaf=1, max_features=None):
    d = x.shape[1]
    k = _n_split_features(max_features, d)
    feature, threshold, left, right, value = [], [], [], [], []

    def grow(idx, depth):
        node = len(feature)
        feature.append(_LEAF)
        threshold.append(0.0)
        left.append(_LEAF)
        right.append(_LEAF)
        value.append(y[idx].mean(axis=0))
        if (max_depth is not None and depth >= max_depth) or idx.size < 2 * min_leaf:
            return node
        if np.all(y[idx] == y[idx][0]):
            return node
        feats = rng.choice(d, size=k, replace=False) if k < d else np.arange(d)
        f, thr, gain = _best_split(x[idx], y[idx], feats, min_leaf)
        if f is None or gain <= 0:
            return node
        mask = x[idx, f] <= thr
        feature[node] = f
        threshold[node] = thr
        left[node] = grow(idx[mask], depth + 1)
        right[node] = grow(idx[~mask], depth + 1)
        return node

    grow(np.arange(x.shape[0]), 0)
    return Tree(np.array(feature, dtype=np.int64), np.array(threshold),
                np.array(left, dtype=np.int64), np.array(right, dtype=np.int64),
                np.array(value))


def forest_fit(x, y, config: ForestConfig | None = None) -> ForestModel:
    """Fit ``n_trees`` bootstrap CART trees with per-tree seeds.

    Rows are put in a canonical order first, so the fitted forest does not
    depend on the order in which samples are supplied.
    """
    config = config or ForestConfig()
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim != 2 or y.ndim != 2 or x.shape[0] != y.shape[0]:
        raise ValueError("x and y must be 2-D with matching rows")
    if x.shape[0] == 0:
        raise EmptyDataError("no training samples")
    if x.shape[0] < 10:
        raise EmptyDataError("a forest needs at least 10 samples")
    order = np.lexsort(np.column_stack([x, y]).T[::-1])
    x, y = x[order], y[order]
    n = x.shape[0]
    trees = []
    for t in range(config.n_trees):
        rng = np.random.default_rng([config.seed, t])
        idx = rng.integers(0, n, size=n) if config.bootstrap else np.arange(n)
        trees.append(fit_tree(x[idx], y[idx], rng, config.max_depth, config.min_leaf,
                              config.max_features))
    return ForestModel(trees, config, x.shape[1], y.shape[1])


def forest_predict_raw(model: ForestModel, x):
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[1] != model.n_features:
        raise ValueError(f"expected {model.n_features} features, got {x.shape[1]}")
    return np.mean([t.predict(x) for t in model.trees], axis=0)


def forest_predict(model: ForestModel, x, floor=1e-6):
    """Mean leaf vector, clipped to ``floor`` and renormalized onto the simplex."""
    single = np.asarray(x).ndim == 1
    p = np.maximum(forest_predict_raw(model, x), floor)
    p = p / p.sum(axis=1, keepdims=True)
    return p[0] if single else p

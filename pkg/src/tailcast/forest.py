"""Bagged CART regression forest.

Trees are grown breadth-first, so the random draws consumed by levels
< k do not depend on the depth limit: a tree grown to depth 8 and read
at depth k is the tree that ``max_depth=k`` would have produced. Cross
validation over a depth grid exploits this by growing each fold once.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np


class RegressionTree:
    """Variance-reduction CART tree; every node stores its mean so the tree
    can be evaluated at any depth cut."""

    def __init__(self, max_depth=8, min_samples_leaf=5, max_features=None, rng=None):
        self.max_depth = max_depth
        self.min_samples_leaf = min_samples_leaf
        self.max_features = max_features
        self.rng = rng if rng is not None else np.random.default_rng(0)

    def fit(self, X, y):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        n, d = X.shape
        mtry = d if self.max_features is None else max(1, min(d, int(self.max_features)))
        feature, threshold, left, right, value = [], [], [], [], []

        def new_node(idx):
            feature.append(-1)
            threshold.append(0.0)
            left.append(-1)
            right.append(-1)
            value.append(float(y[idx].mean()))
            return len(value) - 1

        queue = deque([(new_node(np.arange(n)), np.arange(n), 0)])
        while queue:
            node, idx, depth = queue.popleft()
            if depth >= self.max_depth or idx.size < 2 * self.min_samples_leaf:
                continue
            features = self.rng.choice(d, size=mtry, replace=False)
            split = self._best_split(X[idx], y[idx], features)
            if split is None:
                continue
            j, thr = split
            go_left = X[idx, j] <= thr
            feature[node], threshold[node] = int(j), float(thr)
            left[node] = new_node(idx[go_left])
            right[node] = new_node(idx[~go_left])
            queue.append((left[node], idx[go_left], depth + 1))
            queue.append((right[node], idx[~go_left], depth + 1))

        self.feature_ = np.array(feature)
        self.threshold_ = np.array(threshold)
        self.left_ = np.array(left)
        self.right_ = np.array(right)
        self.value_ = np.array(value)
        return self

    def _best_split(self, X, y, features):
        n = y.size
        leaf = self.min_samples_leaf
        total, total_sq = y.sum(), np.dot(y, y)
        parent_sse = total_sq - total * total / n
        if parent_sse <= 1e-14 * max(1.0, total_sq):
            return None
        best_gain, best = 0.0, None
        for j in features:
            order = np.argsort(X[:, j], kind="stable")
            xs, ys = X[order, j], y[order]
            csum = np.cumsum(ys)[:-1]
            csq = np.cumsum(ys * ys)[:-1]
            n_left = np.arange(1, n)
            n_right = n - n_left
            sse = (csq - csum ** 2 / n_left) + ((total_sq - csq) - (total - csum) ** 2 / n_right)
            valid = (xs[1:] > xs[:-1]) & (n_left >= leaf) & (n_right >= leaf)
            if not valid.any():
                continue
            sse = np.where(valid, sse, np.inf)
            i = int(np.argmin(sse))
            gain = parent_sse - sse[i]
            if gain > best_gain:
                best_gain, best = gain, (j, 0.5 * (xs[i] + xs[i + 1]))
        return best

    def predict(self, X, depth=None):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        limit = self.max_depth if depth is None else depth
        node = np.zeros(X.shape[0], dtype=int)
        for _ in range(limit):
            internal = self.feature_[node] >= 0
            if not internal.any():
                break
            rows = np.nonzero(internal)[0]
            f = self.feature_[node[rows]]
            go_left = X[rows, f] <= self.threshold_[node[rows]]
            node[rows] = np.where(go_left, self.left_[node[rows]], self.right_[node[rows]])
        return self.value_[node]

    def to_json(self, node=0) -> dict:
        if self.feature_[node] < 0:
            return {"value": float(self.value_[node])}
        return {"feature": int(self.feature_[node]), "threshold": float(self.threshold_[node]),
                "value": float(self.value_[node]),
                "left": self.to_json(self.left_[node]), "right": self.to_json(self.right_[node])}

    @classmethod
    def from_json(cls, record: dict, max_depth: int) -> RegressionTree:
        tree = cls(max_depth=max_depth)
        feature, threshold, left, right, value = [], [], [], [], []
        stack = [(record, None, None)]
        while stack:
            rec, parent, side = stack.pop()
            i = len(value)
            feature.append(rec.get("feature", -1))
            threshold.append(rec.get("threshold", 0.0))
            left.append(-1)
            right.append(-1)
            value.append(rec["value"])
            if parent is not None:
                (left if side == "left" else right)[parent] = i
            if "feature" in rec:
                stack.append((rec["right"], i, "right"))
                stack.append((rec["left"], i, "left"))
        tree.feature_, tree.threshold_ = np.array(feature), np.array(threshold, dtype=float)
        tree.left_, tree.right_, tree.value_ = np.array(left), np.array(right), np.array(value, dtype=float)
        return tree


@dataclass
class ForestConfig:
    n_trees: int = 200
    max_depth_grid: tuple = (2, 3, 4, 6, 8)
    cv_folds: int = 5
    seed: int = 0
    min_samples_leaf: int = 5


def grow_forest(X, y, n_trees, max_depth, max_features, min_samples_leaf, seed):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n = y.size
    trees = []
    for child in np.random.SeedSequence(seed).spawn(n_trees):
        rng = np.random.default_rng(child)
        boot = rng.integers(0, n, size=n)
        tree = RegressionTree(max_depth, min_samples_leaf, max_features, rng)
        trees.append(tree.fit(X[boot], y[boot]))
    return trees


def forest_predict(trees, X, depth=None, per_tree=False):
    preds = np.array([t.predict(X, depth) for t in trees])
    return preds if per_tree else preds.mean(axis=0)


def cv_select_depth(X, y, config: ForestConfig, max_features: int) -> tuple[int, dict]:
    """k-fold CV MSE for each depth of the grid; returns (best depth, scores)."""
    n = len(y)
    grid = sorted(config.max_depth_grid)
    folds = np.array_split(np.random.default_rng(config.seed).permutation(n), config.cv_folds)
    sse = np.zeros(len(grid))
    for k, test_idx in enumerate(folds):
        train_idx = np.setdiff1d(np.arange(n), test_idx)
        trees = grow_forest(X[train_idx], y[train_idx], config.n_trees, grid[-1], max_features,
                            config.min_samples_leaf, seed=[config.seed, 1 + k])
        for g, depth in enumerate(grid):
            resid = y[test_idx] - forest_predict(trees, X[test_idx], depth)
            sse[g] += float(resid @ resid)
    scores = {int(depth): sse[g] / n for g, depth in enumerate(grid)}
    best = grid[int(np.argmin(sse))]
    return best, scores

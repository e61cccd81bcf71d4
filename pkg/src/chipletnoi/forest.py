"""Plain bagged regression trees for the search-state evaluator.

Variance-reduction splits on axis-aligned thresholds, bootstrap
resampling per tree, mean aggregation over the ensemble. Deterministic
for a fixed seed.
"""

from __future__ import annotations

import numpy as np


class _Node:
    __slots__ = ("feature", "threshold", "left", "right", "value")

    def __init__(self, value):
        self.feature = -1
        self.threshold = 0.0
        self.left = None
        self.right = None
        self.value = value

    @property
    def is_leaf(self):
        return self.left is None


def _build_tree(x: np.ndarray, y: np.ndarray, depth: int, max_depth: int,
                min_samples_leaf: int) -> _Node:
    node = _Node(float(y.mean()))
    if depth >= max_depth or len(y) < 2 * min_samples_leaf or np.ptp(y) == 0:
        return node
    best_gain = 0.0
    best = None
    base_sse = float(((y - y.mean()) ** 2).sum())
    for f in range(x.shape[1]):
        col = x[:, f]
        order = np.argsort(col, kind="stable")
        sc, sy = col[order], y[order]
        for i in range(min_samples_leaf, len(sy) - min_samples_leaf + 1):
            if i >= len(sy) or sc[i] == sc[i - 1]:
                continue
            left, right = sy[:i], sy[i:]
            sse = (float(((left - left.mean()) ** 2).sum())
                   + float(((right - right.mean()) ** 2).sum()))
            gain = base_sse - sse
            if gain > best_gain + 1e-12:
                best_gain = gain
                best = (f, (sc[i] + sc[i - 1]) / 2.0, order[:i], order[i:])
    if best is None:
        return node
    f, thr, li, ri = best
    node.feature = f
    node.threshold = float(thr)
    node.left = _build_tree(x[li], y[li], depth + 1, max_depth,
                            min_samples_leaf)
    node.right = _build_tree(x[ri], y[ri], depth + 1, max_depth,
                             min_samples_leaf)
    return node


def _predict_one(node: _Node, row: np.ndarray) -> float:
    while not node.is_leaf:
        node = node.left if row[node.feature] <= node.threshold else node.right
    return node.value


class RandomForestRegressor:
    """Bootstrap-aggregated regression trees.

    Parameters
    ----------
    n_trees : ensemble size.
    max_depth : depth cap per tree.
    min_samples_leaf : minimum samples on each side of a split.
    seed : bootstrap sampling seed; fixed seed gives fixed predictions.
    """

    def __init__(self, n_trees: int = 30, max_depth: int = 8,
                 min_samples_leaf: int = 1, seed: int = 0):
        self.n_trees = n_trees
        self.max_depth = max_depth
        self.min_samples_leaf = min_samples_leaf
        self.seed = seed
        self.trees_: list[_Node] = []

    def fit(self, x, y) -> "RandomForestRegressor":
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if x.ndim != 2 or len(x) != len(y) or len(y) == 0:
            raise ValueError("need a non-empty 2-D feature matrix with "
                             "matching targets")
        rng = np.random.default_rng(self.seed)
        n = len(y)
        self.trees_ = []
        for _ in range(self.n_trees):
            idx = rng.integers(0, n, size=n)
            self.trees_.append(_build_tree(x[idx], y[idx], 0, self.max_depth,
                                           self.min_samples_leaf))
        return self

    def predict(self, x) -> np.ndarray:
        if not self.trees_:
            raise RuntimeError("fit the forest before predicting")
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        if single:
            x = x[None, :]
        out = np.zeros(len(x))
        for tree in self.trees_:
            out += [_predict_one(tree, row) for row in x]
        out /= self.n_trees
        return out[0] if single else out

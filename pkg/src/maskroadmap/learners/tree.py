"""Recursive partitioning regression tree (CART, variance-reduction splits)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Tree:
    """Flat array encoding of a binary tree.

    ``feature[k] == -1`` marks node ``k`` as a leaf. Rows with
    ``x[feature] <= threshold`` descend to ``left``.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    depth: int

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.feature < 0))

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Index of the leaf each row of `X` falls into."""
        X = np.asarray(X, dtype=float)
        node = np.zeros(X.shape[0], dtype=np.intp)
        rows = np.arange(X.shape[0])
        for _ in range(self.depth + 1):
            feat = self.feature[node]
            internal = feat >= 0
            if not internal.any():
                break
            f = np.where(internal, feat, 0)
            go_left = X[rows, f] <= self.threshold[node]
            nxt = np.where(go_left, self.left[node], self.right[node])
            node = np.where(internal, nxt, node)
        return node

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]

    def with_values(self, value: np.ndarray) -> "Tree":
        return Tree(self.feature, self.threshold, self.left, self.right, np.asarray(value, float), self.depth)


def _best_split(X: np.ndarray, y: np.ndarray, min_leaf: int):
    """Best (gain, column, threshold) over all columns, or None.

    Ties are broken by lowest column index, then lowest threshold.
    """
    n, p = X.shape
    total = y.sum()
    base = total * total / n
    best = None
    best_gain = 0.0
    for j in range(p):
        order = np.argsort(X[:, j], kind="stable")
        xs = X[order, j]
        cs = np.cumsum(y[order])
        # candidate cut after position i (left = first i+1 rows)
        i = np.arange(min_leaf - 1, n - min_leaf)
        if i.size == 0:
            continue
        i = i[xs[i] < xs[i + 1]]
        if i.size == 0:
            continue
        nl = i + 1.0
        sl = cs[i]
        sr = total - sl
        gain = sl * sl / nl + sr * sr / (n - nl) - base
        k = int(np.argmax(gain))
        g = float(gain[k])
        if g > best_gain * (1.0 + 1e-12) + 1e-300:
            best_gain = g
            best = (g, j, 0.5 * (xs[i[k]] + xs[i[k] + 1]))
    return best


def fit_tree(X, y, max_depth: int = 5, min_leaf: int = 5) -> Tree:
    """Grow a least-squares regression tree.

    Parameters
    ----------
    X : array of shape (n, p)
    y : array of shape (n,)
    max_depth : int
        Maximum number of splits on any root-to-leaf path.
    min_leaf : int
        Minimum number of training rows in every leaf.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if max_depth < 0 or min_leaf < 1:
        raise ValueError("max_depth must be >= 0 and min_leaf >= 1")
    feature, threshold, left, right, value = [], [], [], [], []

    def new_node(idx):
        feature.append(-1)
        threshold.append(np.nan)
        left.append(-1)
        right.append(-1)
        value.append(float(y[idx].mean()))
        return len(feature) - 1

    root = new_node(np.arange(y.size))
    stack = [(root, np.arange(y.size), 0)]
    reached = 0
    while stack:
        node, idx, depth = stack.pop()
        reached = max(reached, depth)
        if depth >= max_depth or idx.size < 2 * min_leaf or np.ptp(y[idx]) == 0 or X.shape[1] == 0:
            continue
        split = _best_split(X[idx], y[idx], min_leaf)
        if split is None:
            continue
        _, j, thr = split
        go_left = X[idx, j] <= thr
        li, ri = idx[go_left], idx[~go_left]
        feature[node] = j
        threshold[node] = thr
        left[node] = new_node(li)
        right[node] = new_node(ri)
        # push right first so the left subtree is numbered first
        stack.append((right[node], ri, depth + 1))
        stack.append((left[node], li, depth + 1))
    return Tree(
        np.array(feature, dtype=np.intp),
        np.array(threshold, dtype=float),
        np.array(left, dtype=np.intp),
        np.array(right, dtype=np.intp),
        np.array(value, dtype=float),
        reached,
    )

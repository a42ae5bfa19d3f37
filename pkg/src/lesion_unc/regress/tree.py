"""CART regression trees and tree-driven recursive feature elimination."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

DEFAULT_MAX_DEPTH = 5
DEFAULT_MIN_LEAF = 5


@dataclass
class _Node:
    value: float
    feature: int = -1
    threshold: float = 0.0
    left: "_Node | None" = None
    right: "_Node | None" = None


def _best_split(X, y, min_leaf):
    """Best (gain, feature, threshold) at one node, or None.

    Gain is the drop in summed squared error. Scanning features in index
    order and thresholds in ascending order, replacing only on a strictly
    larger gain, breaks ties towards the lower feature and lower threshold.
    """
    n, d = X.shape
    sse_parent = float(np.sum((y - y.mean()) ** 2))
    best = None
    k = np.arange(min_leaf, n - min_leaf + 1)
    if k.size == 0:
        return None
    for j in range(d):
        order = np.argsort(X[:, j], kind="stable")
        xs, ys = X[order, j], y[order]
        s1 = np.concatenate([[0.0], np.cumsum(ys)])
        s2 = np.concatenate([[0.0], np.cumsum(ys * ys)])
        valid = xs[k - 1] < xs[np.minimum(k, n - 1)]
        valid &= k < n
        if not valid.any():
            continue
        kk = k[valid]
        left = s2[kk] - s1[kk] ** 2 / kk
        rs1, rs2, rn = s1[n] - s1[kk], s2[n] - s2[kk], n - kk
        right = rs2 - rs1 ** 2 / rn
        gain = sse_parent - left - right
        i = int(np.argmax(gain))
        if best is None or gain[i] > best[0]:
            split_at = kk[i]
            best = (float(gain[i]), j, 0.5 * (xs[split_at - 1] + xs[split_at]))
    if best is None or not best[0] > 1e-12 * sse_parent:
        return None
    return best


@dataclass
class RegressionTree:
    """Greedy variance-reduction tree.

    ``importances_`` is the total SSE reduction credited to each feature,
    normalised to sum to one (all zeros when the tree never splits).
    """

    max_depth: int = DEFAULT_MAX_DEPTH
    min_leaf: int = DEFAULT_MIN_LEAF
    importances_: np.ndarray = field(default=None, repr=False)
    root_: _Node = field(default=None, repr=False)

    def fit(self, X, y) -> "RegressionTree":
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        gains = np.zeros(X.shape[1])
        self.root_ = self._grow(X, y, 0, gains)
        total = gains.sum()
        self.importances_ = gains / total if total > 0 else gains
        return self

    def _grow(self, X, y, depth, gains):
        node = _Node(float(y.mean()))
        if depth >= self.max_depth or len(y) < 2 * self.min_leaf or np.ptp(y) == 0:
            return node
        split = _best_split(X, y, self.min_leaf)
        if split is None:
            return node
        gain, j, thr = split
        gains[j] += gain
        mask = X[:, j] <= thr
        node.feature, node.threshold = j, thr
        node.left = self._grow(X[mask], y[mask], depth + 1, gains)
        node.right = self._grow(X[~mask], y[~mask], depth + 1, gains)
        return node

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        out = np.empty(len(X))
        for i, row in enumerate(X):
            node = self.root_
            while node.left is not None:
                node = node.left if row[node.feature] <= node.threshold else node.right
            out[i] = node.value
        return out


def fit_tree(X, y, max_depth: int = DEFAULT_MAX_DEPTH, min_leaf: int = DEFAULT_MIN_LEAF) -> tuple:
    tree = RegressionTree(max_depth, min_leaf).fit(X, y)
    return tree, tree.importances_


def n_keep(keep_fraction: float, d: int) -> int:
    """``ceil(keep_fraction * d)``, robust to representation error (0.3*10 -> 3)."""
    if not 0.0 < keep_fraction <= 1.0:
        raise ValueError(f"keep_fraction must lie in (0, 1], got {keep_fraction}")
    return max(1, min(d, math.ceil(round(keep_fraction * d, 9))))


def elimination_order(X, y, max_depth: int = DEFAULT_MAX_DEPTH, min_leaf: int = DEFAULT_MIN_LEAF,
                      stop_at: int = 1) -> list:
    """Column indices in the order RFE removes them, until ``stop_at`` remain.

    Each round refits a tree on the surviving columns and drops the one with
    the lowest importance; ties drop the higher column index.
    """
    X = np.asarray(X, dtype=np.float64)
    alive = list(range(X.shape[1]))
    removed = []
    while len(alive) > stop_at:
        _, imp = fit_tree(X[:, alive], y, max_depth, min_leaf)
        pos = len(alive) - 1 - int(np.argmin(imp[::-1]))
        removed.append(alive.pop(pos))
    return removed


def rfe(X, y, keep_fraction: float, names=None, max_depth: int = DEFAULT_MAX_DEPTH,
        min_leaf: int = DEFAULT_MIN_LEAF) -> list:
    """Recursive feature elimination; returns surviving names (or indices) in column order."""
    X = np.asarray(X, dtype=np.float64)
    d = X.shape[1]
    k = n_keep(keep_fraction, d)
    gone = set(elimination_order(X, y, max_depth, min_leaf, stop_at=k))
    kept = [j for j in range(d) if j not in gone]
    return [names[j] for j in kept] if names is not None else kept


def selection_from_order(d: int, removed: list, keep_fraction: float) -> list:
    """Columns RFE keeps at ``keep_fraction`` given a full elimination order."""
    k = n_keep(keep_fraction, d)
    gone = set(removed[: d - k])
    return [j for j in range(d) if j not in gone]

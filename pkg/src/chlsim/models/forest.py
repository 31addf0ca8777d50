"""CART regression trees and a bagged random forest.

Splits maximise the reduction in squared error.  Among equally good splits
the lowest feature index wins, then the lowest threshold.  Tree growth is
compiled with numba; a forest of a few hundred trees on a few hundred rows
fits in well under a second.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

from ._base import ChlRegressor, as_list

LEAF = -1


@njit(cache=True)
def _best_split(X, y, idx, features, min_leaf):
    n = idx.size
    best_feat = -1
    best_thr = 0.0
    best_score = -np.inf
    xs = np.empty(n)
    ys = np.empty(n)
    total = 0.0
    for i in range(n):
        total += y[idx[i]]
    for f in features:
        for i in range(n):
            xs[i] = X[idx[i], f]
        order = np.argsort(xs, kind="mergesort")
        for i in range(n):
            ys[i] = y[idx[order[i]]]
        left = 0.0
        for i in range(n - 1):
            left += ys[i]
            n_left = i + 1
            if n_left < min_leaf:
                continue
            if n - n_left < min_leaf:
                break
            lo = xs[order[i]]
            hi = xs[order[i + 1]]
            if not hi > lo:
                continue
            right = total - left
            score = left * left / n_left + right * right / (n - n_left)
            # strict comparison keeps the earliest (feature, threshold) on ties
            if score > best_score:
                best_score = score
                best_feat = f
                thr = lo + (hi - lo) / 2.0
                best_thr = thr if thr < hi else lo
    parent = total * total / n
    return best_feat, best_thr, best_score - parent


@njit(cache=True)
def _grow(X, y, rows, n_select, min_leaf, feature_keys):
    """Grow one tree on the (possibly repeated) row indices ``rows``.

    ``feature_keys[k]`` holds random keys for node ``k``; the ``n_select``
    smallest keys choose that node's candidate features.
    """
    cap = 2 * rows.size + 1
    feature = np.full(cap, LEAF, dtype=np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, LEAF, dtype=np.int64)
    right = np.full(cap, LEAF, dtype=np.int64)
    value = np.zeros(cap)

    stack_nodes = np.empty(cap, dtype=np.int64)
    stack_start = np.empty(cap, dtype=np.int64)
    stack_stop = np.empty(cap, dtype=np.int64)
    order = rows.copy()
    buf = np.empty_like(order)

    n_nodes = 1
    top = 0
    stack_nodes[0] = 0
    stack_start[0] = 0
    stack_stop[0] = order.size
    p = X.shape[1]
    while top >= 0:
        node = stack_nodes[top]
        start = stack_start[top]
        stop = stack_stop[top]
        top -= 1
        idx = order[start:stop]
        n = idx.size
        s = 0.0
        for i in range(n):
            s += y[idx[i]]
        mean = s / n
        value[node] = mean
        if n < 2 * min_leaf:
            continue
        pure = True
        for i in range(n):
            if y[idx[i]] != y[idx[0]]:
                pure = False
                break
        if pure:
            continue
        if n_select >= p:
            features = np.arange(p)
        else:
            features = np.sort(np.argsort(feature_keys[node % feature_keys.shape[0]])[:n_select])
        f, thr, gain = _best_split(X, y, idx, features, min_leaf)
        if f < 0 or not gain > 0:
            continue
        nl = 0
        nr = 0
        for i in range(n):
            r = idx[i]
            if X[r, f] <= thr:
                buf[start + nl] = r
                nl += 1
        for i in range(n):
            r = idx[i]
            if not X[r, f] <= thr:
                buf[start + nl + nr] = r
                nr += 1
        order[start:stop] = buf[start:stop]
        feature[node] = f
        threshold[node] = thr
        left[node] = n_nodes
        right[node] = n_nodes + 1
        # push right first so the left subtree is expanded first
        top += 1
        stack_nodes[top] = n_nodes + 1
        stack_start[top] = start + nl
        stack_stop[top] = stop
        top += 1
        stack_nodes[top] = n_nodes
        stack_start[top] = start
        stack_stop[top] = start + nl
        n_nodes += 2
    return feature[:n_nodes], threshold[:n_nodes], left[:n_nodes], right[:n_nodes], value[:n_nodes]


@njit(cache=True)
def _apply_tree(X, feature, threshold, left, right, value):
    out = np.empty(X.shape[0])
    for i in range(X.shape[0]):
        node = 0
        while feature[node] != LEAF:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = value[node]
    return out


def resolve_mtry(mtry, n_features: int) -> int:
    """Map ``mtry`` (int, float fraction, 'third', 'sqrt', 'all' or None) to a feature count."""
    if mtry is None or mtry == "third":
        k = math.ceil(n_features / 3)
    elif mtry == "sqrt":
        k = math.ceil(math.sqrt(n_features))
    elif mtry == "all":
        k = n_features
    elif isinstance(mtry, float) and 0 < mtry <= 1:
        k = math.ceil(mtry * n_features)
    elif isinstance(mtry, (int, np.integer)) and mtry >= 1:
        k = int(mtry)
    else:
        raise ValueError(f"invalid mtry {mtry!r}")
    return max(1, min(k, n_features))


class RegressionTree(ChlRegressor):
    """Single CART tree; ``mtry`` < n_features gives the randomised variant used in forests."""

    kind = "tree"
    _fitted_attr = "feature_"

    def __init__(self, mtry="all", min_leaf=1, random_state=0):
        self.mtry = mtry
        self.min_leaf = min_leaf
        self.random_state = random_state

    def _fit(self, X, y, rows=None):
        if self.min_leaf < 1:
            raise ValueError("min_leaf must be >= 1")
        rng = np.random.default_rng(self.random_state)
        rows = np.arange(X.shape[0]) if rows is None else np.asarray(rows, dtype=np.int64)
        k = resolve_mtry(self.mtry, X.shape[1])
        keys = rng.random((2 * rows.size + 1, X.shape[1])) if k < X.shape[1] else np.zeros((1, 1))
        (self.feature_, self.threshold_, self.left_, self.right_, self.value_) = _grow(
            X, y, rows, k, int(self.min_leaf), keys
        )

    def _predict(self, X):
        return _apply_tree(X, self.feature_, self.threshold_, self.left_, self.right_, self.value_)

    @property
    def n_nodes(self):
        return self.feature_.size

    def _state(self):
        return {
            "feature": as_list(self.feature_),
            "threshold": as_list(self.threshold_),
            "left": as_list(self.left_),
            "right": as_list(self.right_),
            "value": as_list(self.value_),
        }

    def _load_state(self, state):
        self.feature_ = np.asarray(state["feature"], dtype=np.int64)
        self.threshold_ = np.asarray(state["threshold"], dtype=np.float64)
        self.left_ = np.asarray(state["left"], dtype=np.int64)
        self.right_ = np.asarray(state["right"], dtype=np.int64)
        self.value_ = np.asarray(state["value"], dtype=np.float64)


class RandomForest(ChlRegressor):
    """Bagged CART ensemble; prediction is the mean over trees.

    Each tree draws its bootstrap sample and split-feature subsets from its
    own child seed of ``random_state``, so results do not depend on how
    trees are scheduled.
    """

    kind = "rf"
    _fitted_attr = "trees_"

    def __init__(self, n_trees=200, mtry="third", min_leaf=5, bootstrap=True, random_state=0):
        self.n_trees = n_trees
        self.mtry = mtry
        self.min_leaf = min_leaf
        self.bootstrap = bootstrap
        self.random_state = random_state

    def _fit(self, X, y):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        n = X.shape[0]
        self.trees_ = []
        for child in np.random.SeedSequence(self.random_state).spawn(self.n_trees):
            rng = np.random.default_rng(child)
            rows = rng.integers(0, n, n) if self.bootstrap else np.arange(n)
            tree = RegressionTree(self.mtry, self.min_leaf, int(rng.integers(2**63 - 1)))
            tree.n_features_in_ = X.shape[1]
            tree._fit(X, y, rows)
            self.trees_.append(tree)

    def _predict(self, X):
        total = np.zeros(X.shape[0])
        for tree in self.trees_:
            total += tree._predict(X)
        return total / len(self.trees_)

    def _state(self):
        return {"trees": [t._state() for t in self.trees_]}

    def _load_state(self, state):
        self.trees_ = []
        for ts in state["trees"]:
            tree = RegressionTree(self.mtry, self.min_leaf)
            tree.n_features_in_ = self.n_features_in_
            tree._load_state(ts)
            self.trees_.append(tree)

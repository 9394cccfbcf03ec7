"""Random forest of CART trees, used only as a negative suspect."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import FormatError, InputError


@dataclass(frozen=True, eq=False)
class Tree:
    feature: np.ndarray  # -1 marks a leaf
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    counts: np.ndarray  # (n_nodes, c) bootstrap class counts

    def leaf(self, x) -> int:
        node = 0
        while self.feature[node] >= 0:
            node = self.left[node] if x[self.feature[node]] <= self.threshold[node] else self.right[node]
        return node

    def predict(self, x) -> int:
        return int(np.argmax(self.counts[self.leaf(x)]))

    def to_dict(self):
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "counts": self.counts.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        try:
            return cls(
                np.asarray(d["feature"], dtype=np.int64),
                np.asarray(d["threshold"], dtype=np.float64),
                np.asarray(d["left"], dtype=np.int64),
                np.asarray(d["right"], dtype=np.int64),
                np.asarray(d["counts"], dtype=np.int64),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"malformed tree: {exc}") from None


@dataclass(frozen=True, eq=False)
class Forest:
    trees: tuple
    input_dim: int
    num_classes: int
    seed: int

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def predict(self, x) -> int:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.input_dim,):
            raise InputError(f"expected input of length {self.input_dim}, got shape {x.shape}")
        votes = np.zeros(self.num_classes, dtype=np.int64)
        for tree in self.trees:
            votes[tree.predict(x)] += 1
        return int(np.argmax(votes))


def _best_split(Xf, y, c):
    """Best Gini threshold on one feature column; returns (impurity, threshold) or None."""
    order = np.argsort(Xf, kind="stable")
    xs, ys = Xf[order], y[order]
    n = len(ys)
    onehot = np.zeros((n, c))
    onehot[np.arange(n), ys] = 1.0
    left = np.cumsum(onehot, axis=0)[:-1]
    total = left[-1] + onehot[-1]
    right = total - left
    nl = np.arange(1, n, dtype=np.float64)
    nr = n - nl
    gl = 1.0 - np.sum(left * left, axis=1) / (nl * nl)
    gr = 1.0 - np.sum(right * right, axis=1) / (nr * nr)
    score = (nl * gl + nr * gr) / n
    valid = xs[1:] > xs[:-1]
    if not np.any(valid):
        return None
    score = np.where(valid, score, np.inf)
    pos = int(np.argmin(score))
    thr = (xs[pos] + xs[pos + 1]) / 2.0
    if not thr < xs[pos + 1]:
        thr = xs[pos]
    return float(score[pos]), float(thr)


def _grow(X, y, c, max_features, rng):
    feature, threshold, left, right, counts = [], [], [], [], []

    def new_node(idx):
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        counts.append(np.bincount(y[idx], minlength=c))
        return len(feature) - 1

    root = new_node(np.arange(len(y)))
    stack = [(root, np.arange(len(y)))]
    d = X.shape[1]
    while stack:
        node, idx = stack.pop()
        if np.count_nonzero(counts[node]) <= 1 or len(idx) < 2:
            continue
        best = None
        tried = 0
        for f in rng.permutation(d):
            if tried >= max_features:
                break
            col = X[idx, f]
            if col.min() == col.max():
                continue
            tried += 1
            found = _best_split(col, y[idx], c)
            if found and (best is None or found[0] < best[0]):
                best = (found[0], found[1], int(f))
        if best is None:
            continue
        _, thr, f = best
        mask = X[idx, f] <= thr
        l_idx, r_idx = idx[mask], idx[~mask]
        feature[node], threshold[node] = f, thr
        left[node] = new_node(l_idx)
        right[node] = new_node(r_idx)
        stack.append((right[node], r_idx))
        stack.append((left[node], l_idx))
    return Tree(
        np.array(feature, dtype=np.int64),
        np.array(threshold, dtype=np.float64),
        np.array(left, dtype=np.int64),
        np.array(right, dtype=np.int64),
        np.array(counts, dtype=np.int64),
    )


def train_forest(data, n_trees: int = 20, seed: int = 0) -> Forest:
    """Bootstrap-sampled Gini trees with sqrt(d) candidate features per split."""
    if data is None or len(data) == 0:
        raise InputError("cannot train a forest on empty data")
    if n_trees < 1:
        raise InputError("n_trees must be positive")
    X, y = data.points, data.labels
    n, d = X.shape
    max_features = max(1, int(math.sqrt(d)))
    rng = np.random.default_rng(seed)
    trees = []
    for _ in range(n_trees):
        boot = rng.integers(0, n, size=n)
        trees.append(_grow(X[boot], y[boot], data.num_classes, max_features, rng))
    return Forest(tuple(trees), d, data.num_classes, int(seed))


def forest_predict(forest: Forest, x) -> int:
    return forest.predict(x)


def forest_accuracy(forest: Forest, data) -> float:
    pred = np.array([forest.predict(x) for x in data.points])
    return float(np.mean(pred == data.labels))

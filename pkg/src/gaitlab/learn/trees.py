"""Binary decision trees stored as flat arrays, a Gini random forest and
second-order (Newton) boosting on the logistic loss."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from ..errors import InputError

LEAF = -1


@dataclass
class Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf value reached by every row of X."""
        X = np.asarray(X, dtype=float)
        node = np.zeros(len(X), dtype=np.int64)
        active = self.feature[node] != LEAF
        while active.any():
            rows = np.flatnonzero(active)
            cur = node[rows]
            go_left = X[rows, self.feature[cur]] <= self.threshold[cur]
            node[rows] = np.where(go_left, self.left[cur], self.right[cur])
            active = self.feature[node] != LEAF
        return self.value[node]

    def pack(self) -> np.ndarray:
        return np.column_stack([self.feature, self.threshold, self.left, self.right,
                                self.value]).astype(float)

    @classmethod
    def unpack(cls, arr: np.ndarray) -> "Tree":
        arr = np.asarray(arr, dtype=float).reshape(-1, 5)
        return cls(arr[:, 0].astype(np.int64), arr[:, 1].copy(), arr[:, 2].astype(np.int64),
                   arr[:, 3].astype(np.int64), arr[:, 4].copy())

    def same_as(self, other: "Tree") -> bool:
        return np.array_equal(self.pack(), other.pack())


class _Gini:
    """Stats per row: (1, y). Leaf value: fraction of positives."""

    @staticmethod
    def leaf(total: np.ndarray, lam: float) -> float:
        return float(total[1] / total[0])

    @staticmethod
    def gain(left: np.ndarray, right: np.ndarray, total: np.ndarray, lam: float) -> np.ndarray:
        def weighted_gini(s):
            n, pos = s[..., 0], s[..., 1]
            p = pos / n
            return n * 2.0 * p * (1.0 - p)

        return weighted_gini(total) - weighted_gini(left) - weighted_gini(right)


class _Newton:
    """Stats per row: (gradient, hessian). Leaf value: -G / (H + lambda)."""

    @staticmethod
    def leaf(total: np.ndarray, lam: float) -> float:
        return float(-total[0] / (total[1] + lam))

    @staticmethod
    def gain(left: np.ndarray, right: np.ndarray, total: np.ndarray, lam: float) -> np.ndarray:
        def score(s):
            return s[..., 0] ** 2 / (s[..., 1] + lam)

        return 0.5 * (score(left) + score(right) - score(total))


def grow_tree(X: np.ndarray, stats: np.ndarray, criterion, max_depth: int, min_leaf: int,
              max_features: int | None = None, rng: np.random.Generator | None = None,
              lam: float = 0.0) -> Tree:
    """Greedy depth-first growth; a node splits only on a strictly positive gain."""
    n, d = X.shape
    feature, threshold, left, right, value = [], [], [], [], []

    def new_node() -> int:
        feature.append(LEAF)
        threshold.append(0.0)
        left.append(LEAF)
        right.append(LEAF)
        value.append(0.0)
        return len(feature) - 1

    root = new_node()
    stack = [(root, np.arange(n), 0)]
    while stack:
        node, idx, depth = stack.pop()
        total = stats[idx].sum(axis=0)
        value[node] = criterion.leaf(total, lam)
        if depth >= max_depth or len(idx) < 2 * min_leaf:
            continue
        if max_features is not None and max_features < d:
            candidates = rng.choice(d, size=max_features, replace=False)
        else:
            candidates = np.arange(d)
        best = (0.0, -1, 0.0, None)
        for f in candidates:
            xs = X[idx, f]
            order = np.argsort(xs, kind="stable")
            xs = xs[order]
            cum = np.cumsum(stats[idx][order], axis=0)
            # split after position i (left gets rows 0..i)
            pos = np.arange(min_leaf - 1, len(idx) - min_leaf)
            pos = pos[xs[pos] < xs[pos + 1]]
            if len(pos) == 0:
                continue
            gains = criterion.gain(cum[pos], total - cum[pos], total, lam)
            j = int(np.argmax(gains))
            if gains[j] > best[0] + 1e-12:
                thr = 0.5 * (xs[pos[j]] + xs[pos[j] + 1])
                best = (float(gains[j]), int(f), float(thr), None)
        if best[1] < 0:
            continue
        f, thr = best[1], best[2]
        mask = X[idx, f] <= thr
        feature[node], threshold[node] = f, thr
        lnode, rnode = new_node(), new_node()
        left[node], right[node] = lnode, rnode
        stack.append((rnode, idx[~mask], depth + 1))
        stack.append((lnode, idx[mask], depth + 1))
    return Tree(np.array(feature, dtype=np.int64), np.array(threshold), np.array(left, dtype=np.int64),
                np.array(right, dtype=np.int64), np.array(value))


class RandomForest:
    def __init__(self, n_trees: int = 101, max_depth: int = 6, min_leaf: int = 1,
                 features_per_split: int = 0, seed: int = 0):
        if n_trees < 1 or max_depth < 1 or min_leaf < 1 or features_per_split < 0:
            raise InputError("invalid random forest hyperparameters")
        self.n_trees = int(n_trees)
        self.max_depth = int(max_depth)
        self.min_leaf = int(min_leaf)
        self.features_per_split = int(features_per_split)
        self.seed = int(seed)
        self.trees: list[Tree] = []

    def fit(self, X, y) -> "RandomForest":
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        n, d = X.shape
        m = self.features_per_split or int(math.ceil(math.sqrt(d)))
        m = min(m, d)
        rng = np.random.default_rng(self.seed)
        stats = np.column_stack([np.ones(n), y])
        self.trees = []
        for _ in range(self.n_trees):
            boot = rng.integers(0, n, size=n)
            self.trees.append(grow_tree(X[boot], stats[boot], _Gini, self.max_depth,
                                        self.min_leaf, m, rng))
        return self

    def predict_with_score(self, X) -> tuple[np.ndarray, np.ndarray]:
        leaves = np.array([t.apply(X) for t in self.trees])
        votes = (leaves > 0.5) + 0.5 * (leaves == 0.5)
        score = votes.mean(axis=0)
        # an exact half vote falls back to the mean leaf probability
        tie = score == 0.5
        labels = (score > 0.5) | (tie & (leaves.mean(axis=0) > 0.5))
        return labels.astype(np.int64), score

    def state(self) -> dict[str, np.ndarray]:
        return {f"tree{i:04d}": t.pack() for i, t in enumerate(self.trees)}

    def load_state(self, state) -> "RandomForest":
        keys = sorted(k for k in state if k.startswith("tree"))
        self.trees = [Tree.unpack(state[k]) for k in keys]
        return self


def log_loss(y: np.ndarray, margin: np.ndarray) -> float:
    return float(np.mean(np.logaddexp(0.0, margin) - y * margin))


class BoostedTrees:
    """Newton boosting: each round fits a shallow tree to (gradient, hessian)
    of the logistic loss with L2-regularized leaf weights -G/(H+lambda)."""

    def __init__(self, n_rounds: int = 100, max_depth: int = 2, shrinkage: float = 0.3,
                 l2_leaf_lambda: float = 1.0, min_leaf: int = 1):
        if n_rounds < 1 or max_depth < 1 or not 0 < shrinkage <= 1 or l2_leaf_lambda < 0:
            raise InputError("invalid boosting hyperparameters")
        self.n_rounds = int(n_rounds)
        self.max_depth = int(max_depth)
        self.shrinkage = float(shrinkage)
        self.l2_leaf_lambda = float(l2_leaf_lambda)
        self.min_leaf = int(min_leaf)
        self.base_margin = 0.0
        self.trees: list[Tree] = []
        self.loss_history: list[float] = []

    def fit(self, X, y) -> "BoostedTrees":
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        p0 = float(np.clip(y.mean(), 1e-6, 1 - 1e-6))
        self.base_margin = math.log(p0 / (1 - p0))
        margin = np.full(len(y), self.base_margin)
        self.trees = []
        self.loss_history = [log_loss(y, margin)]
        for _ in range(self.n_rounds):
            p = expit(margin)
            stats = np.column_stack([p - y, p * (1 - p)])
            tree = grow_tree(X, stats, _Newton, self.max_depth, self.min_leaf,
                             lam=self.l2_leaf_lambda)
            tree.value = tree.value * self.shrinkage
            self.trees.append(tree)
            margin = margin + tree.apply(X)
            self.loss_history.append(log_loss(y, margin))
        return self

    def margin(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        out = np.full(len(X), self.base_margin)
        for t in self.trees:
            out = out + t.apply(X)
        return out

    def predict_with_score(self, X) -> tuple[np.ndarray, np.ndarray]:
        score = expit(self.margin(X))
        return (score > 0.5).astype(np.int64), score

    def state(self) -> dict[str, np.ndarray]:
        st = {f"tree{i:04d}": t.pack() for i, t in enumerate(self.trees)}
        st["base_margin"] = np.array([self.base_margin])
        return st

    def load_state(self, state) -> "BoostedTrees":
        keys = sorted(k for k in state if k.startswith("tree"))
        self.trees = [Tree.unpack(state[k]) for k in keys]
        self.base_margin = float(np.asarray(state["base_margin"])[0])
        return self

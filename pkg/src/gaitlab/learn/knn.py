"""k-nearest-neighbour classifier (lazy: fitting just stores the data)."""

from __future__ import annotations

import numpy as np

from ..errors import InputError

METRICS = ("euclidean", "manhattan")
WEIGHTINGS = ("uniform", "inverse_distance")


def pairwise_distances(A: np.ndarray, B: np.ndarray, metric: str) -> np.ndarray:
    diff = A[:, None, :] - B[None, :, :]
    if metric == "euclidean":
        return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    if metric == "manhattan":
        return np.abs(diff).sum(axis=2)
    raise InputError(f"unknown metric {metric!r}")


class KnnClassifier:
    def __init__(self, k: int = 5, metric: str = "euclidean", weighting: str = "uniform"):
        if k < 1:
            raise InputError("k must be >= 1")
        if metric not in METRICS:
            raise InputError(f"metric must be one of {METRICS}")
        if weighting not in WEIGHTINGS:
            raise InputError(f"weighting must be one of {WEIGHTINGS}")
        self.k = int(k)
        self.metric = metric
        self.weighting = weighting
        self.X_train: np.ndarray | None = None
        self.y_train: np.ndarray | None = None

    def fit(self, X, y) -> "KnnClassifier":
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=np.int64)
        if self.k > len(X):
            raise InputError(f"k={self.k} exceeds the {len(X)} training rows")
        self.X_train, self.y_train = X.copy(), y.copy()
        return self

    def neighbors(self, X) -> tuple[np.ndarray, np.ndarray]:
        """Indices and distances of the k nearest training rows (ties: lower index first)."""
        dist = pairwise_distances(np.asarray(X, dtype=float), self.X_train, self.metric)
        idx = np.argsort(dist, axis=1, kind="stable")[:, : self.k]
        return idx, np.take_along_axis(dist, idx, axis=1)

    def predict_with_score(self, X) -> tuple[np.ndarray, np.ndarray]:
        idx, dist = self.neighbors(X)
        votes = self.y_train[idx]
        if self.weighting == "uniform":
            w = np.ones_like(dist)
        else:
            exact = dist == 0
            with np.errstate(divide="ignore"):
                w = np.where(exact.any(axis=1, keepdims=True), exact.astype(float), 1.0 / dist)
        s1 = (w * votes).sum(axis=1)
        s0 = (w * (1 - votes)).sum(axis=1)
        labels = np.where(s1 > s0, 1, np.where(s0 > s1, 0, votes[:, 0]))
        return labels.astype(np.int64), s1 / (s1 + s0)

    def state(self) -> dict[str, np.ndarray]:
        return {"X_train": self.X_train, "y_train": self.y_train.astype(float)}

    def load_state(self, state: dict[str, np.ndarray]) -> "KnnClassifier":
        self.X_train = np.asarray(state["X_train"], dtype=float)
        self.y_train = np.asarray(state["y_train"]).astype(np.int64)
        return self

"""Logistic regression (batch gradient descent) and a Pegasos-style linear SVM."""

from __future__ import annotations

import numpy as np
from scipy.special import expit

from ..errors import InputError


def logistic_loss_grad(w: np.ndarray, b: float, X: np.ndarray, y: np.ndarray,
                       l2: float) -> tuple[float, np.ndarray, float]:
    """Mean log-loss plus ``l2/2 * |w|^2``, with its gradient in w and b."""
    z = X @ w + b
    loss = float(np.mean(np.logaddexp(0.0, z) - y * z) + 0.5 * l2 * np.dot(w, w))
    r = expit(z) - y
    return loss, X.T @ r / len(y) + l2 * w, float(np.mean(r))


class LogisticRegression:
    def __init__(self, learning_rate: float = 0.1, l2_lambda: float = 0.01,
                 max_iters: int = 2000, tol: float = 1e-6):
        if learning_rate <= 0 or max_iters < 1 or tol <= 0 or l2_lambda < 0:
            raise InputError("invalid logistic regression hyperparameters")
        self.learning_rate = learning_rate
        self.l2_lambda = l2_lambda
        self.max_iters = int(max_iters)
        self.tol = tol
        self.w = np.zeros(0)
        self.b = 0.0
        self.loss_history: list[float] = []
        self.n_iter = 0

    def fit(self, X, y) -> "LogisticRegression":
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        w, b = np.zeros(X.shape[1]), 0.0
        self.loss_history = []
        for it in range(self.max_iters):
            loss, gw, gb = logistic_loss_grad(w, b, X, y, self.l2_lambda)
            self.loss_history.append(loss)
            if max(np.max(np.abs(gw), initial=0.0), abs(gb)) < self.tol:
                break
            w = w - self.learning_rate * gw
            b = b - self.learning_rate * gb
        self.n_iter = it + 1
        self.w, self.b = w, b
        return self

    def margin(self, X) -> np.ndarray:
        return np.asarray(X, dtype=float) @ self.w + self.b

    def predict_with_score(self, X) -> tuple[np.ndarray, np.ndarray]:
        score = expit(self.margin(X))
        return (score > 0.5).astype(np.int64), score

    def state(self) -> dict[str, np.ndarray]:
        return {"w": self.w, "b": np.array([self.b])}

    def load_state(self, state) -> "LogisticRegression":
        self.w = np.asarray(state["w"], dtype=float)
        self.b = float(np.asarray(state["b"])[0])
        return self


class LinearSvm:
    """Primal linear SVM: mean hinge loss + |w|^2 / (2C).

    Stochastic subgradient steps of size 1/(lambda t) with lambda = 1/C over
    shuffled epochs. The bias is folded in as a constant feature.
    """

    def __init__(self, C: float = 10.0, epochs: int = 50, seed: int = 0):
        if C <= 0 or epochs < 1:
            raise InputError("invalid SVM hyperparameters")
        self.C = C
        self.epochs = int(epochs)
        self.seed = int(seed)
        self.w = np.zeros(0)
        self.b = 0.0

    def fit(self, X, y) -> "LinearSvm":
        X = np.asarray(X, dtype=float)
        Xa = np.hstack([X, np.ones((len(X), 1))])
        ys = 2.0 * np.asarray(y, dtype=float) - 1.0
        lam = 1.0 / self.C
        rng = np.random.default_rng(self.seed)
        w = np.zeros(Xa.shape[1])
        t = 0
        radius = 1.0 / np.sqrt(lam)
        for _ in range(self.epochs):
            for i in rng.permutation(len(Xa)):
                t += 1
                eta = 1.0 / (lam * t)
                if ys[i] * (Xa[i] @ w) < 1.0:
                    w = (1.0 - eta * lam) * w + eta * ys[i] * Xa[i]
                else:
                    w = (1.0 - eta * lam) * w
                norm = np.linalg.norm(w)
                if norm > radius:
                    w *= radius / norm
        self.w, self.b = w[:-1], float(w[-1])
        return self

    def margin(self, X) -> np.ndarray:
        return np.asarray(X, dtype=float) @ self.w + self.b

    def predict_with_score(self, X) -> tuple[np.ndarray, np.ndarray]:
        m = self.margin(X)
        return (m > 0).astype(np.int64), expit(m)

    def state(self) -> dict[str, np.ndarray]:
        return {"w": self.w, "b": np.array([self.b])}

    def load_state(self, state) -> "LinearSvm":
        self.w = np.asarray(state["w"], dtype=float)
        self.b = float(np.asarray(state["b"])[0])
        return self

"""Multiclass logistic regression used as the upfront unary classifier."""
from __future__ import annotations

import numpy as np


def softmax(scores: np.ndarray) -> np.ndarray:
    shifted = scores - scores.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


class UnaryClassifier:
    """Softmax regression over node features.

    ``weights`` has shape ``(d_u + 1, n_labels)``; the last row is the bias.
    """

    def __init__(self, weights: np.ndarray):
        self.weights = np.asarray(weights, dtype=np.float64)
        if not np.all(np.isfinite(self.weights)):
            raise ValueError("classifier weights must be finite")

    @classmethod
    def zeros(cls, d_u: int, n_labels: int) -> "UnaryClassifier":
        return cls(np.zeros((d_u + 1, n_labels)))

    @property
    def n_labels(self) -> int:
        return self.weights.shape[1]

    @property
    def d_in(self) -> int:
        return self.weights.shape[0] - 1

    def scores(self, X: np.ndarray) -> np.ndarray:
        return X @ self.weights[:-1] + self.weights[-1]

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return softmax(self.scores(X))

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.argmax(self.scores(X), axis=1)

    def cross_entropy(self, X: np.ndarray, y: np.ndarray) -> float:
        s = self.scores(X)
        s = s - s.max(axis=1, keepdims=True)
        logz = np.log(np.exp(s).sum(axis=1))
        return float(np.mean(logz - s[np.arange(len(y)), y]))


def fit_logistic(X: np.ndarray, y: np.ndarray, n_labels: int, epochs: int = 500,
                 rate: float = 0.5, trace: list | None = None) -> UnaryClassifier:
    """Full-batch gradient descent on the mean softmax cross-entropy.

    Weights start at zero, so the fit is deterministic.  When ``trace`` is
    given, the loss before every epoch and after the last one is appended.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.intp)
    if X.shape[0] == 0:
        raise ValueError("cannot train a classifier on an empty dataset")
    clf = UnaryClassifier.zeros(X.shape[1], n_labels)
    Xb = np.hstack([X, np.ones((X.shape[0], 1))])
    onehot = np.zeros((X.shape[0], n_labels))
    onehot[np.arange(X.shape[0]), y] = 1.0
    for _ in range(epochs):
        if trace is not None:
            trace.append(clf.cross_entropy(X, y))
        p = softmax(Xb @ clf.weights)
        clf.weights -= rate * (Xb.T @ (p - onehot)) / X.shape[0]
    if trace is not None:
        trace.append(clf.cross_entropy(X, y))
    return clf

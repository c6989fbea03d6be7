"""Second-order loss derivatives and training metrics' raw ingredients."""

from __future__ import annotations

import numpy as np


def sigmoid(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def logloss_grad_hess(y: np.ndarray, margin: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Gradient/hessian of logistic loss wrt the raw margin: g = p - y, h = p(1-p)."""
    p = sigmoid(margin)
    y = np.asarray(y, dtype=np.float64)
    return p - y, p * (1.0 - p)


def logloss_value(y: np.ndarray, margin: np.ndarray) -> float:
    y = np.asarray(y, dtype=np.float64)
    z = np.where(y > 0.5, margin, -margin)
    return float(np.mean(np.logaddexp(0.0, -z)))


def softmax(scores: np.ndarray) -> np.ndarray:
    scores = np.asarray(scores, dtype=np.float64)
    shifted = scores - scores.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def softmax_grad_hess(Y: np.ndarray, scores: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-class gradient/hessian of cross-entropy with softmax.

    ``Y`` is one-hot; only the diagonal of the hessian is kept,
    h_c = p_c (1 - p_c).
    """
    P = softmax(scores)
    Y = np.asarray(Y, dtype=np.float64)
    return P - Y, P * (1.0 - P)


def softmax_xent_value(Y: np.ndarray, scores: np.ndarray) -> float:
    P = softmax(scores)
    eps = 1e-15
    return float(-np.mean(np.sum(Y * np.log(np.clip(P, eps, 1.0)), axis=1)))


def one_hot(labels: np.ndarray, n_classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    out = np.zeros((labels.shape[0], n_classes), dtype=np.float64)
    out[np.arange(labels.shape[0]), labels] = 1.0
    return out

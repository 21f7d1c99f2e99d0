"""Logistic regression trained by full-batch gradient descent."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class LinearParams:
    """Weight vector plus bias; shared shape for LR and linear SVM."""

    w: np.ndarray
    b: float


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def loss_and_grad(w: np.ndarray, b: float, Xn: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray, float]:
    """Mean logistic loss and its exact gradient."""
    z = Xn @ w + b
    loss = float(np.mean(np.logaddexp(0.0, z) - y * z))
    p = _sigmoid(z)
    r = (p - y) / len(y)
    return loss, Xn.T @ r, float(np.sum(r))


def fit(
    Xn: np.ndarray,
    y: np.ndarray,
    learning_rate: float = 0.1,
    epochs: int = 500,
) -> tuple[LinearParams, list[float], str | None]:
    """Minimize mean logistic loss; returns the best iterate if loss ever rises."""
    y = y.astype(np.float64)
    w = np.zeros(Xn.shape[1])
    b = 0.0
    history: list[float] = []
    best = (np.inf, w.copy(), b)
    for _ in range(epochs):
        loss, gw, gb = loss_and_grad(w, b, Xn, y)
        history.append(loss)
        if loss < best[0]:
            best = (loss, w.copy(), b)
        w -= learning_rate * gw
        b -= learning_rate * gb
    final, *_ = loss_and_grad(w, b, Xn, y)
    history.append(final)
    warning = None
    if final > history[0] * (1.0 + 1e-12):
        warning = "training loss did not improve; returning best iterate"
        _, w, b = best
    return LinearParams(w=w, b=b), history, warning


def logits(params: LinearParams, Xn: np.ndarray) -> np.ndarray:
    return Xn @ params.w + params.b

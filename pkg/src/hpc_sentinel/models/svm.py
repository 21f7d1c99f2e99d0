"""Linear SVM trained by subgradient descent on the regularized hinge loss."""

from __future__ import annotations

import numpy as np

from .logreg import LinearParams


def loss(w: np.ndarray, b: float, Xn: np.ndarray, ypm: np.ndarray, ridge: float) -> float:
    margins = ypm * (Xn @ w + b)
    return float(np.mean(np.maximum(0.0, 1.0 - margins)) + ridge * w @ w)


def fit(
    Xn: np.ndarray,
    y: np.ndarray,
    learning_rate: float = 0.1,
    epochs: int = 500,
    ridge: float = 1e-3,
) -> tuple[LinearParams, list[float], str | None]:
    """Full-batch subgradient descent with a 1/(1+0.02t) step decay."""
    ypm = np.where(y > 0, 1.0, -1.0)
    n = len(ypm)
    w = np.zeros(Xn.shape[1])
    b = 0.0
    history: list[float] = []
    best = (np.inf, w.copy(), b)
    for epoch in range(epochs):
        cur = loss(w, b, Xn, ypm, ridge)
        history.append(cur)
        if cur < best[0]:
            best = (cur, w.copy(), b)
        active = ypm * (Xn @ w + b) < 1.0
        gw = 2.0 * ridge * w - (Xn[active].T @ ypm[active]) / n
        gb = -float(np.sum(ypm[active])) / n
        step = learning_rate / (1.0 + 0.02 * epoch)
        w -= step * gw
        b -= step * gb
    final = loss(w, b, Xn, ypm, ridge)
    history.append(final)
    warning = None
    if final > history[0] * (1.0 + 1e-12):
        warning = "training loss did not improve; returning best iterate"
        _, w, b = best
    return LinearParams(w=w, b=b), history, warning


def logits(params: LinearParams, Xn: np.ndarray) -> np.ndarray:
    # Fixed logistic squashing of the margin; only ordering and sign are contractual.
    return Xn @ params.w + params.b

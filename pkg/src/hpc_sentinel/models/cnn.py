"""Small 1-D convolutional classifier over stacks of consecutive windows.

Architecture: conv over the time axis (C filters, kernel length 3, valid
padding), ReLU, global average pool over time, dense layer to one logit.
Because pooling averages over whatever time length remains, the network
emits a single logit for any stack of at least `kernel` windows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .logreg import _sigmoid


@dataclass
class CnnParams:
    stack_windows: int  # W used to assemble training stacks
    kernel: np.ndarray  # (C, k, d)
    kernel_bias: np.ndarray  # (C,)
    dense: np.ndarray  # (C,)
    dense_bias: float


def _im2col(X: np.ndarray, k: int) -> np.ndarray:
    """(B, W, d) -> (B, T, k*d) patches with T = W - k + 1."""
    B, W, d = X.shape
    T = W - k + 1
    cols = np.empty((B, T, k * d), dtype=np.float64)
    for t in range(T):
        cols[:, t, :] = X[:, t : t + k, :].reshape(B, k * d)
    return cols


def _forward(params: CnnParams, X: np.ndarray) -> tuple[np.ndarray, dict]:
    C, k, d = params.kernel.shape
    cols = _im2col(X, k)
    A = cols @ params.kernel.reshape(C, k * d).T + params.kernel_bias
    H = np.maximum(A, 0.0)
    G = H.mean(axis=1)
    z = G @ params.dense + params.dense_bias
    return z, {"cols": cols, "A": A, "G": G}


def logits(params: CnnParams, X: np.ndarray) -> np.ndarray:
    """Logits for a batch of stacks (B, W, d); W may differ from training."""
    if X.shape[1] < params.kernel.shape[1]:
        raise ValueError(f"stack needs at least {params.kernel.shape[1]} windows, got {X.shape[1]}")
    z, _ = _forward(params, X)
    return z


def loss_and_grad(params: CnnParams, X: np.ndarray, y: np.ndarray) -> tuple[float, dict[str, np.ndarray]]:
    """Mean binary cross-entropy over the batch and exact parameter gradients."""
    C, k, d = params.kernel.shape
    z, cache = _forward(params, X)
    loss = float(np.mean(np.logaddexp(0.0, z) - y * z))

    dz = (_sigmoid(z) - y) / len(y)

    G, A, cols = cache["G"], cache["A"], cache["cols"]
    T = A.shape[1]
    d_dense = G.T @ dz
    d_dense_bias = float(np.sum(dz))
    dH = np.einsum("b,c->bc", dz, params.dense)[:, None, :] / T
    dA = dH * (A > 0.0)
    d_kernel = np.einsum("btc,btj->cj", dA, cols).reshape(C, k, d)
    d_kernel_bias = dA.sum(axis=(0, 1))
    return loss, {
        "kernel": d_kernel,
        "kernel_bias": d_kernel_bias,
        "dense": d_dense,
        "dense_bias": np.array(d_dense_bias),
    }


def full_loss(params: CnnParams, X: np.ndarray, y: np.ndarray) -> float:
    z, _ = _forward(params, X)
    return float(np.mean(np.logaddexp(0.0, z) - y * z))


def fit(
    X: np.ndarray,
    y: np.ndarray,
    stack_windows: int,
    filters: int = 16,
    kernel: int = 3,
    learning_rate: float = 0.01,
    epochs: int = 50,
    batch_size: int = 32,
    seed: int = 0,
) -> tuple[CnnParams, list[float], str | None]:
    """Mini-batch SGD on normalized stacks (n, W, d)."""
    n, W, d = X.shape
    y = y.astype(np.float64)
    rng = np.random.default_rng(seed)
    params = CnnParams(
        stack_windows=stack_windows,
        kernel=rng.normal(0.0, np.sqrt(2.0 / (kernel * d)), size=(filters, kernel, d)),
        kernel_bias=np.zeros(filters),
        dense=rng.normal(0.0, np.sqrt(1.0 / filters), size=filters),
        dense_bias=0.0,
    )
    history = [full_loss(params, X, y)]
    best_loss = history[0]
    best = _copy(params)
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            batch = order[start : start + batch_size]
            _, grads = loss_and_grad(params, X[batch], y[batch])
            params.kernel -= learning_rate * grads["kernel"]
            params.kernel_bias -= learning_rate * grads["kernel_bias"]
            params.dense -= learning_rate * grads["dense"]
            params.dense_bias -= learning_rate * float(grads["dense_bias"])
        epoch_loss = full_loss(params, X, y)
        history.append(epoch_loss)
        if epoch_loss < best_loss:
            best_loss = epoch_loss
            best = _copy(params)
    warning = None
    if history[-1] > history[0] * (1.0 + 1e-12):
        warning = "training loss did not improve; returning best iterate"
        params = best
    return params, history, warning


def _copy(p: CnnParams) -> CnnParams:
    return CnnParams(
        stack_windows=p.stack_windows,
        kernel=p.kernel.copy(),
        kernel_bias=p.kernel_bias.copy(),
        dense=p.dense.copy(),
        dense_bias=p.dense_bias,
    )

"""Linear discriminant analysis, solved in closed form."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np


@dataclass
class LdaParams:
    """Class means, regularized pooled covariance, priors, and the derived hyperplane."""

    means: np.ndarray  # (2, d); row 0 benign, row 1 malicious
    covariance: np.ndarray  # (d, d), symmetric positive definite after regularization
    priors: np.ndarray  # (2,)
    w: np.ndarray  # covariance^-1 (mu1 - mu0)
    b: float


# Unconditional ridge on the pooled covariance, relative to its scale.
COV_RIDGE = 1e-6


def fit(Xn: np.ndarray, y: np.ndarray) -> tuple[LdaParams, str | None]:
    """Closed-form fit on normalized windows; auto-regularizes singular covariance."""
    d = Xn.shape[1]
    warning = None
    means = np.vstack([Xn[y == 0].mean(axis=0), Xn[y == 1].mean(axis=0)])
    n = len(y)
    pooled = np.zeros((d, d))
    for cls in (0, 1):
        centered = Xn[y == cls] - means[cls]
        pooled += centered.T @ centered
    pooled /= max(n - 2, 1)
    pooled = (pooled + pooled.T) / 2.0

    ridge = COV_RIDGE * np.trace(pooled) / d
    cov = pooled + ridge * np.eye(d)
    diff = means[1] - means[0]
    while True:
        try:
            w = np.linalg.solve(cov, diff)
            break
        except np.linalg.LinAlgError:
            ridge = max(ridge * 10.0, 1e-12)
            warning = f"singular pooled covariance; ridge raised to {ridge:.2e}"
            warnings.warn(warning, stacklevel=2)
            cov = pooled + ridge * np.eye(d)

    priors = np.array([np.mean(y == 0), np.mean(y == 1)])
    # Posterior log-odds of the malicious class under the shared-covariance model.
    b = float(-0.5 * (means[0] + means[1]) @ w + np.log(priors[1] / priors[0]))
    return LdaParams(means=means, covariance=cov, priors=priors, w=w, b=b), warning


def logits(params: LdaParams, Xn: np.ndarray) -> np.ndarray:
    return Xn @ params.w + params.b

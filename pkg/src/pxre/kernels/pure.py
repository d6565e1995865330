"""Pure-numpy kernel implementations (fallback for the compiled extension).

All functions take float64 arrays shaped (rows, width) and are the reference
semantics the compiled kernels must match.
"""

from __future__ import annotations

import numpy as np


def softmax2d(x: np.ndarray) -> np.ndarray:
    m = x.max(axis=1, keepdims=True)
    e = np.exp(x - m)
    return e / e.sum(axis=1, keepdims=True)


def softmax2d_backward(y: np.ndarray, dy: np.ndarray) -> np.ndarray:
    return y * (dy - (dy * y).sum(axis=1, keepdims=True))


def layernorm2d(x: np.ndarray, gamma: np.ndarray, beta: np.ndarray, eps: float):
    mu = x.mean(axis=1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv_std
    return xhat * gamma + beta, xhat, inv_std.ravel()


def layernorm2d_backward(
    dy: np.ndarray, xhat: np.ndarray, inv_std: np.ndarray, gamma: np.ndarray
):
    dyg = dy * gamma
    m1 = dyg.mean(axis=1, keepdims=True)
    m2 = (dyg * xhat).mean(axis=1, keepdims=True)
    dx = (dyg - m1 - xhat * m2) * inv_std[:, None]
    dgamma = (dy * xhat).sum(axis=0)
    dbeta = dy.sum(axis=0)
    return dx, dgamma, dbeta


def nll2d(logits: np.ndarray, targets: np.ndarray):
    """Per-row negative log-likelihood and its gradient (softmax - onehot)."""
    rows = np.arange(logits.shape[0])
    m = logits.max(axis=1, keepdims=True)
    z = logits - m
    e = np.exp(z)
    s = e.sum(axis=1, keepdims=True)
    nll = np.log(s).ravel() - z[rows, targets]
    dlogits = e / s
    dlogits[rows, targets] -= 1.0
    return nll, dlogits

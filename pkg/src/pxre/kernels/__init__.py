"""Numeric kernels with a compiled fast path.

At import time the Cython extension is preferred when it built; set
``PXRE_PURE_PYTHON=1`` to force the numpy fallback. ``BACKEND`` records the
choice. The public functions accept arrays of any leading shape and apply the
kernel over the last axis.
"""

from __future__ import annotations

import os

import numpy as np

from . import pure as _pure

BACKEND = "pure"
_impl = _pure

if os.environ.get("PXRE_PURE_PYTHON", "").lower() not in ("1", "true", "yes"):
    try:
        from . import _fast as _impl  # type: ignore[no-redef]

        BACKEND = "compiled"
    except ImportError:
        pass


def _rows(x: np.ndarray) -> np.ndarray:
    x = np.ascontiguousarray(x, dtype=np.float64)
    return x.reshape(-1, x.shape[-1])


def softmax(x: np.ndarray) -> np.ndarray:
    """Softmax over the last axis."""
    return np.asarray(_impl.softmax2d(_rows(x))).reshape(x.shape)


def softmax_backward(y: np.ndarray, dy: np.ndarray) -> np.ndarray:
    """Gradient through softmax, given its output `y` and upstream `dy`."""
    out = _impl.softmax2d_backward(_rows(y), _rows(dy))
    return np.asarray(out).reshape(y.shape)


def layer_norm(x: np.ndarray, gamma: np.ndarray, beta: np.ndarray, eps: float = 1e-5):
    """LayerNorm over the last axis; returns (y, cache) for the backward pass."""
    x2 = _rows(x)
    y, xhat, inv_std = _impl.layernorm2d(
        x2,
        np.ascontiguousarray(gamma, dtype=np.float64),
        np.ascontiguousarray(beta, dtype=np.float64),
        eps,
    )
    return np.asarray(y).reshape(x.shape), (np.asarray(xhat), np.asarray(inv_std), x.shape)


def layer_norm_backward(dy: np.ndarray, cache, gamma: np.ndarray):
    xhat, inv_std, shape = cache
    dx, dgamma, dbeta = _impl.layernorm2d_backward(
        _rows(dy), xhat, inv_std, np.ascontiguousarray(gamma, dtype=np.float64)
    )
    return np.asarray(dx).reshape(shape), np.asarray(dgamma), np.asarray(dbeta)


def nll_and_grad(logits: np.ndarray, targets: np.ndarray):
    """Per-row NLL of `targets` under softmax(logits), plus d(loss)/d(logits).

    `logits` is (rows, width); the gradient rows are of the *sum* of the
    per-row NLLs (softmax minus one-hot).
    """
    nll, dlogits = _impl.nll2d(
        _rows(logits), np.ascontiguousarray(targets, dtype=np.int64).ravel()
    )
    return np.asarray(nll), np.asarray(dlogits).reshape(logits.shape)

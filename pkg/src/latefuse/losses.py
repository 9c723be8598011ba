"""Batch-wise ranking objectives over a B x B query-document similarity matrix.

Both losses are symmetric: the matrix and its transpose are scored against the
identity target and averaged, so query->document and document->query
directions are optimized equally. All arithmetic is 64-bit; the sigmoid BCE is
evaluated in log-sum form (log sigmoid(x) = -softplus(-x)) so large logits
never hit log(0).
"""

from __future__ import annotations

import numpy as np


def softplus(x):
    x = np.asarray(x, dtype=np.float64)
    return np.logaddexp(0.0, x)


def _check_square_finite(S) -> np.ndarray:
    S = np.asarray(S, dtype=np.float64)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ValueError(f"similarity matrix must be square, got {S.shape}")
    if not np.isfinite(S).all():
        raise ValueError("similarity matrix contains non-finite values")
    return S


def _bce_weights(B: int, pos_weight: float) -> np.ndarray:
    if pos_weight <= 0:
        raise ValueError("pos_weight must be positive")
    W = np.ones((B, B))
    np.fill_diagonal(W, pos_weight)
    return W


def _bce_one_sided(S, scale, bias, W):
    """Weighted mean BCE of sigmoid(scale*S + bias) against the identity."""
    B = S.shape[0]
    X = scale * S + bias
    T = np.eye(B)
    elem = softplus(X) - T * X           # -[t log s + (1-t) log(1-s)], s = sigmoid(X)
    return float((W * elem).sum() / W.sum())


def bce_loss(S, scale: float = 1.0, bias: float = 0.0, pos_weight: float = 1.0) -> float:
    """Symmetric batch-wise BCE, averaged over all B^2 elements (weighted mean).

    Diagonal (positive) elements carry pos_weight; the weighted sum is divided
    by the total weight, so pos_weight=1 reduces to the plain mean.
    """
    S = _check_square_finite(S)
    W = _bce_weights(S.shape[0], pos_weight)
    return 0.5 * (_bce_one_sided(S, scale, bias, W)
                  + _bce_one_sided(S.T, scale, bias, W))


def bce_grad(S, scale: float = 1.0, bias: float = 0.0, pos_weight: float = 1.0):
    """Gradients of bce_loss w.r.t. (S, scale, bias)."""
    S = _check_square_finite(S)
    B = S.shape[0]
    W = _bce_weights(B, pos_weight)
    T = np.eye(B)
    total = W.sum()

    def one_sided(M):
        X = scale * M + bias
        G = W * (1.0 / (1.0 + np.exp(-X)) - T) / total   # dL/dX
        return G

    G1 = one_sided(S)
    G2 = one_sided(S.T)
    dS = 0.5 * scale * (G1 + G2.T)
    dscale = 0.5 * (float((G1 * S).sum()) + float((G2 * S.T).sum()))
    dbias = 0.5 * (float(G1.sum()) + float(G2.sum()))
    return dS, dscale, dbias


def infonce_loss(S, temperature: float = 1.0) -> float:
    """Symmetric softmax cross-entropy with in-batch negatives.

    B=1 degenerates to 0 (softmax over a single logit).
    """
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    S = _check_square_finite(S)
    L = S / temperature

    def ce_rows(M):
        mx = M.max(axis=1, keepdims=True)
        lse = mx[:, 0] + np.log(np.exp(M - mx).sum(axis=1))
        return float(np.mean(lse - np.diag(M)))

    return 0.5 * (ce_rows(L) + ce_rows(L.T))


def infonce_grad(S, temperature: float = 1.0) -> np.ndarray:
    """Gradient of infonce_loss w.r.t. S."""
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    S = _check_square_finite(S)
    B = S.shape[0]
    L = S / temperature
    T = np.eye(B)

    def grad_rows(M):
        mx = M.max(axis=1, keepdims=True)
        E = np.exp(M - mx)
        P = E / E.sum(axis=1, keepdims=True)
        return (P - T) / B

    G1 = grad_rows(L)
    G2 = grad_rows(L.T)
    return 0.5 * (G1 + G2.T) / temperature

"""Pure-numpy fallback kernels.

Same update semantics and visiting order as the compiled versions in
_kernels.pyx; only floating-point reduction order may differ (BLAS vs
sequential C), so cross-backend results agree to rounding, not bit-for-bit.
Within one backend results are bit-for-bit reproducible.
"""

from __future__ import annotations

import numpy as np


def _softplus(x: float) -> float:
    # -log sigmoid(-x), overflow-safe
    if x > 0.0:
        return x + np.log1p(np.exp(-x))
    return np.log1p(np.exp(x))


def sgns_epoch(
    vec_in: np.ndarray,
    vec_out: np.ndarray,
    centers: np.ndarray,
    contexts: np.ndarray,
    negatives: np.ndarray,
    lr: float,
) -> float:
    """One skip-gram negative-sampling epoch; mutates vec_in/vec_out in place.

    negatives[p] must be distinct indices, none equal to contexts[p]
    (guaranteed by the sampler). Returns the summed epoch loss.
    """
    total = 0.0
    n_neg = negatives.shape[1]
    labels = np.zeros(1 + n_neg)
    labels[0] = 1.0
    for p in range(centers.shape[0]):
        c = int(centers[p])
        v = vec_in[c]
        targets = np.empty(1 + n_neg, dtype=np.int64)
        targets[0] = contexts[p]
        targets[1:] = negatives[p]
        rows = vec_out[targets]
        f = rows @ v
        sig = 1.0 / (1.0 + np.exp(-f))
        total += _softplus(-float(f[0]))
        for k in range(n_neg):
            total += _softplus(float(f[1 + k]))
        g = (labels - sig) * lr
        vec_out[targets] += np.outer(g, v)
        vec_in[c] += g @ rows
    return float(total)


def pegasos_train(
    X: np.ndarray,
    y: np.ndarray,
    order: np.ndarray,
    lam: float,
    n_epochs: int,
    w: np.ndarray,
    losses: np.ndarray,
) -> None:
    """Pegasos SGD on hinge loss with per-step projection.

    X already carries the bias column; w/losses are mutated in place. One
    presampled index per step; objective recorded after each epoch.
    """
    n = X.shape[0]
    radius = 1.0 / np.sqrt(lam)
    t = 0
    for epoch in range(n_epochs):
        for _ in range(n):
            t += 1
            i = int(order[t - 1])
            eta = 1.0 / (lam * t)
            margin = float(y[i] * (X[i] @ w))
            w *= 1.0 - 1.0 / t
            if margin < 1.0:
                w += (eta * y[i]) * X[i]
            norm = float(np.sqrt(w @ w))
            if norm > radius:
                w *= radius / norm
        hinge = np.maximum(0.0, 1.0 - y * (X @ w))
        losses[epoch] = 0.5 * lam * float(w @ w) + float(hinge.sum()) / n

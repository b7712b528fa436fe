"""Pure-numpy Q-network kernels (fallback backend).

Shapes: X (B, D); W1 (D, H1); W2 (H1, H2); W3 (H2, N).  All float64,
C-contiguous.  Semantics must match adaptq._qnet_core exactly up to
floating-point summation order.
"""

from __future__ import annotations

import numpy as np

NAME = "numpy"


def forward(X, W1, b1, W2, b2, W3, b3):
    """Batched forward pass; returns post-ReLU activations and q-values."""
    H1 = np.maximum(X @ W1 + b1, 0.0)
    H2 = np.maximum(H1 @ W2 + b2, 0.0)
    Q = H2 @ W3 + b3
    return H1, H2, Q


def train_grads(X, actions, targets, W1, b1, W2, b2, W3, b3, delta):
    """Mean Huber loss on Q(s, a) vs targets, plus parameter gradients."""
    B = X.shape[0]
    H1, H2, Q = forward(X, W1, b1, W2, b2, W3, b3)
    rows = np.arange(B)
    x = Q[rows, actions] - targets
    ax = np.abs(x)
    quad = ax <= delta
    loss = float(np.mean(np.where(quad, 0.5 * x * x, delta * (ax - 0.5 * delta))))

    dQ = np.zeros_like(Q)
    dQ[rows, actions] = np.clip(x, -delta, delta) / B
    gW3 = H2.T @ dQ
    gb3 = dQ.sum(axis=0)
    dH2 = (dQ @ W3.T) * (H2 > 0.0)
    gW2 = H1.T @ dH2
    gb2 = dH2.sum(axis=0)
    dH1 = (dH2 @ W2.T) * (H1 > 0.0)
    gW1 = X.T @ dH1
    gb1 = dH1.sum(axis=0)
    return loss, gW1, gb1, gW2, gb2, gW3, gb3

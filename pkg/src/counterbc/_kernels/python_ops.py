"""Numpy implementation of the dense-network kernels.

This is the fallback backend used when the compiled extension is not
available (see ``counterbc._kernels``). Both backends expose the same three
functions and must agree numerically; the cache returned by
``forward_cached`` is opaque and only valid for the backend that produced it.
"""

from __future__ import annotations

import numpy as np


def forward_cached(weights, biases, x):
    """Batched forward pass through ReLU hidden layers and a linear output.

    ``x`` has shape (batch, in_width). Returns ``(y, acts, masks)`` where
    ``acts[i]`` is the input seen by layer ``i`` and ``masks[i]`` is the
    ReLU mask of hidden layer ``i`` (strictly positive pre-activations; the
    subgradient at exactly 0 is 0).
    """
    n_layers = len(weights)
    a = np.ascontiguousarray(x, dtype=np.float64)
    acts = [a]
    masks = []
    for i in range(n_layers):
        z = a @ weights[i].T + biases[i]
        if i < n_layers - 1:
            mask = z > 0.0
            a = np.where(mask, z, 0.0)
            masks.append(mask)
            acts.append(a)
        else:
            return z, acts, masks
    raise AssertionError("network with zero layers")


def backward_from_cache(weights, acts, masks, gout):
    """Reverse-mode pass from output gradients to per-parameter gradients.

    ``gout`` has shape (batch, out_width) and holds d(loss)/d(output) summed
    over whatever reduction the caller applied. Returns ``(gws, gbs)`` shaped
    like the weight and bias lists.
    """
    n_layers = len(weights)
    gz = np.ascontiguousarray(gout, dtype=np.float64)
    gws = [None] * n_layers
    gbs = [None] * n_layers
    for i in reversed(range(n_layers)):
        gws[i] = gz.T @ acts[i]
        gbs[i] = gz.sum(axis=0)
        if i > 0:
            gz = (gz @ weights[i]) * masks[i - 1]
    return gws, gbs


def adam_update(p, g, m, v, t, alpha, beta1, beta2, eps):
    """One bias-corrected Adam update on a flat parameter array.

    ``t`` is the already-incremented step count (first call passes 1).
    Returns new ``(p, m, v)`` arrays; inputs are not mutated.
    """
    m2 = beta1 * m + (1.0 - beta1) * g
    v2 = beta2 * v + (1.0 - beta2) * (g * g)
    m_hat = m2 / (1.0 - beta1**t)
    v_hat = v2 / (1.0 - beta2**t)
    p2 = p - alpha * m_hat / (np.sqrt(v_hat) + eps)
    return p2, m2, v2

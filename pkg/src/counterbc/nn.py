"""Minimal dense feed-forward networks with hand-derived gradients and Adam.

Everything is a plain value: networks, gradients, and optimizer states are
immutable-by-convention bundles of float64 numpy arrays, and every update
returns fresh objects. ReLU is applied to all hidden layers, the output layer
is linear, and the ReLU subgradient at exactly 0 is defined as 0. The batched
forward/backward/Adam kernels live in ``counterbc._kernels`` (compiled
extension with a numpy fallback).

Serialized layout (see docs/formats.md): a JSON document with
``format_version``, ``widths``, and per-layer row-major weight matrices of
shape (out_width, in_width) plus bias vectors. Floats are written with
Python's shortest round-trip repr, so reloads are bit-exact.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from counterbc._kernels import ops

NETWORK_FORMAT_VERSION = 1

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


class DimensionError(ValueError):
    """An input, gradient, or parameter block has the wrong shape."""


@dataclass
class DenseNetwork:
    """Fully connected network: widths[0] inputs -> widths[-1] outputs."""

    widths: tuple[int, ...]
    weights: list[np.ndarray]  # weights[i] has shape (widths[i+1], widths[i])
    biases: list[np.ndarray]  # biases[i] has shape (widths[i+1],)

    def __post_init__(self):
        if len(self.widths) < 2:
            raise DimensionError("need at least an input and an output width")
        if any(w < 1 for w in self.widths):
            raise DimensionError(f"layer widths must be positive: {self.widths}")
        expected = list(zip(self.widths[1:], self.widths[:-1]))
        got = [tuple(w.shape) for w in self.weights]
        if got != expected:
            raise DimensionError(f"weight shapes {got} do not match widths {self.widths}")
        for b, (out_w, _) in zip(self.biases, expected):
            if b.shape != (out_w,):
                raise DimensionError(f"bias shape {b.shape} does not match width {out_w}")

    @property
    def in_width(self) -> int:
        return self.widths[0]

    @property
    def out_width(self) -> int:
        return self.widths[-1]

    @property
    def n_params(self) -> int:
        return sum(w.size for w in self.weights) + sum(b.size for b in self.biases)

    def copy(self) -> "DenseNetwork":
        return DenseNetwork(
            self.widths,
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
        )

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Single-vector forward pass."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.in_width,):
            raise DimensionError(f"input shape {x.shape} != ({self.in_width},)")
        y, _, _ = ops.forward_cached(self.weights, self.biases, x[None, :])
        return y[0]

    def forward_batch(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.in_width:
            raise DimensionError(f"batch shape {x.shape} != (n, {self.in_width})")
        y, _, _ = ops.forward_cached(self.weights, self.biases, x)
        return y

    def forward_batch_cached(self, x: np.ndarray):
        """Forward pass returning (output, cache) for a later backward pass.

        The cache is opaque and tied to the active kernel backend.
        """
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.in_width:
            raise DimensionError(f"batch shape {x.shape} != (n, {self.in_width})")
        y, acts, masks = ops.forward_cached(self.weights, self.biases, x)
        return y, (acts, masks)


@dataclass
class Gradients:
    """Per-parameter partials of a scalar loss, shaped like a DenseNetwork."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def check_congruent(self, net: DenseNetwork) -> None:
        ok = len(self.weights) == len(net.weights) and all(
            gw.shape == w.shape for gw, w in zip(self.weights, net.weights)
        ) and all(gb.shape == b.shape for gb, b in zip(self.biases, net.biases))
        if not ok:
            raise DimensionError("gradient shapes do not match the network")

    def scaled(self, factor: float) -> "Gradients":
        return Gradients(
            [factor * gw for gw in self.weights],
            [factor * gb for gb in self.biases],
        )

    def added(self, other: "Gradients") -> "Gradients":
        return Gradients(
            [a + b for a, b in zip(self.weights, other.weights)],
            [a + b for a, b in zip(self.biases, other.biases)],
        )


@dataclass
class AdamState:
    """Adam moment accumulators plus hyperparameters; step starts at 0."""

    m_weights: list[np.ndarray]
    m_biases: list[np.ndarray]
    v_weights: list[np.ndarray]
    v_biases: list[np.ndarray]
    step: int
    alpha: float
    beta1: float = ADAM_BETA1
    beta2: float = ADAM_BETA2
    eps: float = ADAM_EPS

    @classmethod
    def for_network(cls, net: DenseNetwork, alpha: float) -> "AdamState":
        return cls(
            m_weights=[np.zeros_like(w) for w in net.weights],
            m_biases=[np.zeros_like(b) for b in net.biases],
            v_weights=[np.zeros_like(w) for w in net.weights],
            v_biases=[np.zeros_like(b) for b in net.biases],
            step=0,
            alpha=alpha,
        )


def glorot_init(widths, rng: np.random.Generator) -> DenseNetwork:
    """Glorot-uniform weights in +-sqrt(6/(fan_in+fan_out)), zero biases."""
    widths = tuple(int(w) for w in widths)
    weights = []
    biases = []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return DenseNetwork(widths, weights, biases)


def forward(net: DenseNetwork, x: np.ndarray) -> np.ndarray:
    return net.forward(x)


def backward(net: DenseNetwork, x: np.ndarray, output_grad: np.ndarray) -> Gradients:
    """Gradients of (output_grad . output) w.r.t. every parameter.

    Recomputes the forward pass internally; use ``backward_from_cache`` with
    ``forward_batch_cached`` in loops that already ran the forward pass.
    """
    x = np.asarray(x, dtype=np.float64)
    output_grad = np.asarray(output_grad, dtype=np.float64)
    if x.shape != (net.in_width,):
        raise DimensionError(f"input shape {x.shape} != ({net.in_width},)")
    if output_grad.shape != (net.out_width,):
        raise DimensionError(f"output_grad shape {output_grad.shape} != ({net.out_width},)")
    _, cache = net.forward_batch_cached(x[None, :])
    return backward_from_cache(net, cache, output_grad[None, :])


def backward_from_cache(net: DenseNetwork, cache, output_grad: np.ndarray) -> Gradients:
    output_grad = np.asarray(output_grad, dtype=np.float64)
    acts, masks = cache
    if output_grad.ndim != 2 or output_grad.shape[1] != net.out_width:
        raise DimensionError(
            f"output_grad shape {output_grad.shape} != (n, {net.out_width})"
        )
    if output_grad.shape[0] != acts[0].shape[0]:
        raise DimensionError("output_grad batch size does not match the cached forward pass")
    gws, gbs = ops.backward_from_cache(net.weights, acts, masks, output_grad)
    return Gradients(gws, gbs)


def adam_step(net: DenseNetwork, grads: Gradients, state: AdamState):
    """Standard bias-corrected Adam update; returns (new_net, new_state)."""
    grads.check_congruent(net)
    t = state.step + 1
    new_w, new_b = [], []
    new_mw, new_mb, new_vw, new_vb = [], [], [], []
    for w, gw, m, v in zip(net.weights, grads.weights, state.m_weights, state.v_weights):
        p2, m2, v2 = ops.adam_update(
            w.reshape(-1), np.ascontiguousarray(gw, dtype=np.float64).reshape(-1),
            m.reshape(-1), v.reshape(-1),
            t, state.alpha, state.beta1, state.beta2, state.eps,
        )
        new_w.append(np.asarray(p2).reshape(w.shape))
        new_mw.append(np.asarray(m2).reshape(w.shape))
        new_vw.append(np.asarray(v2).reshape(w.shape))
    for b, gb, m, v in zip(net.biases, grads.biases, state.m_biases, state.v_biases):
        p2, m2, v2 = ops.adam_update(
            b, np.ascontiguousarray(gb, dtype=np.float64), m, v,
            t, state.alpha, state.beta1, state.beta2, state.eps,
        )
        new_b.append(np.asarray(p2))
        new_mb.append(np.asarray(m2))
        new_vb.append(np.asarray(v2))
    new_net = DenseNetwork(net.widths, new_w, new_b)
    new_state = AdamState(
        m_weights=new_mw, m_biases=new_mb, v_weights=new_vw, v_biases=new_vb,
        step=t, alpha=state.alpha, beta1=state.beta1, beta2=state.beta2, eps=state.eps,
    )
    return new_net, new_state


def network_to_dict(net: DenseNetwork) -> dict:
    return {
        "format_version": NETWORK_FORMAT_VERSION,
        "widths": list(net.widths),
        "weights": [w.reshape(-1).tolist() for w in net.weights],
        "biases": [b.tolist() for b in net.biases],
    }


def network_from_dict(doc: dict) -> DenseNetwork:
    version = doc.get("format_version")
    if version != NETWORK_FORMAT_VERSION:
        raise ValueError(f"unsupported network format_version: {version!r}")
    widths = tuple(int(w) for w in doc["widths"])
    weights = []
    biases = []
    for i, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:])):
        flat = np.asarray(doc["weights"][i], dtype=np.float64)
        if flat.size != fan_in * fan_out:
            raise ValueError(f"layer {i}: expected {fan_in * fan_out} weights, got {flat.size}")
        weights.append(flat.reshape(fan_out, fan_in))
        b = np.asarray(doc["biases"][i], dtype=np.float64)
        if b.shape != (fan_out,):
            raise ValueError(f"layer {i}: expected {fan_out} biases, got {b.shape}")
        biases.append(b)
    return DenseNetwork(widths, weights, biases)


def save_network(net: DenseNetwork, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(network_to_dict(net), fh)


def load_network(path) -> DenseNetwork:
    with open(path, encoding="utf-8") as fh:
        return network_from_dict(json.load(fh))

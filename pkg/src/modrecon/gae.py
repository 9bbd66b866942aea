"""Two-layer graph autoencoder baseline that reconstructs adjacency.

Encoder ``Z = A_norm relu(A_norm X W0) W1`` with ``X = I`` for featureless
graphs; decoder ``sigmoid(Z Z^T)``; loss is the mean binary cross-entropy
against ``A`` with positive entries weighted by ``(N^2 - 2M) / 2M``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .graph import normalized_adjacency
from .nn import adam_update, init_weights
from .seeding import derive_rng


@dataclass
class GaeModel:
    weights: list
    a_norm: np.ndarray
    loss_trace: list = field(default_factory=list)

    def __post_init__(self):
        if len(self.weights) != 2:
            raise ValueError("the baseline has exactly two layers")
        if self.weights[0].shape[1] != self.weights[1].shape[0]:
            raise ValueError("layer shapes do not chain")


def gae_input(graph):
    """Node features if present, else the identity matrix."""
    return np.eye(graph.n_nodes) if graph.features is None else graph.features


def gae_forward(model, X, return_hidden=False):
    W0 = getattr(model.weights[0], "w", model.weights[0])
    W1 = getattr(model.weights[1], "w", model.weights[1])
    if X.shape[1] != W0.shape[0] or X.shape[0] != model.a_norm.shape[0]:
        raise ValueError(f"input shape {X.shape} incompatible with weights {W0.shape} / {model.a_norm.shape}")
    AX = model.a_norm @ X
    pre = AX @ W0
    H = np.maximum(pre, 0.0)
    AH = model.a_norm @ H
    Z = AH @ W1
    return (Z, (AX, pre, AH)) if return_hidden else Z


def positive_weight(n_nodes, total_edges):
    if total_edges == 0:
        raise ValueError("positive weight undefined without edges")
    return (n_nodes * n_nodes - 2.0 * total_edges) / (2.0 * total_edges)


def _softplus(x):
    return np.logaddexp(0.0, x)


def bce_from_logits(S, A, pos_weight):
    """Mean weighted cross-entropy of ``sigmoid(S)`` against ``A``."""
    per = pos_weight * A * _softplus(-S) + (1.0 - A) * _softplus(S)
    return float(per.mean())


def bce_loss(Z, A, pos_weight):
    return bce_from_logits(Z @ Z.T, A, pos_weight)


def bce_gradient(Z, A, pos_weight):
    """Gradient of :func:`bce_loss` with respect to ``Z``."""
    S = Z @ Z.T
    sig = 0.5 * (1.0 + np.tanh(0.5 * S))
    G = ((1.0 - A) * sig - pos_weight * A * (1.0 - sig)) / A.size
    return (G + G.T) @ Z


def gae_gradients(model, X, A, pos_weight):
    """Loss and ``[dW0, dW1]`` by hand-written backprop."""
    Z, (AX, pre, AH) = gae_forward(model, X, return_hidden=True)
    loss = bce_loss(Z, A, pos_weight)
    dZ = bce_gradient(Z, A, pos_weight)
    W1 = model.weights[1].w
    dW1 = AH.T @ dZ
    d_pre = (model.a_norm @ (dZ @ W1.T)) * (pre > 0)
    dW0 = AX.T @ d_pre
    return loss, [dW0, dW1]


def init_gae(graph, config):
    if len(config.layer_dims) != 2:
        raise ValueError("the baseline needs exactly two layer dims (hidden, output)")
    X = gae_input(graph)
    rng = derive_rng(config.seed, "init")
    h, o = config.layer_dims
    weights = [init_weights(X.shape[1], h, rng), init_weights(h, o, rng)]
    return GaeModel(weights, normalized_adjacency(graph))


def gae_train(graph, config):
    """Full-batch Adam on the weighted cross-entropy; returns ``(model, Z)``."""
    model = init_gae(graph, config)
    X = gae_input(graph)
    A = graph.adjacency.toarray()
    w = positive_weight(graph.n_nodes, graph.total_edges)
    for epoch in range(config.epochs):
        loss, grads = gae_gradients(model, X, A, w)
        if not np.isfinite(loss):
            raise FloatingPointError(f"non-finite loss at epoch {epoch}")
        model.loss_trace.append(loss)
        model.weights = [adam_update(lw, g, config.learning_rate) for lw, g in zip(model.weights, grads)]
    Z = gae_forward(model, X)
    model.loss_trace.append(bce_loss(Z, A, w))
    return model, Z

"""Full-batch GCN encoder trained to reconstruct the modularity matrix."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .graph import modularity_matrix, normalized_adjacency
from .nn import (
    adam_update,
    backprop_through_layers,
    forward_layers,
    init_weights,
    loss_gradient_wrt_embedding,
    reconstruction_loss,
)
from .seeding import derive_rng

logger = logging.getLogger(__name__)

MAX_LAYERS = 5


@dataclass
class OneStageModel:
    weights: list
    config: object
    a_norm: np.ndarray
    input: np.ndarray
    loss_trace: list = field(default_factory=list)

    def __post_init__(self):
        dims = [self.input.shape[1], *self.config.layer_dims]
        for l, lw in enumerate(self.weights):
            if lw.shape != (dims[l], dims[l + 1]):
                raise ValueError(f"layer {l} weight shape {lw.shape}, expected {(dims[l], dims[l + 1])}")

    @property
    def n_parameters(self):
        return int(sum(lw.w.size for lw in self.weights))


def build_input(B, graph):
    """``[B | X]`` when the graph carries features, else ``B``."""
    if graph.features is None:
        return B
    X = graph.features
    if X.shape[0] != B.shape[0]:
        raise ValueError(f"feature rows {X.shape[0]} != {B.shape[0]} nodes")
    return np.hstack([B, X])


def init_model(graph, config, B=None):
    if not 1 <= len(config.layer_dims) <= MAX_LAYERS:
        raise ValueError(f"layer count must be in 1..{MAX_LAYERS}")
    if B is None:
        B = modularity_matrix(graph)
    B0 = build_input(B, graph)
    rng = derive_rng(config.seed, "init")
    dims = [B0.shape[1], *config.layer_dims]
    weights = [init_weights(dims[l], dims[l + 1], rng) for l in range(len(config.layer_dims))]
    return OneStageModel(weights, config, normalized_adjacency(graph), B0)


def embed(model):
    """Forward pass of the stacked layers; returns the final embedding."""
    return forward_layers(model.a_norm, model.input, model.weights)[-1]


def train_onestage(graph, config, B=None):
    """Full-batch Adam descent on the reconstruction loss.

    Returns ``(model, Z)``; the per-epoch loss (evaluated before each update,
    plus the final one) is kept on ``model.loss_trace``.
    """
    if B is None:
        B = modularity_matrix(graph)
    model = init_model(graph, config, B)
    nonlin = config.decoder_nonlinearity
    for epoch in range(config.epochs):
        acts = forward_layers(model.a_norm, model.input, model.weights)
        Z = acts[-1]
        loss = reconstruction_loss(Z, B, nonlin)
        if not np.isfinite(loss):
            raise FloatingPointError(f"non-finite loss at epoch {epoch}")
        model.loss_trace.append(loss)
        up = loss_gradient_wrt_embedding(Z, B, nonlin)
        grads = backprop_through_layers(acts, model.weights, up, model.a_norm)
        model.weights = [adam_update(lw, g, config.learning_rate) for lw, g in zip(model.weights, grads)]
    Z = embed(model)
    model.loss_trace.append(reconstruction_loss(Z, B, nonlin))
    logger.debug("one-stage loss %.4g -> %.4g", model.loss_trace[0], model.loss_trace[-1])
    return model, Z

"""Finite-difference checks of the hand-written gradients on small random graphs."""

from __future__ import annotations

import numpy as np

from .gae import GaeModel, bce_loss, gae_forward, gae_gradients, gae_input, init_gae, positive_weight
from .graph import Graph, modularity_matrix
from .nn import (
    LayerWeights,
    TrainingConfig,
    backprop_through_layers,
    forward_layers,
    gradient_check,
    loss_gradient_wrt_embedding,
    reconstruction_loss,
)
from .onestage import init_model
from .twostage import ModularityInput, backward_tree, build_tree, forward_tree, init_twostage


def random_graph(rng, max_nodes=12, with_features=None):
    """Connected-ish random graph with 4..max_nodes nodes and at least one edge."""
    n = int(rng.integers(4, max_nodes + 1))
    p = rng.uniform(0.25, 0.6)
    iu = np.triu_indices(n, 1)
    keep = rng.random(len(iu[0])) < p
    edges = np.column_stack([iu[0][keep], iu[1][keep]])
    ring = np.column_stack([np.arange(n - 1), np.arange(1, n)])
    edges = np.vstack([edges, ring[rng.random(n - 1) < 0.5]]) if len(edges) else ring
    feats = None
    if with_features is None:
        with_features = bool(rng.random() < 0.5)
    if with_features:
        feats = rng.normal(size=(n, int(rng.integers(1, 4))))
    return Graph.from_edges(n, edges, features=feats)


def _as_weights(arrays):
    return [LayerWeights.from_array(a) for a in arrays]


def check_onestage(graph, config, decoder=None):
    decoder = decoder or config.decoder_nonlinearity
    B = modularity_matrix(graph)
    model = init_model(graph, config, B)

    def loss(params):
        return reconstruction_loss(forward_layers(model.a_norm, model.input, params)[-1], B, decoder)

    acts = forward_layers(model.a_norm, model.input, model.weights)
    up = loss_gradient_wrt_embedding(acts[-1], B, decoder)
    analytic = backprop_through_layers(acts, model.weights, up, model.a_norm)
    return gradient_check(loss, [lw.w for lw in model.weights], analytic)


def check_twostage(graph, config, rng, decoder=None):
    """Minibatch loss over a fixed sampled tree, against all weights."""
    decoder = decoder or config.decoder_nonlinearity
    model = init_twostage(graph, config)
    src = ModularityInput(graph)
    p = min(config.minibatch_size, graph.n_nodes)
    batch = np.sort(rng.choice(graph.n_nodes, size=p, replace=False))
    nodes0, levels = build_tree(graph, batch, model.n_layers, config.neighbor_samples, rng)
    Bb = src.block(batch)

    def loss(params):
        return reconstruction_loss(forward_tree(src, _as_weights(params), nodes0, levels)[-1], Bb, decoder)

    outs = forward_tree(src, model.weights, nodes0, levels)
    dZ = loss_gradient_wrt_embedding(outs[-1], Bb, decoder)
    grads = backward_tree(src, model.weights, nodes0, levels, outs, dZ)
    grads[0] = grads[0].dense(src)
    return gradient_check(loss, [lw.w for lw in model.weights], grads)


def check_gae(graph, config):
    model = init_gae(graph, config)
    X = gae_input(graph)
    A = graph.adjacency.toarray()
    w = positive_weight(graph.n_nodes, graph.total_edges)
    _, analytic = gae_gradients(model, X, A, w)

    def loss(params):
        return bce_loss(gae_forward(GaeModel(_as_weights(params), model.a_norm), X), A, w)

    return gradient_check(loss, [lw.w for lw in model.weights], analytic)


def run_gradchecks(n_instances=20, seed=0, max_nodes=12):
    """Check every hand-derived gradient on ``n_instances`` random graphs.

    Returns a list of ``{"instance", "model", "n_nodes", "max_rel_error", "passed"}``.
    """
    rng = np.random.default_rng(seed)
    rows = []
    for i in range(n_instances):
        g = random_graph(rng, max_nodes)
        n_layers = int(rng.integers(1, 4))
        dims = tuple(int(d) for d in rng.integers(2, 5, size=n_layers))
        cfg = TrainingConfig(layer_dims=dims, seed=int(rng.integers(1 << 30)),
                             minibatch_size=int(rng.integers(2, 7)), neighbor_samples=int(rng.integers(1, 4)))
        checks = {
            "onestage": check_onestage(g, cfg),
            "onestage-tanh": check_onestage(g, cfg, "tanh"),
            "twostage": check_twostage(g, cfg, rng),
            "gae": check_gae(g, TrainingConfig(layer_dims=(3, 2), seed=cfg.seed)),
        }
        for name, rep in checks.items():
            rows.append({"instance": i, "model": name, "n_nodes": g.n_nodes,
                         "max_rel_error": rep.max_rel_error, "passed": rep.passed})
    return rows

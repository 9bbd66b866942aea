import numpy as np
import pytest

from modrecon import Graph, TrainingConfig, gae_forward, gae_train
from modrecon.gae import (
    GaeModel,
    bce_from_logits,
    bce_loss,
    gae_gradients,
    gae_input,
    init_gae,
    positive_weight,
)
from modrecon.graph import normalized_adjacency
from modrecon.nn import adam_update

from conftest import random_graph, two_triangles
from oracles import matmul_loops, normalized_adjacency_loops


def model_with(graph, W0, W1):
    return GaeModel([np.asarray(W0, float), np.asarray(W1, float)], normalized_adjacency(graph))


def test_zero_weights_give_zero_embedding(karate):
    Z = gae_forward(model_with(karate, np.zeros((34, 4)), np.zeros((4, 2))), gae_input(karate))
    assert not Z.any()


def test_single_node_scalar_chain():
    g = Graph.from_edges(1, [])
    for w0 in (-2.0, 3.0):
        Z = gae_forward(model_with(g, [[w0]], [[0.5]]), np.array([[1.5]]))
        # one isolated node: the normalized adjacency with self-loop is 1
        assert Z[0, 0] == pytest.approx(max(1.5 * w0, 0.0) * 0.5)


def test_composition_oracle():
    rng = np.random.default_rng(0)
    g = random_graph(rng, 5, 0.5)
    X, W0, W1 = rng.normal(size=(5, 3)), rng.normal(size=(3, 4)), rng.normal(size=(4, 2))
    An = normalized_adjacency_loops(g)
    H = [[max(v, 0.0) for v in row] for row in matmul_loops(matmul_loops(An, X.tolist()), W0.tolist())]
    ref = matmul_loops(matmul_loops(An, H), W1.tolist())
    np.testing.assert_allclose(gae_forward(model_with(g, W0, W1), X), ref, atol=1e-12)


def test_shape_checks(karate):
    with pytest.raises(ValueError):
        GaeModel([np.zeros((34, 3)), np.zeros((4, 2))], normalized_adjacency(karate))
    with pytest.raises(ValueError):
        GaeModel([np.zeros((34, 3))], normalized_adjacency(karate))
    with pytest.raises(ValueError):
        init_gae(karate, TrainingConfig(layer_dims=(8, 4, 2)))
    with pytest.raises(ValueError, match="incompatible"):
        gae_forward(model_with(karate, np.zeros((10, 3)), np.zeros((3, 2))), gae_input(karate))


def test_perfect_logits_near_zero_loss():
    A = two_triangles().adjacency.toarray()
    S = np.where(A > 0, 50.0, -50.0)
    assert bce_from_logits(S, A, positive_weight(6, 6)) < 1e-15
    assert bce_from_logits(-S, A, positive_weight(6, 6)) > 10


def test_positive_weight():
    assert positive_weight(6, 6) == pytest.approx((36 - 12) / 12)
    with pytest.raises(ValueError):
        positive_weight(3, 0)


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(1)
    for _ in range(3):
        g = random_graph(rng, 8, 0.4)
        if g.total_edges == 0:
            continue
        model = init_gae(g, TrainingConfig(layer_dims=(5, 3), seed=int(rng.integers(100))))
        X, A, w = gae_input(g), g.adjacency.toarray(), positive_weight(8, g.total_edges)
        _, grads = gae_gradients(model, X, A, w)
        eps = 1e-6
        for lw, G in zip(model.weights, grads):
            num = np.zeros_like(lw.w)
            for idx in np.ndindex(lw.w.shape):
                old = lw.w[idx]
                lw.w[idx] = old + eps
                up = bce_loss(gae_forward(model, X), A, w)
                lw.w[idx] = old - eps
                down = bce_loss(gae_forward(model, X), A, w)
                lw.w[idx] = old
                num[idx] = (up - down) / (2 * eps)
            assert np.linalg.norm(G - num) <= 1e-4 * max(np.linalg.norm(num), 1e-8)


def test_first_steps_decrease_loss():
    g = two_triangles()
    model = init_gae(g, TrainingConfig(layer_dims=(4, 2), seed=0))
    X, A, w = gae_input(g), g.adjacency.toarray(), positive_weight(6, 6)
    losses = []
    for _ in range(10):
        loss, grads = gae_gradients(model, X, A, w)
        losses.append(loss)
        model.weights = [adam_update(lw, gr, 1e-3) for lw, gr in zip(model.weights, grads)]
    assert all(b < a for a, b in zip(losses, losses[1:]))


def test_training_is_deterministic(karate):
    cfg = TrainingConfig(layer_dims=(16, 8), epochs=20, seed=3)
    _, Z1 = gae_train(karate, cfg)
    m2, Z2 = gae_train(karate, cfg)
    assert np.array_equal(Z1, Z2)
    assert m2.loss_trace[-1] < m2.loss_trace[0]


def test_uses_features_when_present():
    g = two_triangles().with_features(np.ones((6, 2)))
    assert init_gae(g, TrainingConfig(layer_dims=(3, 2))).weights[0].shape == (2, 3)

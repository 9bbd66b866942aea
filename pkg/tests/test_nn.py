import numpy as np
import pytest

from modrecon import Graph, TrainingConfig, modularity_matrix, normalized_adjacency
from modrecon.nn import (
    LayerWeights,
    adam_update,
    backprop_through_layers,
    forward_layers,
    gcn_layer_forward,
    gradient_check,
    init_weights,
    load_checkpoint,
    loss_gradient_wrt_embedding,
    numerical_gradient,
    reconstruction_loss,
    save_checkpoint,
)

from oracles import matmul_loops


class TestInit:
    def test_deterministic(self):
        assert np.array_equal(init_weights(4, 2, 7).w, init_weights(4, 2, 7).w)

    def test_bound(self):
        w = init_weights(100, 50, 3).w
        assert np.abs(w).max() <= np.sqrt(6 / 150)

    def test_scalar(self):
        lw = init_weights(1, 1, 0)
        assert abs(lw.w[0, 0]) <= np.sqrt(3)
        assert lw.step_count == 0 and not lw.first_moment.any() and not lw.second_moment.any()

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            LayerWeights(np.zeros((2, 2)), np.zeros((2, 1)), np.zeros((2, 2)))


class TestLayer:
    def test_zero_weights(self):
        rng = np.random.default_rng(0)
        out = gcn_layer_forward(np.eye(3), rng.normal(size=(3, 4)), np.zeros((4, 2)))
        assert not out.any()

    def test_single_isolated_node(self):
        An = normalized_adjacency(Graph.from_edges(1, []))
        assert gcn_layer_forward(An, np.array([[0.7]]), np.array([[-1.3]]))[0, 0] == pytest.approx(np.tanh(-0.91))

    def test_matches_triple_loop(self):
        rng = np.random.default_rng(1)
        A, H, W = rng.normal(size=(5, 5)), rng.normal(size=(5, 5)), rng.normal(size=(5, 5))
        np.testing.assert_allclose(np.arctanh(gcn_layer_forward(A, H, W)), matmul_loops(matmul_loops(A, H), W),
                                   atol=1e-9)
        pre = A @ (H @ W)
        np.testing.assert_allclose(pre, matmul_loops(matmul_loops(A, H), W), atol=1e-12)

    def test_outputs_inside_open_interval(self):
        rng = np.random.default_rng(2)
        out = gcn_layer_forward(np.eye(4), rng.normal(size=(4, 3)), rng.normal(size=(3, 2)))
        assert np.all(np.abs(out) < 1)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="width"):
            gcn_layer_forward(np.eye(2), np.zeros((2, 3)), np.zeros((2, 2)))


class TestLoss:
    def test_exact_reconstruction(self):
        Z = np.random.default_rng(0).normal(size=(5, 2))
        assert reconstruction_loss(Z, Z @ Z.T) == pytest.approx(0, abs=1e-20)

    def test_zero_embedding_gives_frobenius(self, karate):
        B = modularity_matrix(karate)
        assert reconstruction_loss(np.zeros((34, 3)), B) == pytest.approx(np.sum(B * B))

    def test_matches_double_loop(self):
        rng = np.random.default_rng(3)
        Z, B = rng.normal(size=(6, 2)), rng.normal(size=(6, 6))
        B = B + B.T
        ref = sum((Z[i] @ Z[j] - B[i, j]) ** 2 for i in range(6) for j in range(6))
        assert abs(reconstruction_loss(Z, B) - ref) < 1e-10

    def test_gradient_zero_at_exact_fit(self):
        Z = np.random.default_rng(4).normal(size=(4, 2))
        assert np.abs(loss_gradient_wrt_embedding(Z, Z @ Z.T)).max() < 1e-12

    def test_scalar_gradient(self):
        z, b = 0.7, -0.3
        g = loss_gradient_wrt_embedding(np.array([[z]]), np.array([[b]]))
        assert g[0, 0] == pytest.approx(4 * z * (z * z - b))

    @pytest.mark.parametrize("nonlin", ["identity", "tanh"])
    def test_gradient_finite_differences(self, nonlin):
        rng = np.random.default_rng(5)
        Z, B = rng.normal(size=(8, 3)), rng.normal(size=(8, 8))
        B = B + B.T
        rep = gradient_check(lambda p: reconstruction_loss(p[0], B, nonlin), [Z],
                             [loss_gradient_wrt_embedding(Z, B, nonlin)], tolerance=1e-5)
        assert rep.passed, rep.max_rel_error


class TestBackprop:
    def _setup(self, seed=0, n=10, dims=(4, 3)):
        rng = np.random.default_rng(seed)
        iu = np.triu_indices(n, 1)
        g = Graph.from_edges(n, np.column_stack(iu)[rng.random(len(iu[0])) < 0.4])
        An, B = normalized_adjacency(g), modularity_matrix(g)
        ws = [init_weights(a, b, rng) for a, b in zip((n, *dims[:-1]), dims)]
        return An, B, ws

    def test_zero_upstream(self):
        An, B, ws = self._setup()
        acts = forward_layers(An, B, ws)
        grads = backprop_through_layers(acts, ws, np.zeros_like(acts[-1]), An)
        assert all(not g.any() for g in grads)

    def test_linear_limit(self):
        An, B, _ = self._setup()
        W = np.zeros((B.shape[0], 2))  # outputs are 0, so tanh' = 1
        acts = forward_layers(An, B, [W])
        up = np.random.default_rng(1).normal(size=acts[-1].shape)
        np.testing.assert_allclose(backprop_through_layers(acts, [W], up, An)[0], (An @ B).T @ up)

    def test_two_layer_finite_differences(self):
        An, B, ws = self._setup(seed=2)

        def loss(params):
            return reconstruction_loss(forward_layers(An, B, params)[-1], B)

        acts = forward_layers(An, B, ws)
        grads = backprop_through_layers(acts, ws, loss_gradient_wrt_embedding(acts[-1], B), An)
        rep = gradient_check(loss, [lw.w for lw in ws], grads)
        assert rep.passed, rep.max_rel_error

    def test_inconsistent_shapes(self):
        An, B, ws = self._setup()
        acts = forward_layers(An, B, ws)
        with pytest.raises(ValueError):
            backprop_through_layers(acts[:-1], ws, acts[-1], An)


class TestAdam:
    def test_zero_gradient_keeps_weights(self):
        lw = init_weights(3, 2, 0)
        new = adam_update(lw, np.zeros((3, 2)), 0.1)
        assert np.array_equal(new.w, lw.w) and new.step_count == 1

    def test_first_step_moves_by_lr(self):
        new = adam_update(LayerWeights.from_array([[0.0]]), np.array([[1.0]]), 0.1)
        assert new.w[0, 0] == pytest.approx(-0.1, rel=1e-6)

    def test_deterministic(self):
        lw, g = init_weights(3, 2, 0), np.ones((3, 2))
        assert np.array_equal(adam_update(lw, g, 0.01).w, adam_update(lw, g, 0.01).w)

    def test_non_finite(self):
        with pytest.raises(FloatingPointError):
            adam_update(init_weights(1, 1, 0), np.array([[np.nan]]), 0.1)


class TestGradientCheck:
    def test_quadratic(self):
        A = np.array([[2.0, 0.5], [0.5, 1.0]])
        x = np.array([0.3, -0.7])
        rep = gradient_check(lambda p: float(p[0] @ A @ p[0]), [x], [2 * A @ x])
        assert rep.max_rel_error < 1e-9

    def test_detects_corruption(self):
        x = np.array([0.3, -0.7, 1.1])
        rep = gradient_check(lambda p: float(np.sum(p[0] ** 3)), [x], [1.1 * 3 * x * x])
        assert not rep.passed

    def test_numerical_gradient_restores_params(self):
        x = np.array([1.0, 2.0])
        numerical_gradient(lambda p: float(np.sum(p[0] ** 2)), [x])
        assert x.tolist() == [1.0, 2.0]


class TestConfigAndCheckpoint:
    @pytest.mark.parametrize("bad", [dict(layer_dims=()), dict(layer_dims=(0,)), dict(neighbor_samples=0),
                                     dict(minibatch_size=0), dict(decoder_nonlinearity="relu"),
                                     dict(learning_rate=0), dict(batch_mode="x"), dict(epochs=-1)])
    def test_invalid(self, bad):
        with pytest.raises(ValueError):
            TrainingConfig(**bad)

    def test_round_trip(self, tmp_path):
        cfg = TrainingConfig(layer_dims=(5, 3), seed=11, neighbor_samples=4)
        ws = [init_weights(7, 5, 1), init_weights(5, 3, 2)]
        save_checkpoint(tmp_path / "c.npz", "onestage", ws, cfg, {"n_nodes": 7})
        kind, got, cfg2, extra = load_checkpoint(tmp_path / "c.npz")
        assert kind == "onestage" and cfg2 == cfg and extra == {"n_nodes": 7}
        assert all(np.array_equal(a.w, b.w) for a, b in zip(ws, got))

    def test_unknown_format(self, tmp_path):
        np.savez(tmp_path / "c.npz", header=np.array('{"format": 99, "shapes": []}'))
        with pytest.raises(ValueError, match="format"):
            load_checkpoint(tmp_path / "c.npz")

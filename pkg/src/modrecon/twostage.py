"""Sampled two-stage encoder: neighborhood sharing (MEAN) + membership encoding.

Each layer computes ``tanh([h_v | mean(h_u, u in sample(v))] @ W_l)``. Layer-0
codes are rows of ``[B | X]`` and are never materialized. Since
``b_v = a_v - k_v k / 2M``, a product ``b_v @ W`` needs only the rows of ``W``
at the neighbors of ``v`` plus the cached vector ``k @ W``.

Training cost per minibatch is proportional to the sampled rows. The only
dense term in the first-layer gradient is ``-k c^T`` (one vector ``c`` per
batch); rows of ``B`` sum to zero, so the encoder is unchanged by adding a
constant vector to every row of the modularity block of ``W``. Scaling each
row's step by ``1 / k_j`` turns that dense term into exactly such a shift,
which is dropped. The block is therefore updated only on touched rows.
Feature rows and deeper layers use Adam.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .nn import (
    LayerWeights,
    adam_update,
    init_weights,
    loss_gradient_wrt_embedding,
    reconstruction_loss,
)
from .seeding import derive_rng

logger = logging.getLogger(__name__)

MAX_LAYERS = 5


@dataclass(frozen=True)
class NeighborSample:
    center: int
    sampled: np.ndarray


class ModularityInput:
    """Row access to ``B0 = [B | X]`` through the sparse-plus-rank-one form of ``B``."""

    def __init__(self, graph):
        if graph.total_edges == 0:
            raise ValueError("modularity input undefined for an edgeless graph")
        self.graph = graph
        self.A = graph.adjacency
        self.k = graph.degrees.astype(np.float64)
        self.two_m = 2.0 * graph.total_edges
        self.X = graph.features
        self.n = graph.n_nodes
        self.width = self.n + (0 if self.X is None else self.X.shape[1])
        self.k_sq = float(self.k @ self.k)
        self._pos = np.full(self.n, -1, dtype=np.int64)

    def rows(self, idx):
        """Dense ``B0[idx]``."""
        idx = np.asarray(idx, dtype=np.int64)
        out = self.A[idx].toarray() - np.outer(self.k[idx] / self.two_m, self.k)
        if self.X is not None:
            out = np.hstack([out, self.X[idx]])
        return out

    def degree_product(self, W):
        """``k @ W[:n]``, the vector needed for the rank-one part of ``B``."""
        return self.k @ W[: self.n]

    def matmul(self, idx, W, kW=None):
        """``B0[idx] @ W``; ``idx=None`` means all nodes."""
        n = self.n
        if kW is None:
            kW = self.degree_product(W)
        if idx is None:
            out = self.A @ W[:n] - np.outer(self.k / self.two_m, kW)
            if self.X is not None:
                out += self.X @ W[n:]
            return out
        idx = np.asarray(idx, dtype=np.int64)
        out = self.A[idx] @ W[:n] - np.outer(self.k[idx] / self.two_m, kW)
        if self.X is not None:
            out += self.X[idx] @ W[n:]
        return out

    def sparse_rmatmul(self, idx, G):
        """``B0[idx].T @ G`` in factored form.

        Returns ``(cols, vals, c, feat)`` such that the modularity block equals
        ``scatter(cols, vals) - outer(k, c)`` and ``feat`` is the feature block.
        """
        idx = np.asarray(idx, dtype=np.int64)
        sub = self.A[idx]
        cols, inv = np.unique(sub.indices, return_inverse=True)
        owner = np.repeat(np.arange(len(idx)), np.diff(sub.indptr))
        T = sp.csr_matrix((np.ones(len(inv)), (inv, owner)), shape=(len(cols), len(idx)))
        vals = T @ G
        c = (self.k[idx] / self.two_m) @ G
        feat = None if self.X is None else self.X[idx].T @ G
        return cols, vals, c, feat

    def rmatmul(self, idx, G):
        """Dense ``B0[idx].T @ G``."""
        cols, vals, c, feat = self.sparse_rmatmul(idx, G)
        top = -np.outer(self.k, c)
        top[cols] += vals
        return top if feat is None else np.vstack([top, feat])

    def block(self, rows):
        """``B[rows][:, rows]`` in time proportional to the rows' degrees."""
        rows = np.asarray(rows, dtype=np.int64)
        p = len(rows)
        self._pos[rows] = np.arange(p)
        sub = self.A[rows]
        owner = np.repeat(np.arange(p), np.diff(sub.indptr))
        col = self._pos[sub.indices]
        self._pos[rows] = -1
        keep = col >= 0
        blk = np.zeros((p, p))
        blk[owner[keep], col[keep]] = 1.0
        blk -= np.outer(self.k[rows], self.k[rows]) / self.two_m
        return blk

    def outside_row_times(self, stubs, W, kW=None, features=None):
        """``b @ W`` for a node outside the graph attached to ``stubs``.

        The row is ``a - deg * k / 2M`` against the base graph's degrees, with
        ``deg = len(stubs)``.
        """
        n = self.n
        if kW is None:
            kW = self.degree_product(W)
        stubs = np.asarray(stubs, dtype=np.int64)
        out = W[stubs].sum(axis=0) - (len(stubs) / self.two_m) * kW
        if self.X is not None and features is not None:
            out = out + np.asarray(features, dtype=np.float64) @ W[n:]
        return out


# sampling ---------------------------------------------------------------


def sample_many(graph, nodes, k, rng):
    """Draw ``k`` neighbors for each node; returns an ``(len(nodes), k)`` array.

    Nodes with more than ``k`` neighbors get a uniform sample without
    replacement. Nodes with ``1 <= deg <= k`` get their full neighbor list,
    cycled in index order to length ``k``, so sampling is exhaustive and
    seed-independent there. Isolated nodes get ``k`` copies of themselves.
    """
    A = graph.adjacency
    indptr, indices = A.indptr, A.indices
    nodes = np.asarray(nodes, dtype=np.int64)
    deg = graph.degrees[nodes]
    out = np.empty((len(nodes), k), dtype=np.int64)

    iso = deg == 0
    out[iso] = nodes[iso, None]

    small = (deg >= 1) & (deg <= k)
    if small.any():
        s_nodes = nodes[small]
        offs = np.arange(k)[None, :] % deg[small, None]
        out[small] = indices[indptr[s_nodes, None] + offs]

    big = deg > k
    if big.any():
        b_nodes = nodes[big]
        lens = deg[big]
        seg = np.repeat(np.arange(len(b_nodes)), lens)
        seg_start = np.repeat(np.cumsum(lens) - lens, lens)
        flat = np.repeat(indptr[b_nodes], lens) + (np.arange(lens.sum()) - seg_start)
        order = np.lexsort((rng.random(len(flat)), seg))
        rank = np.arange(len(flat)) - seg_start
        out[big] = indices[flat[order][rank < k]].reshape(-1, k)
    return out


def sample_neighbors(graph, v, k, rng):
    """Sample ``k`` neighbors of ``v`` (see :func:`sample_many` for the rules)."""
    if not 0 <= v < graph.n_nodes:
        raise ValueError(f"node {v} out of range")
    return NeighborSample(int(v), sample_many(graph, [v], k, rng)[0])


def neighborhood_sharing(neighbor_rows):
    """MEAN sharing: average of the neighbor codes."""
    rows = np.asarray(neighbor_rows, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[0] == 0:
        raise ValueError("need at least one neighbor row")
    return rows.mean(axis=0)


def membership_encoding(self_row, shared, weights):
    """``tanh([self | shared] @ W)``."""
    W = getattr(weights, "w", weights)
    x = np.concatenate([np.asarray(self_row, dtype=np.float64), np.asarray(shared, dtype=np.float64)])
    if x.shape[0] != W.shape[0]:
        raise ValueError(f"concatenated width {x.shape[0]} != weight rows {W.shape[0]}")
    return np.tanh(x @ W)


# model --------------------------------------------------------------------


@dataclass
class TwoStageModel:
    weights: list
    config: object
    input_width: int
    loss_trace: list = field(default_factory=list)

    def __post_init__(self):
        dims = [self.input_width, *self.config.layer_dims[: len(self.weights)]]
        for l, lw in enumerate(self.weights):
            if lw.shape != (2 * dims[l], dims[l + 1]):
                raise ValueError(f"layer {l} weight shape {lw.shape}, expected {(2 * dims[l], dims[l + 1])}")

    @property
    def n_layers(self):
        return len(self.weights)

    @property
    def n_parameters(self):
        return int(sum(lw.w.size for lw in self.weights))

    def truncated(self, n_layers):
        """Copy of the first ``n_layers`` layers (fresh optimizer state)."""
        from dataclasses import replace

        cfg = replace(self.config, layer_dims=self.config.layer_dims[:n_layers])
        ws = [LayerWeights.from_array(lw.w) for lw in self.weights[:n_layers]]
        return TwoStageModel(ws, cfg, self.input_width)


def init_twostage(graph, config):
    if not 1 <= len(config.layer_dims) <= MAX_LAYERS:
        raise ValueError(f"layer count must be in 1..{MAX_LAYERS}")
    width = graph.n_nodes + graph.n_features
    rng = derive_rng(config.seed, "init")
    dims = [width, *config.layer_dims]
    weights = [init_weights(2 * dims[l], dims[l + 1], rng) for l in range(len(config.layer_dims))]
    return TwoStageModel(weights, config, width)


def _mean_operator(samp_pos, n_cols):
    n, k = samp_pos.shape
    data = np.full(n * k, 1.0 / k)
    return sp.csr_matrix((data, (np.repeat(np.arange(n), k), samp_pos.ravel())), shape=(n, n_cols))


def build_tree(graph, batch, n_layers, k, rng):
    """Sampled computation tree for a minibatch.

    Returns ``(nodes0, levels)``: ``nodes0`` are the graph nodes whose input
    rows are needed, and ``levels[l] = (self_pos, M)`` maps layer-``l`` codes
    to layer ``l+1`` (self positions and the mean-over-samples operator).
    """
    frontier = np.asarray(batch, dtype=np.int64)
    levels = []
    for _ in range(n_layers):
        samp = sample_many(graph, frontier, k, rng)
        below = np.unique(np.concatenate([frontier, samp.ravel()]))
        levels.append((np.searchsorted(below, frontier), _mean_operator(np.searchsorted(below, samp), len(below))))
        frontier = below
    levels.reverse()
    return frontier, levels


def forward_tree(src, weights, nodes0, levels, kws=None):
    """Layer outputs over a sampled tree; the last one has one row per batch node."""
    outs = []
    H = None
    for l, (self_pos, M) in enumerate(levels):
        W = weights[l].w
        d_in = W.shape[0] // 2
        if l == 0:
            kw_s, kw_n = kws if kws is not None else (None, None)
            P_self = src.matmul(nodes0[self_pos], W[:d_in], kw_s)
            P_nb = M @ src.matmul(nodes0, W[d_in:], kw_n)
        else:
            P_self = H[self_pos] @ W[:d_in]
            P_nb = (M @ H) @ W[d_in:]
        H = np.tanh(P_self + P_nb)
        outs.append(H)
    return outs


@dataclass
class InputGrad:
    """First-layer gradient in factored form, one entry per half (self, neighbor).

    Each half is ``(cols, vals, c, feat)`` as returned by
    :meth:`ModularityInput.sparse_rmatmul`.
    """

    halves: tuple

    def dense(self, src):
        parts = []
        for cols, vals, c, feat in self.halves:
            top = -np.outer(src.k, c)
            top[cols] += vals
            parts.append(top)
            if feat is not None:
                parts.append(feat)
        return np.vstack(parts)


def backward_tree(src, weights, nodes0, levels, outs, dZ):
    """Gradients for every layer; the first one is an :class:`InputGrad`."""
    grads = [None] * len(weights)
    g = dZ
    for l in range(len(levels) - 1, -1, -1):
        self_pos, M = levels[l]
        W = weights[l].w
        d_in = W.shape[0] // 2
        d_pre = g * (1.0 - outs[l] * outs[l])
        if l == 0:
            grads[0] = InputGrad((
                src.sparse_rmatmul(nodes0[self_pos], d_pre),
                src.sparse_rmatmul(nodes0, M.T @ d_pre),
            ))
        else:
            H = outs[l - 1]
            grads[l] = np.vstack([H[self_pos].T @ d_pre, (M @ H).T @ d_pre])
            g = M.T @ (d_pre @ W[d_in:].T)
            g[self_pos] += d_pre @ W[:d_in].T
    return grads


def batch_loss_and_grads(model, src, batch, rng, kws=None):
    """Loss on the ``p x p`` block of ``B`` for one minibatch, plus gradients."""
    cfg = model.config
    nodes0, levels = build_tree(src.graph, batch, model.n_layers, cfg.neighbor_samples, rng)
    outs = forward_tree(src, model.weights, nodes0, levels, kws)
    Z = outs[-1]
    Bb = src.block(batch)
    loss = reconstruction_loss(Z, Bb, cfg.decoder_nonlinearity)
    dZ = loss_gradient_wrt_embedding(Z, Bb, cfg.decoder_nonlinearity)
    return loss, backward_tree(src, model.weights, nodes0, levels, outs, dZ)


class _InputLayerUpdater:
    """Applies first-layer updates in place and keeps ``k @ W`` current for both halves."""

    def __init__(self, model, src, lr_input, lr):
        self.lw = model.weights[0]
        self.src = src
        self.lr_input = lr_input
        self.lr = lr
        self.d_in = self.lw.w.shape[0] // 2
        self.kinv = np.where(src.k > 0, 1.0 / np.maximum(src.k, 1.0), 0.0)
        W = self.lw.w
        self.kws = [src.degree_product(W[: self.d_in]), src.degree_product(W[self.d_in:])]
        self.step = self.lw.step_count

    def apply(self, grad):
        W, m, v = self.lw.w, self.lw.first_moment, self.lw.second_moment
        n = self.src.n
        self.step += 1
        for h, (cols, vals, _c, feat) in enumerate(grad.halves):
            off = h * self.d_in
            delta = -self.lr_input * vals * self.kinv[cols, None]
            W[off + cols] += delta
            self.kws[h] += self.src.k[cols] @ delta
            if feat is not None:
                sl = slice(off + n, off + self.d_in)
                part = LayerWeights(W[sl], m[sl], v[sl], self.step - 1)
                new = adam_update(part, feat, self.lr)
                W[sl], m[sl], v[sl] = new.w, new.first_moment, new.second_moment

    def finish(self):
        return LayerWeights(self.lw.w, self.lw.first_moment, self.lw.second_moment, self.step)


def epoch_batches(graph, batch_size, mode, rng):
    """Minibatches covering every node once as a seed.

    ``uniform``: consecutive chunks of a random permutation. ``paired``:
    chunks of ``batch_size // 2`` seeds, each joined by one uniformly drawn
    neighbor, so the batch block of ``B`` always holds edges.
    """
    perm = rng.permutation(graph.n_nodes)
    if mode == "uniform" or batch_size < 2:
        return [perm[s:s + batch_size] for s in range(0, graph.n_nodes, batch_size)]
    half = batch_size // 2
    deg = graph.degrees[perm]
    A = graph.adjacency
    pick = np.floor(rng.random(len(perm)) * np.maximum(deg, 1)).astype(np.int64)
    partner = np.where(deg > 0, A.indices[A.indptr[perm] + np.minimum(pick, np.maximum(deg - 1, 0))], perm)
    return [np.unique(np.concatenate([perm[s:s + half], partner[s:s + half]])) for s in range(0, len(perm), half)]


def run_epoch(model, src, order_rng, sample_rng):
    """One pass over all nodes in minibatches; returns the summed batch loss."""
    cfg = model.config
    lr_input = cfg.learning_rate if cfg.input_learning_rate is None else cfg.input_learning_rate
    first = _InputLayerUpdater(model, src, lr_input, cfg.learning_rate)
    total = 0.0
    for batch in epoch_batches(src.graph, cfg.minibatch_size, cfg.batch_mode, order_rng):
        loss, grads = batch_loss_and_grads(model, src, batch, sample_rng, first.kws)
        if not np.isfinite(loss):
            raise FloatingPointError("non-finite loss")
        total += loss
        first.apply(grads[0])
        model.weights[1:] = [adam_update(lw, g, cfg.learning_rate) for lw, g in zip(model.weights[1:], grads[1:])]
    model.weights[0] = first.finish()
    return total


def embed_twostage(model, graph, rng, n_layers=None, src=None):
    """Layer-wise full-graph encoding with fresh neighbor samples per layer."""
    src = src or ModularityInput(graph)
    k = model.config.neighbor_samples
    n_layers = model.n_layers if n_layers is None else n_layers
    all_nodes = np.arange(graph.n_nodes)
    H = None
    for l in range(n_layers):
        W = model.weights[l].w
        d_in = W.shape[0] // 2
        M = _mean_operator(sample_many(graph, all_nodes, k, rng), graph.n_nodes)
        if l == 0:
            pre = src.matmul(None, W[:d_in]) + M @ src.matmul(None, W[d_in:])
        else:
            pre = H @ W[:d_in] + (M @ H) @ W[d_in:]
        H = np.tanh(pre)
    return H


def train_twostage(graph, config, sampling_seed=None, model=None):
    """Minibatch training of the sampled encoder; returns ``(model, Z)``.

    Weight init and batch order derive from ``config.seed``; neighbor samples
    from ``sampling_seed`` (defaults to ``config.seed``). ``Z`` is the final
    full-graph encoding. Passing ``model`` continues training it.
    """
    if model is None:
        model = init_twostage(graph, config)
    else:
        model.config = config
    src = ModularityInput(graph)
    if model.input_width != src.width:
        raise ValueError(f"model input width {model.input_width} != graph input width {src.width}")
    s_seed = config.seed if sampling_seed is None else sampling_seed
    order_rng = derive_rng(config.seed, "order")
    sample_rng = derive_rng(s_seed, "sample")
    for epoch in range(config.epochs):
        try:
            model.loss_trace.append(run_epoch(model, src, order_rng, sample_rng))
        except FloatingPointError as exc:
            raise FloatingPointError(f"{exc} at epoch {epoch}") from None
    Z = embed_twostage(model, graph, derive_rng(s_seed, "embed"), src=src)
    return model, Z

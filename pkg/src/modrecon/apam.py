"""Inference for nodes that arrive after training.

A new node brings edge stubs into the base graph and optionally a feature
vector. Two encoders are provided:

* plain: the node's own modularity row (built from its stubs against base
  degrees) goes through an ``L``-layer sampled pass;
* aligned: the node borrows the stored row of its most structurally
  similar sampled neighbor, and its neighbor rows are re-weighted by
  scaled dot-product attention among themselves before mean sharing.

Either way the embedding is assigned to the nearest stored centroid. The
base graph, weights and centroids are read-only here.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .cluster import assign_nearest
from .seeding import derive_rng
from .twostage import ModularityInput, embed_twostage, sample_many, train_twostage

FINE_TUNE_EPOCHS = 20
FINE_TUNE_LR_SCALE = 0.1


@dataclass(frozen=True)
class NewNode:
    stubs: np.ndarray
    features: np.ndarray | None = None
    id: object = None

    def __post_init__(self):
        stubs = np.unique(np.asarray(self.stubs, dtype=np.int64))
        if stubs.size == 0:
            raise ValueError("a new node needs at least one edge stub")
        object.__setattr__(self, "stubs", stubs)
        if self.features is not None:
            object.__setattr__(self, "features", np.asarray(self.features, dtype=np.float64))

    def check(self, graph):
        if self.stubs[0] < 0 or self.stubs[-1] >= graph.n_nodes:
            raise ValueError(f"stub index out of range for a graph of {graph.n_nodes} nodes")
        if graph.features is not None:
            if self.features is None or self.features.shape != (graph.n_features,):
                raise ValueError(f"new node needs a feature vector of length {graph.n_features}")


@dataclass(frozen=True)
class AttentionWeights:
    alpha: np.ndarray
    scale: float


def sample_from_list(neighbors, k, rng):
    """Same rules as :func:`~modrecon.twostage.sample_many`, for an explicit sorted neighbor list."""
    neighbors = np.asarray(neighbors, dtype=np.int64)
    deg = len(neighbors)
    if deg > k:
        return neighbors[rng.permutation(deg)[:k]]
    return neighbors[np.arange(k) % deg]


# alignment ---------------------------------------------------------------


def neighbor_block(graph, idx):
    """Concatenated neighbor lists of ``idx`` as ``(flat, lens, row_of_entry)``."""
    A = graph.adjacency
    idx = np.asarray(idx, dtype=np.int64)
    starts = A.indptr[idx]
    lens = A.indptr[idx + 1] - starts
    offs = np.cumsum(lens) - lens
    flat = A.indices[np.repeat(starts - offs, lens) + np.arange(lens.sum())]
    return flat, lens, np.repeat(np.arange(len(idx)), lens)


def overlap_counts(graph, node_sample, candidates, k, rng, block=None):
    """Members shared between each candidate's own ``k``-sample and ``node_sample``.

    A candidate's sample is drawn without replacement from its neighbor list
    (the whole list when ``deg <= k``), so the number of marked members it
    picks up is hypergeometric: ``m`` marked neighbors out of ``deg``, with
    ``min(k, deg)`` draws. The count is drawn directly from that law instead
    of materializing the sample.
    """
    flat, lens, seg = block if block is not None else neighbor_block(graph, candidates)
    mark = np.zeros(graph.n_nodes)
    mark[node_sample] = 1.0
    counts = np.bincount(seg, weights=mark[flat], minlength=len(lens)).astype(np.int64)
    # exhaustive when deg <= k and trivially zero without marked neighbors
    for i in np.flatnonzero((lens > k) & (counts > 0)):
        counts[i] = rng.hypergeometric(counts[i], lens[i] - counts[i], k)
    return counts


def pick_aligned(node_sample, counts):
    """First sampled neighbor with a strictly larger overlap than all before it.

    Starts from ``t = 0`` and the first sampled neighbor, so zero overlap
    everywhere keeps the first one.
    """
    t, curr = 0, 0
    for i, c in enumerate(counts):
        if c > t:
            t, curr = c, i
    return int(node_sample[curr])


def align_features(graph, node, k, rng, src=None):
    """Aligned layer-0 row for ``node``: the stored row of the best-overlap neighbor.

    Returns ``(curr, row)`` where ``row`` is ``[B[curr] | x]``, with ``x`` the
    new node's own features when the graph has features.
    """
    node.check(graph)
    src = src or ModularityInput(graph)
    sample = sample_from_list(node.stubs, k, rng)
    curr = pick_aligned(sample, overlap_counts(graph, sample, sample, k, rng))
    row = src.rows([curr])[0]
    if graph.features is not None:
        row[graph.n_nodes:] = node.features
    return curr, row


# attention -----------------------------------------------------------------


def _softmax_rows(a):
    e = np.exp(a - a.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def attention_weights(scores, dim):
    """Row softmax of ``scores / sqrt(dim)``."""
    a = np.asarray(scores, dtype=np.float64) / np.sqrt(dim)
    if not np.all(np.isfinite(a)):
        raise FloatingPointError("non-finite attention scores")
    return AttentionWeights(_softmax_rows(a), 1.0 / np.sqrt(dim))


def peer_attention(neighbor_rows, return_weights=False):
    """Each row replaced by the attention-weighted mix of all rows.

    ``alpha = softmax(R R^T / sqrt(d))`` row-wise and the output is ``alpha @ R``.
    """
    R = np.asarray(neighbor_rows, dtype=np.float64)
    if R.ndim != 2 or R.shape[0] < 1 or R.shape[1] < 1:
        raise ValueError("need a non-empty k x d matrix")
    if not np.all(np.isfinite(R)):
        raise FloatingPointError("non-finite neighbor rows")
    w = attention_weights(R @ R.T, R.shape[1])
    out = w.alpha @ R
    return (out, w) if return_weights else out


def _gram(src, idx, block, nbr_degree_sum):
    """``B0[idx] @ B0[idx].T`` from common-neighbor counts plus rank-one degree terms."""
    flat, lens, seg = block
    cols = np.unique(flat)
    D = np.zeros((len(lens), len(cols)))
    D[seg, np.searchsorted(cols, flat)] = 1.0
    # B0 B0^T = D D^T - c (u k^T + k u^T) + c^2 |k|^2 k k^T, split symmetrically
    ks = src.k[idx]
    c = 1.0 / src.two_m
    M = np.outer(ks, (0.5 * c * c * src.k_sq) * ks - c * nbr_degree_sum)
    G = D @ D.T + M + M.T
    if src.X is not None:
        Xs = src.X[idx]
        G += Xs @ Xs.T
    return G


def modularity_gram(src, idx):
    """``B0[idx] @ B0[idx].T`` without forming the rows."""
    idx = np.asarray(idx, dtype=np.int64)
    block = neighbor_block(src.graph, idx)
    u = np.bincount(block[2], weights=src.k[block[0]], minlength=len(idx))
    return _gram(src, idx, block, u)


# inference models ------------------------------------------------------------


@dataclass
class InferenceModel:
    """A trained (possibly truncated and fine-tuned) encoder plus per-community centroids.

    First-layer pre-activations of the base graph depend only on the frozen
    weights and graph, so both halves are computed once here and looked up
    per inferred node.
    """

    model: object
    graph: object
    centroids: np.ndarray
    fine_tune_seconds: float = 0.0
    base_embedding: np.ndarray | None = None
    base_labels: np.ndarray | None = None

    def __post_init__(self):
        src = self.src = ModularityInput(self.graph)
        W0 = self.model.weights[0].w
        d_in = W0.shape[0] // 2
        self.w_self, self.w_nb = W0[:d_in], W0[d_in:]
        self.kw0 = (src.degree_product(self.w_self), src.degree_product(self.w_nb))
        self.pre_self = src.matmul(None, self.w_self, self.kw0[0])
        self.pre_nb = src.matmul(None, self.w_nb, self.kw0[1])
        self.upper = [(lw.w[: lw.shape[0] // 2], lw.w[lw.shape[0] // 2:]) for lw in self.model.weights[1:]]
        self.stub_k = src.A @ src.k  # sum of neighbor degrees, for the Gram correction

    @property
    def n_layers(self):
        return self.model.n_layers

    @property
    def neighbor_samples(self):
        return self.model.config.neighbor_samples


def community_centroids(Z, labels, n_communities=None):
    """Mean embedding per community id; empty communities get NaN rows."""
    labels = np.asarray(labels)
    K = int(labels.max()) + 1 if n_communities is None else n_communities
    counts = np.bincount(labels, minlength=K).astype(np.float64)
    sums = np.zeros((K, Z.shape[1]))
    np.add.at(sums, labels, Z)
    with np.errstate(invalid="ignore", divide="ignore"):
        return sums / counts[:, None]


def prepare_inference(model, graph, labels, n_layers=None, epochs=FINE_TUNE_EPOCHS,
                      lr_scale=FINE_TUNE_LR_SCALE, seed=None):
    """Build an ``n_layers`` inference model from a trained two-stage model.

    The first ``n_layers`` weight matrices are copied and fine-tuned for
    ``epochs`` epochs at ``lr_scale`` times the training rate. Centroids are
    the low-layer embedding averaged within each community of ``labels``
    (the high-layer assignment).
    """
    import time

    n_layers = model.n_layers if n_layers is None else n_layers
    if not 1 <= n_layers <= model.n_layers:
        raise ValueError(f"n_layers must be in 1..{model.n_layers}")
    cfg = model.config
    seed = cfg.seed if seed is None else seed
    low = model.truncated(n_layers)
    t0 = time.perf_counter()
    if epochs > 0:
        ft_cfg = replace(low.config, epochs=epochs, seed=seed,
                         learning_rate=cfg.learning_rate * lr_scale,
                         input_learning_rate=None if cfg.input_learning_rate is None else cfg.input_learning_rate * lr_scale)
        low, Z = train_twostage(graph, ft_cfg, model=low)
    else:
        Z = embed_twostage(low, graph, derive_rng(seed, "embed"))
    elapsed = time.perf_counter() - t0
    labels = np.asarray(labels, dtype=np.int64)
    return InferenceModel(low, graph, community_centroids(Z, labels), elapsed, Z, labels)


def refit_centroids(inf, new_embeddings, new_labels):
    """Centroids recomputed over the base nodes plus already inferred nodes.

    Inference itself never moves the centroids; call this explicitly between
    batches of arrivals. Returns a new :class:`InferenceModel`, ``inf`` is
    left untouched.
    """
    if inf.base_embedding is None:
        raise ValueError("inference model carries no base embedding to refit from")
    Z = np.vstack([inf.base_embedding, np.asarray(new_embeddings, dtype=np.float64).reshape(-1, inf.base_embedding.shape[1])])
    labels = np.concatenate([inf.base_labels, np.asarray(new_labels, dtype=np.int64)])
    K = max(len(inf.centroids), int(labels.max()) + 1)
    return replace(inf, centroids=community_centroids(Z, labels, K))


def _new_node_tree(graph, stubs, n_layers, k, rng):
    """Sampled tree for a virtual node outside the graph.

    The graph nodes form an ordinary sampled tree and the new node is carried
    as an extra chain: ``levels[l] = (self_pos, samp_pos, new_pos)`` with
    ``samp_pos`` the ``(n, k)`` sample positions of the graph nodes and
    ``new_pos`` those of the new node, all indexing the level below.
    """
    ex = np.empty(0, dtype=np.int64)
    levels = []
    for _ in range(n_layers):
        s_new = sample_from_list(stubs, k, rng)
        if ex.size:
            samp = sample_many(graph, ex, k, rng)
            below = np.unique(np.concatenate([ex, samp.ravel(), s_new]))
            levels.append((np.searchsorted(below, ex), np.searchsorted(below, samp), np.searchsorted(below, s_new)))
        else:
            below, new_pos = np.unique(s_new, return_inverse=True)
            levels.append((ex, np.empty((0, k), dtype=np.int64), new_pos))
        ex = below
    levels.reverse()
    return ex, levels


def _encode(inf, node, rng, align, attend):
    node.check(inf.graph)
    src, k = inf.src, inf.neighbor_samples
    nodes0, levels = _new_node_tree(inf.graph, node.stubs, inf.n_layers, k, rng)
    self_pos, samp_pos, new_pos = levels[0]

    if align or attend:
        if len(levels) == 1:  # the tree is the new node's own sample, already unique
            peers, inv = nodes0, new_pos
        else:
            uniq, inv = np.unique(new_pos, return_inverse=True)
            peers = nodes0[uniq]
        block = neighbor_block(inf.graph, peers)
    if align:
        sample0 = nodes0[new_pos]
        counts = overlap_counts(inf.graph, sample0, peers, k, rng, block)[inv]
        curr = int(sample0[np.argmax(counts)])  # first maximum, same as pick_aligned
        h_new = inf.pre_self[curr]
        if src.X is not None:
            h_new = h_new + (node.features - src.X[curr]) @ inf.w_self[src.n:]
    else:
        h_new = src.outside_row_times(node.stubs, inf.w_self, inf.kw0[0], node.features)

    P_nb = inf.pre_nb[nodes0]
    nb_rows = P_nb[new_pos]
    if attend:
        G = _gram(src, peers, block, inf.stub_k[peers])[np.ix_(inv, inv)]
        nb_rows = _softmax_rows(G / np.sqrt(src.width)) @ nb_rows
    h_new = np.tanh(h_new + nb_rows.mean(axis=0))
    H = np.tanh(inf.pre_self[nodes0[self_pos]] + P_nb[samp_pos].mean(axis=1)) if self_pos.size else None
    for (self_pos, samp_pos, new_pos), (Ws, Wn) in zip(levels[1:], inf.upper):
        pre_ex = H[self_pos] @ Ws + H[samp_pos].mean(axis=1) @ Wn
        h_new = np.tanh(h_new @ Ws + H[new_pos].mean(axis=0) @ Wn)
        H = np.tanh(pre_ex)
    return h_new


def infer_plain(inf, node, rng):
    """Sampled ``L``-layer encoding of ``node`` from its own stub row; returns ``(community, z)``."""
    z = _encode(inf, node, rng, align=False, attend=False)
    return assign_nearest(inf.centroids, z), z


def infer_apam(inf, node, rng):
    """Aligned row plus attention over the first-layer neighbor rows; returns ``(community, z)``."""
    z = _encode(inf, node, rng, align=True, attend=True)
    return assign_nearest(inf.centroids, z), z

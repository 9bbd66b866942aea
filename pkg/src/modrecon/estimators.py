"""scikit-learn style wrappers around the trainers and the clustering step."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from sklearn.base import BaseEstimator, ClusterMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .apam import NewNode, infer_apam, infer_plain, prepare_inference
from .cluster import DEFAULT_RESTARTS, kmeans_fit, sweep_k
from .gae import gae_train
from .graph import Graph
from .metrics import modularity_score
from .nn import TrainingConfig
from .onestage import train_onestage
from .seeding import derive_rng
from .twostage import train_twostage

METHODS = ("twostage", "onestage", "gae")


def check_graph(G, features=None):
    """Coerce ``G`` to a :class:`Graph`.

    Accepts a :class:`Graph`, a networkx graph, or a square symmetric
    adjacency matrix (dense or scipy sparse). ``features`` replaces any
    features already attached.
    """
    if isinstance(G, Graph):
        graph = G
    elif hasattr(G, "nodes") and hasattr(G, "edges") and hasattr(G, "is_directed"):
        if G.is_directed():
            raise ValueError("directed graphs are not supported")
        graph = Graph.from_networkx(G)
    else:
        A = G if sp.issparse(G) else np.asarray(G)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError(f"expected a square adjacency matrix, got shape {A.shape}")
        if abs(sp.csr_matrix(A) - sp.csr_matrix(A).T).sum() > 0:
            raise ValueError("adjacency matrix must be symmetric")
        graph = Graph.from_adjacency(A)
    if graph.n_nodes < 2 or graph.total_edges == 0:
        raise ValueError("graph needs at least two nodes and one edge")
    if features is not None:
        features = np.asarray(features, dtype=np.float64)
        if features.ndim != 2 or features.shape[0] != graph.n_nodes:
            raise ValueError(f"features must have shape ({graph.n_nodes}, F)")
        if not np.all(np.isfinite(features)):
            raise ValueError("features contain non-finite values")
        graph = graph.with_features(features)
    return graph


class ModularityEmbedding(TransformerMixin, BaseEstimator, auto_wrap_output_keys=None):
    """Node embedding whose inner products approximate the modularity matrix.

    Parameters
    ----------
    method : {"twostage", "onestage", "gae"}, default="twostage"
        ``twostage`` is the sampled minibatch encoder, ``onestage`` the
        full-batch GCN encoder, ``gae`` the adjacency-reconstruction baseline.
    layer_dims : tuple of int, default=(32, 16)
    learning_rate : float, default=0.01
    epochs : int, default=200
    seed : int, default=0
    minibatch_size : int, default=16
    neighbor_samples : int, default=5
    input_learning_rate : float or None, default=None

    Attributes
    ----------
    embedding_ : ndarray of shape (n_nodes, layer_dims[-1])
    model_ : trained model object
    graph_ : Graph
    """

    def __init__(self, method="twostage", layer_dims=(32, 16), learning_rate=0.01, epochs=200, seed=0,
                 minibatch_size=16, neighbor_samples=5, input_learning_rate=None):
        self.method = method
        self.layer_dims = layer_dims
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.seed = seed
        self.minibatch_size = minibatch_size
        self.neighbor_samples = neighbor_samples
        self.input_learning_rate = input_learning_rate

    def _config(self):
        return TrainingConfig(
            layer_dims=tuple(self.layer_dims), learning_rate=self.learning_rate, epochs=self.epochs,
            seed=self.seed, minibatch_size=self.minibatch_size, neighbor_samples=self.neighbor_samples,
            input_learning_rate=self.input_learning_rate,
        )

    def fit(self, X, y=None, features=None):
        """Train on graph ``X`` (anything :func:`check_graph` accepts)."""
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        graph = check_graph(X, features)
        cfg = self._config()
        if self.method == "twostage":
            self.model_, Z = train_twostage(graph, cfg)
        elif self.method == "onestage":
            self.model_, Z = train_onestage(graph, cfg)
        else:
            self.model_, Z = gae_train(graph, cfg)
        self.graph_ = graph
        self.embedding_ = Z
        self.n_features_in_ = graph.n_nodes + graph.n_features
        return self

    def transform(self, X=None):
        """Embedding of the fitted graph; ``X`` must be that graph or ``None``."""
        check_is_fitted(self, "embedding_")
        if X is not None and check_graph(X).n_nodes != self.graph_.n_nodes:
            raise ValueError("transform only applies to the graph seen in fit")
        return self.embedding_


class ModularityCommunities(ClusterMixin, BaseEstimator):
    """Communities from K-means on a modularity embedding.

    Parameters
    ----------
    n_communities : int or None, default=None
        Fixed number of clusters. ``None`` sweeps ``k_range`` and keeps the
        highest-modularity partition.
    k_range : tuple of int, default=(2, 10)
        Inclusive sweep range.
    restarts : int, default=10
    embedding : ModularityEmbedding or None
        Embedding estimator; a default two-stage one when ``None``.

    Attributes
    ----------
    labels_ : ndarray of shape (n_nodes,)
    cluster_centers_ : ndarray of shape (n_communities, d)
    modularity_ : float
    sweep_table_ : list of dict or None
    embedding_ : ModularityEmbedding (fitted)
    """

    def __init__(self, n_communities=None, k_range=(2, 10), restarts=DEFAULT_RESTARTS, embedding=None):
        self.n_communities = n_communities
        self.k_range = k_range
        self.restarts = restarts
        self.embedding = embedding

    def fit(self, X, y=None, features=None):
        from sklearn.base import clone

        emb = clone(self.embedding) if self.embedding is not None else ModularityEmbedding()
        emb.fit(X, features=features)
        graph, Z = emb.graph_, emb.embedding_
        seed = emb.seed
        if self.n_communities is None:
            lo, hi = self.k_range
            sweep = sweep_k(Z, graph, range(lo, hi + 1), self.restarts, seed)
            res, self.sweep_table_ = sweep.best, sweep.table
        else:
            res, self.sweep_table_ = kmeans_fit(Z, self.n_communities, self.restarts, seed), None
        self.embedding_ = emb
        self.labels_ = res.labels
        self.cluster_centers_ = res.centroids
        self.modularity_ = modularity_score(graph, res.labels)
        self._inference = {}
        return self

    def predict(self, X=None):
        """Fitted labels; new nodes go through :meth:`predict_new_nodes`."""
        check_is_fitted(self, "labels_")
        return self.labels_

    def predict_new_nodes(self, nodes, variant="apam", n_layers=1, seed=0):
        """Assign nodes outside the fitted graph to existing communities.

        Parameters
        ----------
        nodes : iterable of NewNode or of stub lists
        variant : {"apam", "plain"}
        n_layers : int
            Depth of the (fine-tuned) inference encoder.
        """
        check_is_fitted(self, "labels_")
        if self.embedding_.method != "twostage":
            raise ValueError("new-node inference needs the two-stage encoder")
        if variant not in ("apam", "plain"):
            raise ValueError("variant must be 'apam' or 'plain'")
        key = n_layers
        if key not in self._inference:
            self._inference[key] = prepare_inference(self.embedding_.model_, self.embedding_.graph_, self.labels_, n_layers)
        inf = self._inference[key]
        fn = infer_apam if variant == "apam" else infer_plain
        rng = derive_rng(seed, "infer")
        out = []
        for node in nodes:
            if not isinstance(node, NewNode):
                node = NewNode(node)
            out.append(fn(inf, node, rng)[0])
        return np.asarray(out, dtype=np.int64)

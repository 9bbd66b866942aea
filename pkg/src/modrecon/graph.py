"""Undirected simple graphs and the matrices derived from them.

Node labels from input files are remapped to contiguous indices ``0..N-1`` in
order of first appearance; the table is kept on :attr:`Graph.id_map` so
outputs can be written back with the original labels.
"""

from __future__ import annotations

import logging
import os
import re
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np
import scipy.sparse as sp

logger = logging.getLogger(__name__)


class GraphFormatError(ValueError):
    """Raised when an input file cannot be parsed; carries file/line context."""

    def __init__(self, message, path=None, lineno=None):
        where = ""
        if path is not None:
            where = f"{path}"
            if lineno is not None:
                where += f":{lineno}"
            where += ": "
        super().__init__(where + message)
        self.path = path
        self.lineno = lineno


@dataclass(frozen=True, eq=False)
class Graph:
    """Immutable undirected simple graph.

    Parameters
    ----------
    n_nodes : int
        Number of nodes.
    edges : ndarray of shape (M, 2)
        Unique undirected edges with ``edges[:, 0] < edges[:, 1]``.
    features : ndarray of shape (N, F), optional
        Node features (L2-normalized rows when loaded from file).
    labels : ndarray of shape (N,), optional
        Ground-truth community ids in ``0..K-1``.
    id_map : dict, optional
        Original label -> contiguous index.
    """

    n_nodes: int
    edges: np.ndarray
    features: np.ndarray | None = None
    labels: np.ndarray | None = None
    id_map: dict = field(default_factory=dict)

    @classmethod
    def from_edges(cls, n_nodes, edges, features=None, labels=None, id_map=None):
        """Build a graph from an arbitrary pair list, dropping self-loops and duplicates."""
        e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if e.size and (e.min() < 0 or e.max() >= n_nodes):
            raise ValueError("edge endpoint out of range")
        loops = e[:, 0] == e[:, 1]
        e = np.sort(e[~loops], axis=1)
        uniq = np.unique(e, axis=0) if len(e) else e.reshape(0, 2)
        n_dup = len(e) - len(uniq)
        if loops.any() or n_dup:
            logger.info("dropped %d self-loops and %d duplicate edges", int(loops.sum()), n_dup)
        if id_map is None:
            id_map = {i: i for i in range(n_nodes)}
        if features is not None:
            features = np.asarray(features, dtype=np.float64)
            if features.shape[0] != n_nodes:
                raise ValueError(f"features have {features.shape[0]} rows, expected {n_nodes}")
        if labels is not None:
            labels = np.asarray(labels, dtype=np.int64)
            if labels.shape != (n_nodes,):
                raise ValueError("labels must have one entry per node")
        return cls(int(n_nodes), uniq, features, labels, dict(id_map))

    @classmethod
    def from_adjacency(cls, A, features=None, labels=None):
        """Build from a symmetric 0/1 adjacency (dense array or scipy sparse)."""
        A = sp.coo_matrix(A)
        if A.shape[0] != A.shape[1]:
            raise ValueError("adjacency must be square")
        mask = A.data != 0
        pairs = np.column_stack([A.row[mask], A.col[mask]])
        return cls.from_edges(A.shape[0], pairs, features, labels)

    @classmethod
    def from_networkx(cls, G, label_attr=None):
        """Convert a networkx graph; ``label_attr`` names a node attribute holding ground truth."""
        nodes = list(G.nodes())
        id_map = {u: i for i, u in enumerate(nodes)}
        edges = [(id_map[u], id_map[v]) for u, v in G.edges()]
        labels = None
        if label_attr is not None:
            raw = [G.nodes[u][label_attr] for u in nodes]
            _, labels = np.unique(np.asarray(raw, dtype=object).astype(str), return_inverse=True)
        return cls.from_edges(len(nodes), edges, labels=labels, id_map=id_map)

    # derived quantities -------------------------------------------------

    @property
    def total_edges(self):
        return len(self.edges)

    @cached_property
    def adjacency(self):
        """CSR adjacency with sorted column indices."""
        n = self.n_nodes
        if len(self.edges) == 0:
            return sp.csr_matrix((n, n), dtype=np.float64)
        r = np.concatenate([self.edges[:, 0], self.edges[:, 1]])
        c = np.concatenate([self.edges[:, 1], self.edges[:, 0]])
        A = sp.csr_matrix((np.ones(len(r)), (r, c)), shape=(n, n))
        A.sort_indices()
        return A

    @cached_property
    def degrees(self):
        return np.diff(self.adjacency.indptr).astype(np.int64)

    def neighbors(self, v):
        A = self.adjacency
        return A.indices[A.indptr[v]:A.indptr[v + 1]]

    @property
    def n_features(self):
        return 0 if self.features is None else self.features.shape[1]

    @property
    def inverse_id_map(self):
        inv = [None] * self.n_nodes
        for label, i in self.id_map.items():
            inv[i] = label
        return inv

    def with_features(self, features):
        return replace(self, features=np.asarray(features, dtype=np.float64))

    def with_labels(self, labels):
        return replace(self, labels=np.asarray(labels, dtype=np.int64))

    def subgraph(self, nodes):
        """Induced subgraph on ``nodes`` (reindexed in the given order)."""
        nodes = np.asarray(nodes, dtype=np.int64)
        pos = np.full(self.n_nodes, -1, dtype=np.int64)
        pos[nodes] = np.arange(len(nodes))
        e = pos[self.edges]
        keep = (e >= 0).all(axis=1)
        inv = self.inverse_id_map
        return Graph.from_edges(
            len(nodes),
            e[keep],
            features=None if self.features is None else self.features[nodes],
            labels=None if self.labels is None else self.labels[nodes],
            id_map={inv[v]: i for i, v in enumerate(nodes)},
        )


# file ingestion ---------------------------------------------------------


def _data_lines(path):
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            s = line.strip()
            if not s or s.startswith("#"):
                continue
            yield lineno, s


def load_edge_list(path, directed_hint=False):
    """Read a whitespace-separated edge list into a :class:`Graph`.

    Lines starting with ``#`` are comments. Labels are remapped in order of
    first appearance. With ``directed_hint`` the file is assumed to list arcs;
    both directions collapse to one undirected edge either way.
    """
    if not os.path.isfile(path):
        raise GraphFormatError("file not found or unreadable", path)
    id_map = {}
    pairs = []
    for lineno, s in _data_lines(path):
        tok = s.split()
        if len(tok) != 2:
            raise GraphFormatError(f"expected 2 tokens, got {len(tok)}", path, lineno)
        ij = []
        for t in tok:
            if t not in id_map:
                id_map[t] = len(id_map)
            ij.append(id_map[t])
        pairs.append(ij)
    if not pairs:
        raise GraphFormatError("empty graph", path)
    if directed_hint:
        logger.info("%s: arcs symmetrized into undirected edges", path)
    g = Graph.from_edges(len(id_map), pairs, id_map=id_map)
    if g.total_edges == 0:
        raise GraphFormatError("graph has no edges after dropping self-loops", path)
    return g


def _natural_key(label):
    return (0, int(label), "") if re.fullmatch(r"-?\d+", str(label)) else (1, 0, str(label))


def load_features(path, graph):
    """Attach L2-normalized node features read from a comma-separated file.

    Two layouts are accepted. Plain rows ``v1,v2,...`` are matched to nodes by
    sorting the original labels (numerically when they are integers). Keyed
    rows ``label,v1 v2 ...`` name the node explicitly.
    """
    rows = list(_data_lines(path))
    keyed = bool(rows) and all(
        len(s.split(",")) == 2 and len(s.split(",")[1].split()) > 1 for _, s in rows
    )
    n = graph.n_nodes
    if len(rows) != n:
        raise GraphFormatError(f"{len(rows)} feature rows for {n} nodes", path)
    X = None
    if keyed:
        for lineno, s in rows:
            label, vec = s.split(",")
            idx = _text_ids(graph).get(label.strip())
            if idx is None:
                raise GraphFormatError(f"unknown node label {label!r}", path, lineno)
            vals = _parse_floats(vec.split(), path, lineno)
            if X is None:
                X = np.zeros((n, len(vals)))
            X[idx] = vals
    else:
        order = sorted(graph.id_map, key=_natural_key)
        parsed = [_parse_floats(s.split(","), path, lineno) for lineno, s in rows]
        X = np.zeros((n, len(parsed[0])))
        for label, vals in zip(order, parsed):
            X[graph.id_map[label]] = vals
    norms = np.linalg.norm(X, axis=1, keepdims=True)
    X = np.divide(X, norms, out=np.zeros_like(X), where=norms > 0)
    return graph.with_features(X)


def _text_ids(graph):
    """Node-label lookup keyed by the label's text, as it appears in files."""
    return {str(k): v for k, v in graph.id_map.items()}


def _parse_floats(tokens, path, lineno):
    try:
        return np.array([float(t) for t in tokens])
    except ValueError:
        raise GraphFormatError("non-numeric feature value", path, lineno) from None


def load_labels(path, graph):
    """Attach ground-truth communities from ``node-label community-id`` lines."""
    raw = {}
    ids = _text_ids(graph)
    for lineno, s in _data_lines(path):
        tok = s.split()
        if len(tok) != 2:
            raise GraphFormatError(f"expected 2 tokens, got {len(tok)}", path, lineno)
        if tok[0] not in ids:
            raise GraphFormatError(f"unknown node label {tok[0]!r}", path, lineno)
        raw[ids[tok[0]]] = tok[1]
    if len(raw) != graph.n_nodes:
        raise GraphFormatError(f"labels cover {len(raw)} of {graph.n_nodes} nodes", path)
    comm = sorted(set(raw.values()), key=_natural_key)
    cid = {c: i for i, c in enumerate(comm)}
    return graph.with_labels([cid[raw[i]] for i in range(graph.n_nodes)])


def save_assignment(path, graph, labels):
    """Write ``node-label community-id`` lines using original labels."""
    inv = graph.inverse_id_map
    with open(path, "w") as fh:
        for i, c in enumerate(np.asarray(labels)):
            fh.write(f"{inv[i]} {int(c)}\n")


def load_assignment(path, graph):
    """Inverse of :func:`save_assignment`: community ids in node-index order."""
    out = np.full(graph.n_nodes, -1, dtype=np.int64)
    ids = _text_ids(graph)
    for lineno, s in _data_lines(path):
        tok = s.split()
        if len(tok) != 2:
            raise GraphFormatError(f"expected 2 tokens, got {len(tok)}", path, lineno)
        if tok[0] not in ids:
            raise GraphFormatError(f"unknown node label {tok[0]!r}", path, lineno)
        try:
            out[ids[tok[0]]] = int(tok[1])
        except ValueError:
            raise GraphFormatError(f"community id {tok[1]!r} is not an integer", path, lineno) from None
    if np.any(out < 0):
        raise GraphFormatError(f"assignment covers {int((out >= 0).sum())} of {graph.n_nodes} nodes", path)
    return out


# derived matrices ------------------------------------------------------


def modularity_matrix(graph):
    """Dense modularity matrix ``B = A - k k^T / 2M``."""
    if graph.total_edges == 0:
        raise ValueError("modularity matrix undefined for an edgeless graph")
    k = graph.degrees.astype(np.float64)
    B = graph.adjacency.toarray()
    B -= np.outer(k, k) / (2.0 * graph.total_edges)
    return B


def modularity_rows(graph, rows):
    """Rows of ``B`` for the given node indices, without building the full matrix."""
    if graph.total_edges == 0:
        raise ValueError("modularity matrix undefined for an edgeless graph")
    rows = np.asarray(rows, dtype=np.int64)
    k = graph.degrees.astype(np.float64)
    out = graph.adjacency[rows].toarray()
    out -= np.outer(k[rows], k) / (2.0 * graph.total_edges)
    return out


def modularity_block(graph, rows, cols):
    """Sub-block ``B[rows][:, cols]``."""
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    k = graph.degrees.astype(np.float64)
    blk = graph.adjacency[rows][:, cols].toarray()
    blk -= np.outer(k[rows], k[cols]) / (2.0 * graph.total_edges)
    return blk


def normalized_adjacency(graph, sparse=False):
    """``D^-1/2 (A + I) D^-1/2`` with ``D`` the row sums of ``A + I``."""
    n = graph.n_nodes
    A = graph.adjacency + sp.identity(n, format="csr")
    dinv = 1.0 / np.sqrt(np.asarray(A.sum(axis=1)).ravel())
    D = sp.diags(dinv)
    An = (D @ A @ D).tocsr()
    return An if sparse else An.toarray()

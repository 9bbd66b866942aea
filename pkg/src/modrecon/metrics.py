"""Partition quality: modularity, normalized mutual information, accuracy."""

import math

import numpy as np
from scipy.optimize import linear_sum_assignment

from .graph import modularity_matrix

MAX_ACCURACY_K = 20


def _check_labels(graph, labels):
    labels = np.asarray(labels)
    if labels.shape != (graph.n_nodes,):
        raise ValueError(f"assignment covers {labels.size} nodes, graph has {graph.n_nodes}")
    return labels


def modularity_score(graph, labels):
    """Newman modularity of a hard partition.

    Evaluated edge-wise as ``sum_c [L_c / M - (d_c / 2M)^2]`` so no N x N
    matrix is formed.
    """
    labels = _check_labels(graph, labels)
    m = graph.total_edges
    if m == 0:
        raise ValueError("modularity undefined for an edgeless graph")
    _, c = np.unique(labels, return_inverse=True)
    e = graph.edges
    internal = np.bincount(c[e[:, 0]][c[e[:, 0]] == c[e[:, 1]]], minlength=c.max() + 1)
    deg_sum = np.bincount(c, weights=graph.degrees, minlength=c.max() + 1)
    return float(internal.sum() / m - np.sum((deg_sum / (2.0 * m)) ** 2))


def modularity_trace(graph, labels, B=None):
    """Modularity as ``Tr(H^T B H) / 2M`` with one-hot membership ``H``."""
    labels = _check_labels(graph, labels)
    if B is None:
        B = modularity_matrix(graph)
    _, c = np.unique(labels, return_inverse=True)
    H = np.zeros((graph.n_nodes, c.max() + 1))
    H[np.arange(graph.n_nodes), c] = 1.0
    return float(np.trace(H.T @ B @ H) / (2.0 * graph.total_edges))


def contingency(a, b):
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    C = np.zeros((ai.max() + 1, bi.max() + 1))
    np.add.at(C, (ai, bi), 1.0)
    return C


def _entropy(p):
    p = p[p > 0]
    return -math.fsum(p * np.log(p))


def nmi(a, b):
    """Normalized mutual information, arithmetic-mean normalization.

    When both partitions are a single cluster the score is 1 if they are
    identical (always, in that case); if only one side is constant it is 0.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError("partitions must cover the same nodes")
    n = a.size
    C = contingency(a, b) / n
    pa, pb = C.sum(axis=1), C.sum(axis=0)
    ha, hb = _entropy(pa), _entropy(pb)
    if ha == 0.0 and hb == 0.0:
        return 1.0
    nz = C > 0
    if np.all(nz.sum(axis=0) == 1) and np.all(nz.sum(axis=1) == 1):
        return 1.0  # same partition up to relabeling
    # exactly rounded sums keep the score symmetric in (a, b)
    mi = math.fsum(C[nz] * np.log(C[nz] / np.outer(pa, pb)[nz]))
    return float(np.clip(mi / ((ha + hb) / 2.0), 0.0, 1.0))


def accuracy(pred, truth):
    """Fraction of nodes correctly labeled under the best one-to-one label matching."""
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape:
        raise ValueError("partitions must cover the same nodes")
    C = contingency(pred, truth)
    if max(C.shape) > MAX_ACCURACY_K:
        raise ValueError(f"exact matching limited to {MAX_ACCURACY_K} communities, got {max(C.shape)}")
    r, c = linear_sum_assignment(C, maximize=True)
    return float(C[r, c].sum() / pred.size)

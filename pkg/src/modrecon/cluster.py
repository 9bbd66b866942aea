"""K-means with seeded k-means++ restarts, nearest-centroid assignment, K sweeps."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .metrics import modularity_score

MAX_ITER = 300
SHIFT_TOL = 1e-8
DEFAULT_RESTARTS = 10


@dataclass
class KMeansResult:
    centroids: np.ndarray
    labels: np.ndarray
    inertia: float
    inertia_trace: list = field(default_factory=list)
    n_iter: int = 0

    @property
    def k(self):
        return self.centroids.shape[0]


def _sq_dist(Z, C):
    diff = Z[:, None, :] - C[None, :, :]
    return np.einsum("nkd,nkd->nk", diff, diff)


def _plusplus(Z, k, rng):
    n = Z.shape[0]
    centers = [Z[rng.integers(n)]]
    d2 = np.sum((Z - centers[0]) ** 2, axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            idx = rng.integers(n)
        else:
            idx = int(np.searchsorted(np.cumsum(d2), rng.random() * total, side="right"))
            idx = min(idx, n - 1)
        centers.append(Z[idx])
        d2 = np.minimum(d2, np.sum((Z - Z[idx]) ** 2, axis=1))
    return np.array(centers)


def _lloyd(Z, C, max_iter, tol):
    trace = []
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        D = _sq_dist(Z, C)
        labels = np.argmin(D, axis=1)
        point_d = D[np.arange(len(Z)), labels]
        trace.append(float(point_d.sum()))
        newC = C.copy()
        counts = np.bincount(labels, minlength=len(C))
        for j in range(len(C)):
            if counts[j]:
                newC[j] = Z[labels == j].mean(axis=0)
        for j in np.flatnonzero(counts == 0):
            # re-seed at the point farthest from its assigned centroid
            far = int(np.argmax(point_d))
            newC[j] = Z[far]
            point_d[far] = 0.0
        shift = float(np.max(np.abs(newC - C)))
        C = newC
        if shift < tol:
            break
    D = _sq_dist(Z, C)
    labels = np.argmin(D, axis=1)
    inertia = float(D[np.arange(len(Z)), labels].sum())
    trace.append(inertia)
    return C, labels, inertia, trace, n_iter


def kmeans_fit(Z, k, restarts=DEFAULT_RESTARTS, seed=0, max_iter=MAX_ITER, tol=SHIFT_TOL):
    """Best-inertia Lloyd run over ``restarts`` k-means++ initializations.

    Restart ``r`` draws from ``default_rng(seed + r)``; ties in inertia keep
    the lowest restart index.
    """
    Z = np.asarray(Z, dtype=np.float64)
    if Z.ndim != 2 or Z.shape[0] == 0:
        raise ValueError("need a non-empty 2-D embedding")
    if not 1 <= k <= Z.shape[0]:
        raise ValueError(f"k={k} must be between 1 and the number of points {Z.shape[0]}")
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    best = None
    for r in range(restarts):
        rng = np.random.default_rng(seed + r)
        C, labels, inertia, trace, n_iter = _lloyd(Z, _plusplus(Z, k, rng), max_iter, tol)
        if best is None or inertia < best.inertia:
            best = KMeansResult(C, labels, inertia, trace, n_iter)
    return best


def assign_nearest(centroids, z):
    """Index of the nearest centroid (Euclidean), lowest index on ties.

    Rows containing NaN (communities with no members) are never chosen.
    """
    centroids = np.asarray(centroids, dtype=np.float64)
    if centroids.size == 0 or np.all(np.isnan(centroids)):
        raise ValueError("no centroids")
    d = np.sum((centroids - np.asarray(z, dtype=np.float64)) ** 2, axis=1)
    return int(np.argmin(np.where(np.isnan(d), np.inf, d)))


@dataclass
class SweepResult:
    best_k: int
    table: list
    results: dict

    @property
    def best(self):
        return self.results[self.best_k]


def sweep_k(Z, graph, k_range, restarts=DEFAULT_RESTARTS, seed=0):
    """Cluster for every ``k`` in ``k_range`` and keep the highest-modularity one.

    ``table`` rows are ``{"k", "Q", "inertia"}`` dicts in sweep order.
    """
    ks = list(k_range)
    if not ks:
        raise ValueError("empty k range")
    n = graph.n_nodes
    if len(ks) > 1 and (min(ks) < 2 or max(ks) > n - 1):
        raise ValueError(f"k range must lie in [2, {n - 1}]")
    table, results = [], {}
    best_k, best_q = None, -np.inf
    for k in ks:
        res = kmeans_fit(Z, k, restarts, seed)
        q = modularity_score(graph, res.labels)
        results[k] = res
        table.append({"k": k, "Q": q, "inertia": res.inertia})
        if q > best_q:
            best_k, best_q = k, q
    return SweepResult(best_k, table, results)

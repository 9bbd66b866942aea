"""Seeded planted-partition graphs for scaling and inference benchmarks."""

import numpy as np

from .graph import Graph


def _uniform_pairs(rng, count, sampler):
    got = []
    need = count
    while need > 0:
        u, v = sampler(int(need * 1.2) + 16)
        keep = u != v
        pairs = np.column_stack([u[keep], v[keep]])[:need]
        got.append(pairs)
        need -= len(pairs)
    return np.vstack(got) if got else np.empty((0, 2), dtype=np.int64)


def planted_partition(n_nodes, n_communities=10, avg_degree=10.0, ratio=4.0, seed=0):
    """Equal-size communities with expected in/out degree split ``ratio : 1``.

    Edge counts per block are binomial and endpoints uniform inside the
    block; the rare duplicate draw is dropped, so realized degrees sit
    slightly below the target. Node ids are shuffled so that index order
    says nothing about membership. Ground truth is attached as ``labels``.
    """
    if n_communities < 1 or n_nodes < 2 * n_communities:
        raise ValueError("need at least two nodes per community")
    rng = np.random.default_rng(seed)
    labels = np.arange(n_nodes) * n_communities // n_nodes
    sizes = np.bincount(labels, minlength=n_communities)
    starts = np.concatenate([[0], np.cumsum(sizes)[:-1]])
    d_in = avg_degree * ratio / (ratio + 1.0)
    d_out = avg_degree / (ratio + 1.0)

    chunks = []
    for c in range(n_communities):
        s, off = int(sizes[c]), int(starts[c])
        pairs = s * (s - 1) // 2
        p_in = min(1.0, d_in / max(s - 1, 1))
        m = rng.binomial(pairs, p_in)
        chunks.append(_uniform_pairs(rng, m, lambda q: (off + rng.integers(0, s, q), off + rng.integers(0, s, q))))

    cross_pairs = (n_nodes * n_nodes - int(np.sum(sizes.astype(np.int64) ** 2))) // 2
    p_out = min(1.0, d_out * n_nodes / (2.0 * cross_pairs))
    m_out = rng.binomial(cross_pairs, p_out)

    def cross(q):
        u = rng.integers(0, n_nodes, q)
        v = rng.integers(0, n_nodes, q)
        same = labels[u] == labels[v]
        v[same] = u[same]  # rejected as self-pairs
        return u, v

    chunks.append(_uniform_pairs(rng, m_out, cross))
    perm = rng.permutation(n_nodes)
    shuffled = np.empty(n_nodes, dtype=np.int64)
    shuffled[perm] = labels
    return Graph.from_edges(n_nodes, perm[np.vstack(chunks)], labels=shuffled)

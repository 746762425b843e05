"""Synthetic datasets with known structure.

All generators return a :class:`~argnn.graph.Graph` with seeded features
and a stratified 60/20/20 node split.
"""
from __future__ import annotations

import itertools

import numpy as np

from .graph import Graph, stratified_split


def _features(labels, num_features: int, signal: float, rng: np.random.Generator) -> np.ndarray:
    labels = np.asarray(labels)
    x = rng.normal(size=(len(labels), num_features))
    if signal:
        centers = rng.normal(size=(labels.max() + 1, num_features))
        centers /= np.linalg.norm(centers, axis=1, keepdims=True)
        x += signal * centers[labels]
    return x


def _finish(n, edges, labels, num_classes, num_features, signal, seed) -> Graph:
    rng = np.random.default_rng(seed)
    x = _features(labels, num_features, signal, rng)
    return Graph(n, np.asarray(edges, dtype=np.int64).reshape(-1, 2), x, labels, num_classes,
                 stratified_split(labels, seed))


def clique_edges(nodes) -> list[tuple[int, int]]:
    return list(itertools.combinations(nodes, 2))


def two_cliques(k: int = 6, num_features: int = 8, signal: float = 2.0, seed: int = 0) -> Graph:
    """Two k-cliques joined by a single bridge edge; the clique is the class."""
    if k < 2:
        raise ValueError("cliques need at least 2 nodes")
    a, b = list(range(k)), list(range(k, 2 * k))
    edges = clique_edges(a) + clique_edges(b) + [(k - 1, k)]
    labels = np.array([0] * k + [1] * k)
    return _finish(2 * k, edges, labels, 2, num_features, signal, seed)


def tree_plus_clique(depth: int = 4, k: int = 16, num_features: int = 8, signal: float = 0.0,
                     seed: int = 0) -> Graph:
    """Balanced binary tree of the given depth, its root bridged to a k-clique.

    Four classes by region: tree internal nodes, tree leaves, and the two
    halves of the clique.
    """
    if depth < 1 or k < 2:
        raise ValueError("need depth >= 1 and k >= 2")
    n_tree = 2 ** (depth + 1) - 1
    edges = [((c - 1) // 2, c) for c in range(1, n_tree)]
    clique = list(range(n_tree, n_tree + k))
    edges += clique_edges(clique) + [(0, n_tree)]
    first_leaf = 2 ** depth - 1
    labels = np.array([0] * first_leaf + [1] * (n_tree - first_leaf)
                      + [2] * (k // 2) + [3] * (k - k // 2))
    return _finish(n_tree + k, edges, labels, 4, num_features, signal, seed)


def random_graph(n: int = 20, p: float = 0.2, num_features: int = 8, num_classes: int = 3,
                 signal: float = 0.0, seed: int = 0) -> Graph:
    """Erdős–Rényi G(n, p) with uniformly random labels."""
    if n < 1 or not 0 <= p <= 1:
        raise ValueError("invalid Erdős–Rényi parameters")
    rng = np.random.default_rng(seed)
    upper = np.triu(rng.random((n, n)) < p, 1)
    edges = np.argwhere(upper)
    labels = rng.integers(0, num_classes, n)
    return _finish(n, edges, labels, num_classes, num_features, signal, seed + 1)


def heterophilic(n: int = 251, num_edges: int = 466, num_classes: int = 5, homophily: float = 0.2,
                 num_features: int = 64, signal: float = 1.0, seed: int = 0) -> Graph:
    """WebKB-sized graph where most edges join class ``c`` to class ``c + 1 mod C``.

    Own features carry a weak class signal; the neighbourhood reveals more.
    """
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, num_classes, n)
    members = [np.flatnonzero(labels == c) for c in range(num_classes)]
    edges: set[tuple[int, int]] = set()
    while len(edges) < num_edges:
        i = int(rng.integers(n))
        c = labels[i] if rng.random() < homophily else (labels[i] + 1) % num_classes
        j = int(rng.choice(members[c]))
        if i != j:
            edges.add((min(i, j), max(i, j)))
    return _finish(n, sorted(edges), labels, num_classes, num_features, signal, seed + 1)


GENERATORS = {
    "two-cliques": two_cliques,
    "tree-plus-clique": tree_plus_clique,
    "random": random_graph,
    "heterophilic": heterophilic,
}

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from argnn.fixtures import GENERATORS, heterophilic, random_graph, tree_plus_clique, two_cliques
from argnn.graph import homophily_ratio


@given(st.integers(2, 12))
def test_two_cliques_counts(k):
    g = two_cliques(k)
    assert g.num_nodes == 2 * k
    assert g.num_edges == k * (k - 1) + 1
    assert homophily_ratio(g) == pytest.approx(1 - 1 / g.num_edges)


@given(st.integers(1, 6), st.integers(2, 20))
def test_tree_plus_clique_counts(depth, k):
    g = tree_plus_clique(depth, k)
    n_tree = 2 ** (depth + 1) - 1
    assert g.num_nodes == n_tree + k
    assert g.num_edges == (n_tree - 1) + k * (k - 1) // 2 + 1


def test_tree_plus_clique_regions():
    g = tree_plus_clique(4, 16)
    np.testing.assert_array_equal(np.bincount(g.labels), [15, 16, 8, 8])
    # leaves have degree one, clique nodes k - 1 (plus the bridge end)
    assert np.all(g.degrees[15:31] == 1)
    assert np.all(g.degrees[32:] == 15) and g.degrees[31] == 16


def test_generators_are_seeded():
    for make in GENERATORS.values():
        a, b = make(seed=3), make(seed=3)
        assert a.structurally_equal(b)


def test_heterophilic_matches_webkb_scale():
    g = heterophilic()
    assert (g.num_nodes, g.num_edges) == (251, 466)
    assert abs(homophily_ratio(g) - 0.2) < 0.05


def test_random_graph_density():
    g = random_graph(200, 0.1, seed=0)
    assert abs(g.num_edges / (200 * 199 / 2) - 0.1) < 0.01


def test_invalid_sizes():
    with pytest.raises(ValueError):
        two_cliques(1)
    with pytest.raises(ValueError):
        tree_plus_clique(0, 4)
    with pytest.raises(ValueError):
        random_graph(5, 1.5)

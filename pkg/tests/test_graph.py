import json
import os
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from argnn.graph import (DatasetError, canonical_edges, edge_split, homophily_ratio,
                         load_dataset, save_dataset, stratified_split)
from argnn.reference import BENCHMARKS

from conftest import make_graph

DATA = Path(__file__).parent / "data"


def write_dir(root: Path, n, edges_text, labels, features=None, num_classes=2, num_features=1):
    root.mkdir(parents=True, exist_ok=True)
    (root / "meta.json").write_text(json.dumps(
        {"num_nodes": n, "num_features": num_features, "num_classes": num_classes}))
    (root / "edges.tsv").write_text(edges_text)
    if features is None:
        features = [[0.0] * num_features for _ in range(n)]
    (root / "features.csv").write_text("".join(",".join(map(str, r)) + "\n" for r in features))
    (root / "labels.tsv").write_text("".join(f"{y}\n" for y in labels))
    return root


def test_duplicate_and_reversed_edges_collapse(tmp_path):
    root = write_dir(tmp_path / "d", 3, "0\t1\n1\t2\n1 0\n", [0, 0, 1])
    g = load_dataset(root)
    np.testing.assert_array_equal(g.edges, [[0, 1], [1, 2]])
    np.testing.assert_array_equal(g.degrees, [1, 2, 1])


def test_label_count_mismatch(tmp_path):
    root = write_dir(tmp_path / "d", 3, "0\t1\n", [0, 0, 1, 1])
    with pytest.raises(DatasetError, match="meta/content mismatch"):
        load_dataset(root)


def test_feature_width_mismatch(tmp_path):
    root = write_dir(tmp_path / "d", 2, "0\t1\n", [0, 1], features=[[1.0, 2.0], [3.0]],
                     num_features=2)
    with pytest.raises(DatasetError, match="meta/content mismatch"):
        load_dataset(root)


def test_edge_out_of_range_names_line(tmp_path):
    root = write_dir(tmp_path / "d", 3, "0\t1\n1\t3\n", [0, 0, 1])
    with pytest.raises(DatasetError, match="edges.tsv:2"):
        load_dataset(root)


def test_malformed_edge_line(tmp_path):
    root = write_dir(tmp_path / "d", 3, "0\t1\nzero one\n", [0, 0, 1])
    with pytest.raises(DatasetError, match="edges.tsv:2"):
        load_dataset(root)


def test_missing_directory(tmp_path):
    with pytest.raises(DatasetError, match="not found"):
        load_dataset(tmp_path / "nowhere")


def test_mini_fixture_round_trip(tmp_path):
    g = load_dataset(DATA / "mini_cora")
    assert (g.num_nodes, g.num_edges, g.num_features, g.num_classes) == (20, 30, 5, 3)
    again = load_dataset(save_dataset(g, tmp_path / "copy"))
    assert again.structurally_equal(g)


def test_float_features_round_trip_exactly(tmp_path, rng):
    g = make_graph(4, [(0, 1), (2, 3)], features=rng.normal(size=(4, 3)) * 1e-7,
                   labels=[0, 1, 0, 1], splits=stratified_split([0, 1, 0, 1], 0))
    assert load_dataset(save_dataset(g, tmp_path / "g")).structurally_equal(g)


def test_self_loops_dropped():
    assert canonical_edges([(0, 0), (2, 1), (1, 2)]).tolist() == [[1, 2]]


def test_overlapping_splits_rejected():
    with pytest.raises(DatasetError, match="overlap"):
        make_graph(3, [(0, 1)], splits={"train": [0, 1], "test": [1]})


def test_homophily_triangle():
    tri = [(0, 1), (1, 2), (0, 2)]
    assert homophily_ratio(make_graph(3, tri, labels=[1, 1, 1])) == 1.0
    assert homophily_ratio(make_graph(3, tri, labels=[0, 0, 1])) == pytest.approx(1 / 3)


def test_homophily_needs_edges():
    with pytest.raises(DatasetError):
        homophily_ratio(make_graph(3, []))


def test_isolated_nodes_allowed():
    g = make_graph(4, [(0, 1)])
    np.testing.assert_array_equal(g.degrees, [1, 1, 0, 0])
    assert len(g.neighbor_lists[3]) == 0


@given(st.lists(st.tuples(st.integers(0, 9), st.integers(0, 9)), max_size=40),
       st.permutations(range(10)))
def test_permute_preserves_structure(pairs, perm):
    g = make_graph(10, pairs, features=np.arange(10.0)[:, None], labels=np.arange(10) % 2)
    h = g.permute(perm)
    assert h.num_edges == g.num_edges
    # new node k is old node perm[k]
    np.testing.assert_array_equal(h.features[:, 0], np.asarray(perm, dtype=float))
    old = {tuple(e) for e in g.edges.tolist()}
    new = {tuple(sorted((perm[a], perm[b]))) for a, b in h.edges.tolist()}
    assert old == new
    np.testing.assert_array_equal(h.degrees, g.degrees[list(perm)])


@given(st.lists(st.integers(0, 3), min_size=5, max_size=60), st.integers(0, 100))
def test_stratified_split_partitions(labels, seed):
    s = stratified_split(labels, seed)
    allidx = np.sort(np.concatenate([s["train"], s["val"], s["test"]]))
    np.testing.assert_array_equal(allidx, np.arange(len(labels)))
    again = stratified_split(labels, seed)
    for k in s:
        np.testing.assert_array_equal(s[k], again[k])


def test_edge_split_partitions():
    edges = [(i, j) for i in range(8) for j in range(i + 1, 8)]
    s = edge_split(edges, 0)
    total = sum(len(v) for v in s.values())
    assert total == len(edges)
    assert len(s["train_pos"]) == round(0.8 * len(edges))


def _real(name):
    root = os.environ.get("ARGNN_DATA_DIR")
    if not root or not (Path(root) / name).is_dir():
        pytest.skip(f"set ARGNN_DATA_DIR to a directory holding a converted {name!r} dataset")
    return load_dataset(Path(root) / name)


@pytest.mark.parametrize("name", ["cora", "wisconsin"])
def test_published_homophily(name):
    g = _real(name)
    assert homophily_ratio(g) == pytest.approx(BENCHMARKS[name].homophily, abs=5e-3)

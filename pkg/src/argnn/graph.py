"""Attributed graphs on disk and in memory.

A dataset directory holds ``meta.json``, ``edges.tsv``, ``features.csv``,
``labels.tsv`` and ``splits.json``. Edges are always stored undirected in
canonical ``(min, max)`` order without self-loops or duplicates.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

NODE_SPLITS = ("train", "val", "test")
EDGE_SPLITS = ("train_pos", "val_pos", "test_pos")


class DatasetError(ValueError):
    pass


def canonical_edges(pairs, num_nodes: int | None = None) -> np.ndarray:
    """Deduplicate, drop self-loops and sort an edge list into (min, max) rows."""
    arr = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    if num_nodes is not None and arr.size and (arr.min() < 0 or arr.max() >= num_nodes):
        raise DatasetError("edge index out of range")
    arr = arr[arr[:, 0] != arr[:, 1]]
    arr = np.sort(arr, axis=1)
    if len(arr) == 0:
        return np.zeros((0, 2), dtype=np.int64)
    return np.unique(arr, axis=0)


@dataclass(frozen=True, eq=False)
class Graph:
    num_nodes: int
    edges: np.ndarray  # (m, 2) canonical undirected pairs
    features: np.ndarray  # (n, F)
    labels: np.ndarray  # (n,)
    num_classes: int
    splits: dict = field(default_factory=dict)

    def __post_init__(self):
        edges = canonical_edges(self.edges, self.num_nodes)
        object.__setattr__(self, "edges", edges)
        feats = np.asarray(self.features, dtype=np.float64)
        if feats.ndim != 2 or feats.shape[0] != self.num_nodes:
            raise DatasetError(f"features must be ({self.num_nodes}, F), got {feats.shape}")
        object.__setattr__(self, "features", feats)
        labels = np.asarray(self.labels, dtype=np.int64)
        if labels.shape != (self.num_nodes,):
            raise DatasetError("one label per node required")
        if labels.size and (labels.min() < 0 or labels.max() >= self.num_classes):
            raise DatasetError("label outside [0, num_classes)")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "splits", _validate_splits(self.splits, self.num_nodes))

    @property
    def num_features(self) -> int:
        return self.features.shape[1]

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @cached_property
    def directed(self) -> tuple[np.ndarray, np.ndarray]:
        """``(dst, src)`` over both orientations, sorted by receiver then sender."""
        e = self.edges
        dst = np.concatenate([e[:, 0], e[:, 1]])
        src = np.concatenate([e[:, 1], e[:, 0]])
        order = np.lexsort((src, dst))
        return dst[order], src[order]

    @cached_property
    def degrees(self) -> np.ndarray:
        return np.bincount(self.edges.ravel(), minlength=self.num_nodes).astype(np.int64)

    @cached_property
    def neighbor_lists(self) -> list[np.ndarray]:
        dst, src = self.directed
        bounds = np.searchsorted(dst, np.arange(self.num_nodes + 1))
        return [src[bounds[i]:bounds[i + 1]] for i in range(self.num_nodes)]

    @property
    def task(self) -> str:
        return "edge" if any(k in self.splits for k in EDGE_SPLITS) else "node"

    def with_edges(self, edges) -> "Graph":
        return Graph(self.num_nodes, edges, self.features, self.labels, self.num_classes, self.splits)

    def with_splits(self, splits: dict) -> "Graph":
        return Graph(self.num_nodes, self.edges, self.features, self.labels, self.num_classes, splits)

    def permute(self, perm) -> "Graph":
        """Relabel nodes so that old node ``perm[k]`` becomes new node ``k``."""
        perm = np.asarray(perm, dtype=np.int64)
        inv = np.empty_like(perm)
        inv[perm] = np.arange(len(perm))
        splits = {}
        for k, v in self.splits.items():
            v = np.asarray(v)
            splits[k] = np.sort(inv[v]) if v.ndim == 1 else inv[v]
        return Graph(self.num_nodes, inv[self.edges], self.features[perm], self.labels[perm],
                     self.num_classes, splits)

    def structurally_equal(self, other: "Graph") -> bool:
        if (self.num_nodes, self.num_classes) != (other.num_nodes, other.num_classes):
            return False
        if not (np.array_equal(self.edges, other.edges)
                and np.array_equal(self.labels, other.labels)
                and np.array_equal(self.features, other.features)):
            return False
        if set(self.splits) != set(other.splits):
            return False
        return all(np.array_equal(self.splits[k], other.splits[k]) for k in self.splits)


def _validate_splits(splits: dict, n: int) -> dict:
    out = {}
    for key, val in (splits or {}).items():
        arr = np.asarray(val, dtype=np.int64)
        if key in NODE_SPLITS:
            arr = arr.reshape(-1)
        elif key in EDGE_SPLITS:
            arr = arr.reshape(-1, 2)
        else:
            raise DatasetError(f"unknown split {key!r}")
        if arr.size and (arr.min() < 0 or arr.max() >= n):
            raise DatasetError(f"split {key!r} has an index out of range")
        out[key] = arr
    node_sets = [set(out[k].tolist()) for k in NODE_SPLITS if k in out]
    edge_sets = [set(map(tuple, np.sort(out[k], axis=1).tolist())) for k in EDGE_SPLITS if k in out]
    for sets in (node_sets, edge_sets):
        for a in range(len(sets)):
            for b in range(a + 1, len(sets)):
                if sets[a] & sets[b]:
                    raise DatasetError("splits overlap")
    return out


def homophily_ratio(g: Graph) -> float:
    """Fraction of canonical edges joining two nodes with the same label."""
    if g.num_edges == 0:
        raise DatasetError("homophily is undefined without edges")
    y = g.labels
    return float(np.mean(y[g.edges[:, 0]] == y[g.edges[:, 1]]))


# io -------------------------------------------------------------------------

def _read_lines(path: Path) -> list[str]:
    if not path.exists():
        raise DatasetError(f"missing file: {path}")
    lines = path.read_text(encoding="utf-8").splitlines()
    while lines and not lines[-1].strip():
        lines.pop()
    return lines


def _parse_ints(path: Path, width: int, sep: str | None) -> np.ndarray:
    rows = []
    for lineno, line in enumerate(_read_lines(path), start=1):
        parts = line.split(sep) if sep else line.split()
        try:
            vals = [int(p) for p in parts]
        except ValueError:
            raise DatasetError(f"{path.name}:{lineno}: malformed line {line!r}") from None
        if len(vals) != width:
            raise DatasetError(f"{path.name}:{lineno}: expected {width} fields, got {len(vals)}")
        rows.append(vals)
    return np.asarray(rows, dtype=np.int64).reshape(-1, width)


def load_dataset(path) -> Graph:
    """Read and validate a dataset directory."""
    root = Path(path)
    if not root.is_dir():
        raise DatasetError(f"dataset directory not found: {root}")
    meta_path = root / "meta.json"
    if not meta_path.exists():
        raise DatasetError(f"missing file: {meta_path}")
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    try:
        n, f, c = int(meta["num_nodes"]), int(meta["num_features"]), int(meta["num_classes"])
    except KeyError as exc:
        raise DatasetError(f"meta.json lacks {exc}") from None

    raw_edges = _parse_ints(root / "edges.tsv", 2, None)
    if raw_edges.size and (raw_edges.min() < 0 or raw_edges.max() >= n):
        bad = int(np.flatnonzero((raw_edges < 0).any(1) | (raw_edges >= n).any(1))[0]) + 1
        raise DatasetError(f"edges.tsv:{bad}: index out of range")

    feat_lines = _read_lines(root / "features.csv")
    if len(feat_lines) != n:
        raise DatasetError(f"meta/content mismatch: {len(feat_lines)} feature rows for {n} nodes")
    features = np.empty((n, f), dtype=np.float64)
    for lineno, line in enumerate(feat_lines, start=1):
        parts = line.split(",") if f else []
        if len(parts) != f:
            raise DatasetError(f"meta/content mismatch: features.csv:{lineno} has {len(parts)} values, expected {f}")
        try:
            features[lineno - 1] = [float(p) for p in parts]
        except ValueError:
            raise DatasetError(f"features.csv:{lineno}: malformed line") from None

    labels = _parse_ints(root / "labels.tsv", 1, None).ravel()
    if len(labels) != n:
        raise DatasetError(f"meta/content mismatch: {len(labels)} labels for {n} nodes")
    if labels.size and (labels.min() < 0 or labels.max() >= c):
        bad = int(np.flatnonzero((labels < 0) | (labels >= c))[0]) + 1
        raise DatasetError(f"labels.tsv:{bad}: class index out of range")

    splits_path = root / "splits.json"
    splits = json.loads(splits_path.read_text(encoding="utf-8")) if splits_path.exists() else {}
    return Graph(n, raw_edges, features, labels, c, splits)


def save_dataset(g: Graph, path) -> Path:
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    meta = {"num_nodes": g.num_nodes, "num_features": g.num_features,
            "num_classes": g.num_classes, "directed": False}
    (root / "meta.json").write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")
    write_edges(g.edges, root / "edges.tsv")
    # repr() round-trips float64 exactly
    feat = "".join(",".join(repr(float(v)) for v in row) + "\n" for row in g.features)
    (root / "features.csv").write_text(feat, encoding="utf-8")
    (root / "labels.tsv").write_text("".join(f"{int(y)}\n" for y in g.labels), encoding="utf-8")
    splits = {k: np.asarray(v).tolist() for k, v in g.splits.items()}
    (root / "splits.json").write_text(json.dumps(splits) + "\n", encoding="utf-8")
    return root


def write_edges(edges, path) -> None:
    Path(path).write_text("".join(f"{int(a)}\t{int(b)}\n" for a, b in edges), encoding="utf-8")


def stratified_split(labels, seed: int, fractions=(0.6, 0.2, 0.2)) -> dict:
    """Per-class seeded shuffle into train/val/test node index sets."""
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    parts = {k: [] for k in NODE_SPLITS}
    for c in np.unique(labels):
        idx = rng.permutation(np.flatnonzero(labels == c))
        n_tr = int(round(fractions[0] * len(idx)))
        n_va = int(round(fractions[1] * len(idx)))
        parts["train"].extend(idx[:n_tr])
        parts["val"].extend(idx[n_tr:n_tr + n_va])
        parts["test"].extend(idx[n_tr + n_va:])
    return {k: np.sort(np.asarray(v, dtype=np.int64)) for k, v in parts.items()}


def edge_split(edges, seed: int, fractions=(0.8, 0.05, 0.15)) -> dict:
    edges = canonical_edges(edges)
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(edges))
    n_tr = int(round(fractions[0] * len(edges)))
    n_va = int(round(fractions[1] * len(edges)))
    return {"train_pos": edges[order[:n_tr]],
            "val_pos": edges[order[n_tr:n_tr + n_va]],
            "test_pos": edges[order[n_tr + n_va:]]}

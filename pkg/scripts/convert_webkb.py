"""Convert a Geom-GCN style WebKB / Wikipedia dataset into the argnn directory format.

Expects the raw files of the Geom-GCN release::

    <raw>/out1_node_feature_label.txt   node_id<TAB>f1,f2,...<TAB>label (header line)
    <raw>/out1_graph_edges.txt          src<TAB>dst (header line)
    <raw>/<name>_split_0.6_0.2_<k>.npz  optional train/val/test masks

Usage: python scripts/convert_webkb.py RAW_DIR OUT_DIR [--split 0]
"""
import argparse
from pathlib import Path

import numpy as np

from argnn.graph import Graph, homophily_ratio, save_dataset, stratified_split


def read_nodes(path: Path):
    ids, feats, labels = [], [], []
    for line in path.read_text().splitlines()[1:]:
        node, feat, label = line.split("\t")
        ids.append(int(node))
        feats.append([float(v) for v in feat.split(",")])
        labels.append(int(label))
    order = np.argsort(ids)
    return np.asarray(feats)[order], np.asarray(labels)[order]


def read_edges(path: Path):
    rows = [line.split("\t") for line in path.read_text().splitlines()[1:] if line.strip()]
    return np.asarray(rows, dtype=np.int64).reshape(-1, 2)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("raw", type=Path)
    ap.add_argument("out", type=Path)
    ap.add_argument("--split", type=int, default=0, help="index of the published split file")
    args = ap.parse_args()

    x, y = read_nodes(args.raw / "out1_node_feature_label.txt")
    edges = read_edges(args.raw / "out1_graph_edges.txt")
    split_files = sorted(args.raw.glob(f"*_split_0.6_0.2_{args.split}.npz"))
    if split_files:
        masks = np.load(split_files[0])
        splits = {k: np.flatnonzero(masks[f"{k}_mask"]) for k in ("train", "val", "test")}
    else:
        splits = stratified_split(y, args.split)
    g = Graph(len(y), edges, x, y, int(y.max()) + 1, splits)
    save_dataset(g, args.out)
    print(f"{args.out}: {g.num_nodes} nodes, {g.num_edges} edges, "
          f"{g.num_features} features, H = {homophily_ratio(g):.3f}")


if __name__ == "__main__":
    main()

"""Convert a LINQS citation dataset (``<name>.content`` / ``<name>.cites``) to the argnn format.

Splits are stratified 60/20/20 with the given seed.

Usage: python scripts/convert_linqs.py RAW_DIR NAME OUT_DIR [--seed 0]
"""
import argparse
from pathlib import Path

import numpy as np

from argnn.graph import Graph, homophily_ratio, save_dataset, stratified_split


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("raw", type=Path)
    ap.add_argument("name")
    ap.add_argument("out", type=Path)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    index, feats, names = {}, [], []
    for line in (args.raw / f"{args.name}.content").read_text().splitlines():
        parts = line.split()
        index[parts[0]] = len(index)
        feats.append([float(v) for v in parts[1:-1]])
        names.append(parts[-1])
    classes = sorted(set(names))
    y = np.array([classes.index(c) for c in names])
    edges, dropped = [], 0
    for line in (args.raw / f"{args.name}.cites").read_text().splitlines():
        a, b = line.split()
        if a in index and b in index:
            edges.append((index[a], index[b]))
        else:
            dropped += 1  # citations of papers outside the corpus
    g = Graph(len(y), edges, np.asarray(feats), y, len(classes), stratified_split(y, args.seed))
    save_dataset(g, args.out)
    print(f"{args.out}: {g.num_nodes} nodes, {g.num_edges} edges ({dropped} dangling citations "
          f"dropped), H = {homophily_ratio(g):.3f}")


if __name__ == "__main__":
    main()

"""Per-epoch wall time against edge count at fixed node count and width.

Usage: python scripts/complexity.py [--nodes 2000] [--hidden 32] [--edges 5000 10000 20000 40000]
"""
import argparse

import numpy as np

from argnn.graph import Graph, stratified_split
from argnn.trainer import TrainConfig, train


def graph_with_edges(n, m, f, seed):
    rng = np.random.default_rng(seed)
    found = {}
    while len(found) < m:
        for i, j in rng.integers(0, n, (m, 2)).tolist():
            if i != j and len(found) < m:
                found.setdefault((min(i, j), max(i, j)))
    labels = rng.integers(0, 4, n)
    return Graph(n, np.array(list(found)), rng.normal(size=(n, f)), labels, 4,
                 stratified_split(labels, seed))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--nodes", type=int, default=2000)
    ap.add_argument("--hidden", type=int, default=32)
    ap.add_argument("--edges", type=int, nargs="+", default=[5000, 10000, 20000, 40000])
    args = ap.parse_args()
    base = None
    print(f"{'edges':>7} {'ms/epoch':>9} {'ratio':>6}")
    for m in args.edges:
        g = graph_with_edges(args.nodes, m, args.hidden, seed=m)
        r = train(TrainConfig(hidden=args.hidden, num_layers=2, epochs_max=6, patience=6), g)
        t = float(np.median(r.epoch_time[1:]))
        base = base or t
        print(f"{m:7d} {1e3 * t:9.1f} {t / base:6.2f}")


if __name__ == "__main__":
    main()

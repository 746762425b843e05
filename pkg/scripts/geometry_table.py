"""Mean curvature, NRMD and homophily of the learned last-layer metric, one row per dataset.

Usage: python scripts/geometry_table.py DATASET_DIR [DATASET_DIR ...] [--seeds 3]
Fixture names (two-cliques, tree-plus-clique, heterophilic, random) are accepted too.
"""
import argparse
from pathlib import Path

import numpy as np

from argnn.fixtures import GENERATORS
from argnn.graph import homophily_ratio, load_dataset, stratified_split
from argnn.trainer import TrainConfig, train


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("datasets", nargs="+")
    ap.add_argument("--seeds", type=int, default=3)
    args = ap.parse_args()
    print(f"{'dataset':<20} {'kappa':>10} {'NRMD':>10} {'H':>6}")
    for name in args.datasets:
        g = GENERATORS[name]() if name in GENERATORS else load_dataset(name)
        if "train" not in g.splits:
            g = g.with_splits(stratified_split(g.labels, 0))
        kappa, disp = [], []
        for s in range(args.seeds):
            r = train(TrainConfig(seed=s), g)
            kappa.append(r.kappa_mean[-1])
            disp.append(r.nrmd[-1])
        print(f"{Path(name).name:<20} {np.mean(kappa):10.4g} {np.mean(disp):10.4g} "
              f"{homophily_ratio(g):6.3f}")


if __name__ == "__main__":
    main()

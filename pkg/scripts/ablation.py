"""Geometry ablation: adaptive metrics against fixed scalar metrics over several seeds.

Usage: python scripts/ablation.py [DATASET_DIR] [--seeds 5] [--epochs 200]
Without a dataset directory the generated heterophilic fixture is used.
"""
import argparse

import numpy as np
from scipy import stats

from argnn.fixtures import heterophilic
from argnn.graph import homophily_ratio, load_dataset, stratified_split
from argnn.trainer import TrainConfig, train

MODES = ("adaptive", "fixed:0.5", "fixed:1", "fixed:2")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("dataset", nargs="?")
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--epochs", type=int, default=200)
    args = ap.parse_args()

    g = load_dataset(args.dataset) if args.dataset else heterophilic()
    if "train" not in g.splits:
        g = g.with_splits(stratified_split(g.labels, 0))
    print(f"{g.num_nodes} nodes, {g.num_edges} edges, H = {homophily_ratio(g):.3f}")
    print(f"{'mode':<10} {'test acc':>9} {'± 95% CI':>9} {'final train loss':>17}")
    for mode in MODES:
        acc, loss = [], []
        for s in range(args.seeds):
            r = train(TrainConfig(mode=mode, seed=s, epochs_max=args.epochs,
                                  patience=min(100, args.epochs)), g)
            acc.append(100 * r.test_metrics["accuracy"])
            loss.append(r.final_train_loss)
        half = stats.t.ppf(0.975, len(acc) - 1) * np.std(acc, ddof=1) / np.sqrt(len(acc)) \
            if len(acc) > 1 else float("nan")
        print(f"{mode:<10} {np.mean(acc):9.2f} {half:9.2f} {np.mean(loss):17.3e}")


if __name__ == "__main__":
    main()

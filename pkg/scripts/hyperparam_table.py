"""Theory-guided regulariser weights for the standard benchmarks at L in {2, 3}, d in {64, 128, 256}."""
from argnn.losses import HyperparamInputs, theory_hyperparams
from argnn.reference import BENCHMARKS


def main():
    print(f"{'dataset':<10} {'H':>6} {'L':>2} {'d':>4} {'alpha':>11} {'beta':>11}")
    for s in BENCHMARKS.values():
        for L in (2, 3):
            for d in (64, 128, 256):
                hp = theory_hyperparams(HyperparamInputs(s.homophily, L, d, s.num_nodes,
                                                         s.num_edges))
                print(f"{s.name:<10} {s.homophily:6.3f} {L:2d} {d:4d} {hp.alpha:11.4e} "
                      f"{hp.beta:11.4e}")


if __name__ == "__main__":
    main()

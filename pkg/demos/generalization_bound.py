"""How much data keeps the generalization gap under epsilon.

Tabulates the Hoeffding plus union bound for a family of three models, then
checks it by Monte Carlo: models fit once on held-out data, evaluated on
100 fresh samples of 200 examples.
"""

import argparse

from hffl import bounds, datagen
from hffl.bounds import BoundQuery
from hffl.models import ArchSpec, OptimizerConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--trials", type=int, default=100)
    args = ap.parse_args()

    family = [ArchSpec.logistic(5, 10), ArchSpec.mlp(5, 64, 10), ArchSpec.mlp(5, (64, 64), 10)]
    print("     m    eps=0.05   eps=0.1   eps=0.2")
    for m in (50, 200, 500, 2000, 10_000):
        deltas = [bounds.delta_for(BoundQuery(m, e, len(family))) for e in (0.05, 0.1, 0.2)]
        print(f"{m:>6}  " + "  ".join(f"{d:>8.4f}" for d in deltas))
    print(f"\nfor delta = 0.05 at m = 2000: eps = {bounds.epsilon_for(2000, 0.05, len(family)):.4f}")

    common = dict(classes=10, dim=5, clusters_per_class=3, center_scale=3.0, spread=1.0, center_seed=0)
    train = datagen.generate_cluster_blobs(per_class=1800, seed=[0, 1], **common)
    test = datagen.generate_cluster_blobs(per_class=300, seed=[0, 2], **common)
    res = bounds.empirical_gap(train, test, family, trials=args.trials, seed=0, m=200, epsilon=0.1,
                               fit_once=True, epochs=5, opt=OptimizerConfig(lr=0.01))
    print(f"\nm=200, eps=0.1: bound delta {res.delta:.4f}, observed violation rate {res.violation_rate:.3f}")
    print(f"largest gap seen {res.gaps.max():.4f}, median {sorted(res.gaps)[len(res.gaps) // 2]:.4f}")


if __name__ == "__main__":
    main()

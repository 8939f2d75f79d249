"""Thirty agents with twenty examples each: alone, then federated.

Each agent first trains by itself; then all of them run nine rounds of
federated averaging. The median agent accuracy rises and the spread between
agents narrows.
"""

import argparse

import numpy as np

from hffl import datagen, federation, models
from hffl.federation import FederationConfig, ParticipantSet
from hffl.models import ArchSpec, OptimizerConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--rounds", type=int, default=9)
    args = ap.parse_args()

    common = dict(classes=10, dim=20, clusters_per_class=1, center_scale=2.0, spread=1.0, center_seed=0)
    train = datagen.generate_cluster_blobs(per_class=1800, seed=[0, 1], **common)
    test = datagen.generate_cluster_blobs(per_class=300, seed=[0, 2], **common)

    order = np.random.default_rng(args.seed).permutation(len(train))
    agents = ParticipantSet(train, tuple(((1, j + 1), order[j * 20:(j + 1) * 20]) for j in range(30)))
    arch = ArchSpec.mlp(train.dim, 64, 10)
    cfg = FederationConfig(OptimizerConfig(lr=0.01), local_epochs=3, baseline_epochs=100,
                           track_agents=True, seed=args.seed)
    init = models.init_params(arch, [args.seed, 0x0F0])

    alone = np.array(list(federation.local_baseline(agents, init, cfg, test).values()))
    print(f"round 0 (alone)  median {np.median(alone):.3f}  std {np.std(alone):.3f}")

    def report(m):
        acc = np.array(list(m.agent_accuracies.values()))
        print(f"round {m.round:<2}          median {np.median(acc):.3f}  std {np.std(acc):.3f}"
              f"  global {m.accuracy:.3f}")

    federation.run_federation(init, agents, args.rounds, test, cfg, level=1, on_round=report)


if __name__ == "__main__":
    main()

"""Three contribution levels: who gets which model.

Level-1 agents contribute 200 examples, level-2 agents 500 and level-3
agents 2000. Each level's session starts from the model below it and uses
more data, so higher contributors receive better models. HFFL+ then picks
the best architecture per level.
"""

import argparse

from hffl import datagen, hierarchy
from hffl.federation import FederationConfig
from hffl.levels import LevelConfig
from hffl.models import ArchSpec, OptimizerConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--rounds", type=int, default=10)
    ap.add_argument("--plus", action="store_true", help="also run the architecture search")
    args = ap.parse_args()

    common = dict(classes=10, dim=5, clusters_per_class=3, center_scale=3.0, spread=1.0, center_seed=0)
    train = datagen.generate_cluster_blobs(per_class=1800, seed=[0, 1], **common)
    test = datagen.generate_cluster_blobs(per_class=300, seed=[0, 2], **common)

    levels = LevelConfig((20, 10, 4), (200, 500, 2000))
    part = datagen.partition(train, levels, args.seed)
    subs = datagen.level_subsample(part, levels, args.seed)
    cfg = FederationConfig(OptimizerConfig(lr=0.01), seed=args.seed)

    reports = hierarchy.run_hffl(train, levels, part, subs, ArchSpec.mlp(5, 64, 10), args.rounds, test, cfg)
    print("level  agents  active data  cumulative  accuracy")
    for r in reports:
        print(f"{r.level:>5}  {len(levels.participants(r.level)):>6}  {r.active_data:>11}"
              f"  {r.cumulative_data:>10}  {r.score:.4f}")

    if args.plus:
        family = [ArchSpec.logistic(5, 10), ArchSpec.mlp(5, 64, 10), ArchSpec.mlp(5, (32, 32), 10)]
        plus = hierarchy.run_hffl_plus(train, levels, part, subs, family, args.rounds, test, cfg)
        print("\nHFFL+ (selected on the test set)")
        for lvl in levels.levels():
            row = "  ".join(f"{name} {s:.4f}" for name, s in plus.scores[lvl].items())
            print(f"level {lvl}: {row}  -> {plus.winners[lvl].name}")

    # an agent that can supply 2000 examples and is accepted moves up
    moved = hierarchy.promote(levels, (2, 1), 3, available=2000)
    print(f"\nafter promoting agent (2, 1): agents per level {moved.agents}")


if __name__ == "__main__":
    main()

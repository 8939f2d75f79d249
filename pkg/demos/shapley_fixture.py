"""Data Shapley values of ten agents under four learners.

The value of an agent depends on the learner: the same ten points are
ranked differently by 1-NN and by a decision stump, and some agents have
negative value. Leave-one-out is shown for comparison.
"""

import numpy as np

from hffl import harness, valuation


def main():
    train, owners, test, _ = harness.builtin_fixture()
    reports = {}
    for kind in valuation.LearnerSpec.KINDS:
        learner = valuation.LearnerSpec(kind)
        reports[kind] = valuation.agent_contribution(train, owners, learner, test)
        loo = valuation.loo_value(train, owners, learner, test)
        r = reports[kind]
        print(f"{kind}: V(empty)={r.v_empty:.2f}  V(all)={r.v_full:.2f}")
        for agent, phi in r.as_dict().items():
            print(f"  agent {agent:>2}  phi {phi:+.4f}  loo {loo[agent]:+.4f}")

    nn = reports["one_nearest_neighbor"].ranking()
    stump = reports["decision_stump"].ranking()
    print("\nranking under 1-NN:  ", nn)
    print("ranking under stump: ", stump)
    negative = {k: [a for a, v in r.as_dict().items() if v < 0] for k, r in reports.items()}
    print("agents with phi < 0:", {k: v for k, v in negative.items() if v})

    # the exact values also come out of the exhaustive permutation average
    game = valuation.learner_game(train, owners, valuation.LearnerSpec("decision_stump"), test)
    sampled = valuation.shapley_sampled(game, 2000, seed=0)
    gap = np.max(np.abs(sampled.values - reports["decision_stump"].values))
    print(f"\n2000 sampled permutations: max error {gap:.4f}, max stderr {sampled.stderr.max():.4f}")


if __name__ == "__main__":
    main()

"""Bang-bang design against a greedy learner, one round at a time.

A one-state problem whose four actions have advantages 0, -1, -10, -100 is
the slow case: each round removes only the action below the support mean,
so the learner needs |A| - 1 rounds to settle on the best action.
"""

import numpy as np

from reward_design.harness import theorem1_experiment, theorem1_suite
from reward_design.mdp import TabularMdp


def main():
    rewards = np.array([[0.0, -1.0, -10.0, -100.0]])
    mdp = TabularMdp(np.ones((1, 4, 1)), np.ones(1), 0.9, 5, rewards, np.ones((1, 4), bool))
    rep = theorem1_experiment(mdp, np.array([[1.0, 0, 0, 0]]), r_max=1.0)
    for k, support in enumerate(rep.supports, start=1):
        print(f"round {k}: learner support {np.flatnonzero(support[0]).tolist()}")
    print(f"converged in {rep.converged_round} rounds\n")

    reports = theorem1_suite(n_mdps=100)
    rounds = np.array([r.converged_round for r in reports])
    print(f"random MDPs: {sum(r.passed for r in reports)}/100 within |A| rounds, "
          f"rounds used: {np.bincount(rounds).tolist()[1:]} (count per 1, 2, ...)")


if __name__ == "__main__":
    main()

"""Bag-sum-preserving redistribution leaves every policy's objective unchanged.

Builds a small stochastic MDP, splits its horizon into bags and compares the
bagged objective with three redistributed rewards by exhaustive enumeration:
one that keeps bag sums, one that keeps them only up to a perturbation, and
one that ignores them.
"""

import numpy as np

from rlbr import envlab as el
from rlbr import oracle

rng = np.random.default_rng(4)
mdp = oracle.random_mdp(rng, n_states=3, n_actions=2, horizon=4)
layout = el.partition_fixed(4, 2)
print("bags:", layout.to_list())

cases = {
    "hidden reward": mdp.hidden_reward.copy(),
    "bag-sum-preserving perturbation": oracle.perturbed_redistribution(mdp, layout, eps=0.5, seed=1),
    "uniform split of each bag": oracle.uniform_redistribution(layout, oracle.hidden_bag_reward(mdp)),
    "shifted reward (breaks bag sums)": mdp.hidden_reward + 0.3 * rng.normal(size=mdp.hidden_reward.shape),
}
for name, redist in cases.items():
    rep = oracle.check_theorem1(mdp, layout, redist)
    print(f"{name:36s} applicable={rep.applicable!s:5s} max|J_B - J_r|={rep.max_gap:.2e} "
          f"same optimal set={rep.sets_equal}")

vi = oracle.value_iteration(mdp)
print("optimal value", round(vi.optimal_value, 4), "greedy policy at t=0:", vi.policy().table[0])

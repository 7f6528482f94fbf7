# A tree-shaped family where no learner can avoid linear early regret.
#
# One hidden (leaf, action) pair unlocks a reward of 1 per remaining stage.
# Until it is found the agent must try pairs one by one.

# %%
import numpy as np

from metric_ucrl import make_hard_instance, regret_lower_bound, run_training

env, spec = make_hard_instance(seed=3, n_states=34, n_actions=2, horizon=16)
print("leaves", spec.leaf_count, " tree depth", spec.tree_depth, " star pair", spec.star_pair)

# %% average over hidden pairs
C = spec.leaf_count * spec.n_actions
curves = []
for seed in range(30):
    env, spec = make_hard_instance(seed, 34, 2, 16)
    curves.append(run_training("ucrl-fa-nn", env, episodes=C + 4).ledger.cumulative_regrets)
mean = np.mean(curves, axis=0)

# %%
for k in (1, 8, 16, 32, C + 4):
    ref = regret_lower_bound(C, k, 16, spec.max_star_steps)
    print(f"K={k:>3}  mean regret {mean[k - 1]:7.2f}   reference {ref:7.2f}")

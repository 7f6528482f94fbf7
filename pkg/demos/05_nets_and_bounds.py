# Nets, packings and the regret bound they feed.

# %%
import numpy as np

from metric_ucrl import (MetricSample, ProductL1Metric, bound_at_optimal_epsilon, greedy_net,
                         greedy_packing, grid_sample, make_line_world, optimal_epsilon,
                         regret_upper_bound)

rng = np.random.default_rng(0)
pts = rng.uniform(0, 1, (200, 2))
cloud = MetricSample(tuple(pts[:, 0]), tuple(pts[:, 1]), ProductL1Metric())

# %% packing(2 eps) <= net(eps) <= packing(eps)
for eps in (0.05, 0.1, 0.2, 0.4):
    print(f"eps={eps:<5} packing(2eps)={greedy_packing(cloud, 2 * eps).size:>3}  "
          f"net={greedy_net(cloud, eps).size:>3}  packing={greedy_packing(cloud, eps).size:>3}")

# %% the upper bound on the line world at the balancing radius
env = make_line_world(0, n_actions=11, horizon=3)
sample = grid_sample(env, 1e-3)
L, D, H = env.lipschitz.l, env.info["diameter"], env.horizon
for K in (100, 1000, 10_000):
    eps = optimal_epsilon(D, L, K, 1)
    n = greedy_net(sample, eps).size
    print(f"K={K:>6}  eps*={eps:.4f}  |net|={n:>5}  bound={regret_upper_bound(n, eps, L, K, H):9.1f}  "
          f"scale={sum(bound_at_optimal_epsilon(D, L, K, H, 1)[1:]):9.1f}")

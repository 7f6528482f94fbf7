# Exact linear structure: Q* is linear in a d-dimensional feature map.
#
# The linear-span oracle only answers with a fitted value when the query's
# feature lies in the span of the data, so at most d episodes carry regret.

# %%
from metric_ucrl import make_cluster_linear, run_training

for d in (2, 5, 8):
    env, info = make_cluster_linear(seed=d, d=d, states_per_cluster=2, n_actions=3, horizon=5)
    led = run_training("ucrl-fa-linear", env, episodes=3 * d + 5).ledger
    print(f"d={d}  regret {led.total:6.3f} (cap {5 * d})  "
          f"regret episodes {led.episodes_with_regret(1e-9)} (cap {d})")

# Optimistic tabular learning on random deterministic MDPs.
#
# Each unknown pair is assumed to pay the maximum reward and to lead
# somewhere worth H. Every episode with regret has to touch a new pair,
# so regret stops growing once all S*A pairs are known.

# %%
import numpy as np

from metric_ucrl import make_finite_random, run_training

S, A, H = 12, 3, 6
env = make_finite_random(seed=4, n_states=S, n_actions=A, horizon=H)
result = run_training("tabular", env, episodes=4 * S * A)
led = result.ledger

# %%
print(f"V*(s0) = {result.solution.v_star_initial:.3f}")
print(f"total regret {led.total:.3f}  (cap S*A*H = {S * A * H})")
print(f"episodes with regret {led.episodes_with_regret(1e-9)}  (cap S*A = {S * A})")
print(f"last episode with regret: {led.plateau_episode(1e-9)}")

# %% cumulative regret flattens out
cum = np.asarray(led.cumulative_regrets)
for k in (1, 5, 10, 20, 40, len(cum)):
    print(f"K={k:>4}  regret={cum[k - 1]:.3f}")

# %% the function-approximation agent with the discrete metric behaves the same
fa = run_training("ucrl-fa-nn", env, episodes=4 * S * A, check_optimism=True)
print("ucrl-fa-nn total", round(fa.ledger.total, 6), " min optimism margin", fa.min_optimism_margin)

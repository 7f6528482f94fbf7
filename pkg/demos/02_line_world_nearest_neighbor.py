# Nearest-neighbor optimism on a continuous line.
#
# States live in [0, 1], actions nudge the state left or right and the
# reward is a tent peaked somewhere on the line. The agent's estimate at a
# new pair is the best stored value plus L times the distance, capped.

# %%
from metric_ucrl import fit_exponent, make_line_world, run_training

env = make_line_world(seed=0, n_actions=11, horizon=3)
print("actions", env.actions)
print("L1 =", env.lipschitz.l1, " L2 =", env.lipschitz.l2, " L =", env.lipschitz.l)
print("diameter", env.info["diameter"])

# %% train with the per-step induction check switched on
result = run_training("ucrl-fa-nn", env, episodes=300, check_induction=True, mesh=1e-3)
led = result.ledger
print(f"regret after 300 episodes: {led.total:.3f}")
print(f"grid oracle error bound: {result.solution.error_bound:.4f}")
print(f"min induction margin: {result.min_induction_margin:.3g}")
print(f"stored pairs: {len(result.agent.buffer)}")

# %% reachable states form a finite lattice, so regret saturates
print("last episode with regret:", led.plateau_episode(1e-9))
fit = fit_exponent(led.cumulative_regrets)
print(f"log-log slope over the second half: {fit.exponent:.3f}")

# %% a wrong Lipschitz constant is reported, not raised
bad = run_training("ucrl-fa-nn", env, episodes=100, check_optimism=True, l1_override=0.01)
print("with L1 = 0.01: min optimism margin", round(bad.min_optimism_margin, 4))

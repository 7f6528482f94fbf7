import math

import numpy as np
import pytest

from metric_ucrl import (ContractViolation, check_pseudometric, check_reward_range,
                         make_cluster_linear, make_finite_random, make_hard_instance,
                         make_line_world, node_depth, run_training)
from metric_ucrl.oracle import exact_dp, grid_dp, rollout


def sample_pairs(env, n=40, seed=0):
    if env.is_finite:
        return env.state_action_pairs()
    rng = np.random.default_rng(seed)
    return [(float(s), env.actions[int(i)])
            for s, i in zip(rng.uniform(0, 1, n), rng.integers(0, env.n_actions, n))]


def all_families():
    yield make_finite_random(3, 5, 3, 4)
    yield make_line_world(3, n_actions=7, horizon=3)
    yield make_hard_instance(3, 12, 3, 6)[0]
    yield make_cluster_linear(3, 6, 2, 3, 4)[0]


class TestCommonContracts:
    @pytest.mark.parametrize("env", list(all_families()), ids=lambda e: e.name)
    def test_reward_range_and_pseudometric(self, env):
        pairs = sample_pairs(env)
        assert check_reward_range(env, pairs)
        rep = check_pseudometric(env.metric, pairs)
        assert rep["symmetric"] and rep["triangle"] and rep["nonnegative"]


class TestFiniteRandom:
    def test_single_absorbing_pair(self):
        env = make_finite_random(0, 1, 1, 3)
        assert env.tables[0].tolist() == [[0]]
        assert env.transition(0, 0) == 0

    def test_seed_determinism(self):
        a, b = make_finite_random(9, 6, 4, 5), make_finite_random(9, 6, 4, 5)
        assert np.array_equal(a.tables[0], b.tables[0])
        assert np.array_equal(a.tables[1], b.tables[1])

    def test_rewards_rounded_to_three_decimals(self):
        rew = make_finite_random(2, 8, 3, 2).tables[1]
        np.testing.assert_array_equal(rew, np.round(rew, 3))

    def test_discrete_metric_scale_is_horizon(self):
        env = make_finite_random(0, 3, 2, 7)
        assert env.metric((0, 0), (1, 0)) == 7.0
        assert env.metric((2, 1), (2, 1)) == 0.0

    def test_bad_sizes(self):
        with pytest.raises(ContractViolation):
            make_finite_random(0, 0, 2, 3)


class TestLineWorld:
    def test_clip(self):
        env = make_line_world(0)
        assert env.transition(0.9, 0.25) == 1.0
        assert env.transition(0.1, -0.25) == 0.0

    def test_tent_values(self):
        env = make_line_world(0, bump_params={"peak": 0.4, "slope": 2.0})
        assert env.reward(0.4, 0.0) == 1.0
        assert env.reward(0.7, 0.1) == pytest.approx(1 - 0.3 * 2.0)
        assert env.reward(0.95, 0.0) == 0.0

    def test_actions_are_symmetric_displacements(self):
        env = make_line_world(0, n_actions=5)
        assert env.actions == (-0.25, -0.125, 0.0, 0.125, 0.25)

    def test_declared_constants(self):
        env = make_line_world(0, horizon=4, bump_params={"slope": 1.5, "action_weight": 0.5})
        assert env.lipschitz.l1 == pytest.approx(1.5 * max(4, 3 / 0.5))
        assert env.lipschitz.l2 == pytest.approx(2.0)
        assert env.info["diameter"] == pytest.approx(1.25)

    def test_rejects_unknown_bump_parameter(self):
        with pytest.raises(ContractViolation):
            make_line_world(0, bump_params={"width": 0.1})
        with pytest.raises(ContractViolation):
            make_line_world(0, n_actions=1)

    def test_two_resolutions_agree_within_bound(self):
        env = make_line_world(5, n_actions=11, horizon=3)
        fine, coarse = grid_dp(env, 1e-3), grid_dp(env, 2e-3)
        assert abs(fine.v_star_initial - coarse.v_star_initial) <= env.lipschitz.l * 2e-3 * 3

    @pytest.mark.parametrize("weight", [1.0, 0.4])
    def test_q_star_respects_declared_l1(self, weight):
        env = make_line_world(2, n_actions=5, horizon=3,
                              bump_params={"slope": 1.3, "action_weight": weight})
        sol = grid_dp(env, 1e-3)
        acts = np.array(env.actions)
        s = sol.states
        rng = np.random.default_rng(0)
        i, j = rng.integers(0, len(s), (2, 20000))
        ai, aj = rng.integers(0, len(acts), (2, 20000))
        keep = (i != j) | (ai != aj)
        i, j, ai, aj = i[keep], j[keep], ai[keep], aj[keep]
        dist = np.abs(s[i] - s[j]) + weight * np.abs(acts[ai] - acts[aj])
        for h in range(3):
            q = sol.q_star[h]
            ratio = np.abs(q[i, ai] - q[j, aj]) / dist
            assert ratio.max() <= env.lipschitz.l1 * (1 + 1e-6)


class TestHardInstance:
    def test_sizes(self):
        env, spec = make_hard_instance(0, 10, 2, 8)
        assert spec.tree_size == 8
        assert spec.leaf_count == 4 == math.ceil((10 - 2) / 2)
        assert spec.tree_depth == 3

    @pytest.mark.parametrize("n_states", [4, 5, 10, 17, 34, 64])
    def test_leaf_count_formula(self, n_states):
        _, spec = make_hard_instance(1, n_states, 2, 8)
        assert spec.leaf_count == math.ceil((n_states - 2) / 2)

    @pytest.mark.parametrize("seed", range(8))
    def test_optimal_value_is_horizon_minus_steps(self, seed):
        env, spec = make_hard_instance(seed, 34, 3, 12)
        assert exact_dp(env).v_star_initial == 12 - (node_depth(spec.star_pair[0]) + 1)

    def test_tables_differ_only_at_star(self):
        (e1, s1), (e2, s2) = make_hard_instance(0, 34, 2, 16), make_hard_instance(5, 34, 2, 16)
        assert s1.star_pair != s2.star_pair
        diff = np.argwhere(e1.tables[0] != e2.tables[0])
        assert {tuple(d) for d in diff} == {s1.star_pair, s2.star_pair}
        np.testing.assert_array_equal(e1.tables[1], e2.tables[1])

    def test_absorption(self):
        env, spec = make_hard_instance(4, 20, 3, 10)
        nxt, rew = env.tables
        for leaf in spec.leaves:
            for a in range(3):
                target = nxt[leaf, a]
                if (leaf, a) == spec.star_pair:
                    assert target == spec.absorbing_reward_state
                else:
                    assert target == spec.absorbing_null_state
        assert (nxt[spec.absorbing_null_state] == spec.absorbing_null_state).all()
        assert (rew[spec.absorbing_null_state] == 0).all()
        assert (nxt[spec.absorbing_reward_state] == spec.absorbing_reward_state).all()
        assert (rew[spec.absorbing_reward_state] == 1).all()
        assert (rew[:spec.tree_size] == 0).all()

    def test_horizon_too_small(self):
        with pytest.raises(ContractViolation):
            make_hard_instance(0, 34, 2, 5)
        with pytest.raises(ContractViolation):
            make_hard_instance(0, 3, 2, 5)


class TestClusterLinear:
    def test_single_cluster_learns_in_one_episode(self):
        env, _ = make_cluster_linear(0, 1, 4, 2, 5)
        led = run_training("ucrl-fa-linear", env, 6).ledger
        assert all(abs(r) <= 1e-9 for r in led.instant_regrets[1:])

    @pytest.mark.parametrize("seed", range(4))
    def test_q_star_constant_within_clusters(self, seed):
        env, spec = make_cluster_linear(seed, 7, 3, 3, 4)
        q = exact_dp(env).q_star
        for c in range(spec.d):
            members = spec.cluster_of == c
            for h in range(4):
                vals = q[h][members]
                assert vals.max() - vals.min() <= 1e-12

    def test_features_are_one_hot(self):
        env, spec = make_cluster_linear(0, 5, 2, 2, 3)
        for s, a in env.state_action_pairs():
            phi = env.feature_map(s, a)
            assert phi.sum() == 1.0 and phi[spec.cluster_of[s, a]] == 1.0

    def test_one_pair_per_cluster_matches_tabular_oracle(self):
        env, spec = make_cluster_linear(3, 8, 1, 2, 4)
        assert env.n_states * env.n_actions == spec.d
        lin = run_training("ucrl-fa-linear", env, 20).ledger
        tab = run_training("ucrl-fa-tabular", env, 20).ledger
        np.testing.assert_allclose(lin.as_array(), tab.as_array(), rtol=0, atol=1e-12)

    def test_rollout_uses_cluster_rewards(self):
        env, spec = make_cluster_linear(1, 4, 2, 2, 3)
        rewards = rollout(env, [0, 1, 0])
        s = env.initial_state
        for r, a in zip(rewards, [0, 1, 0]):
            assert r == spec.cluster_reward[spec.cluster_of[s, a]]
            s = env.transition(s, a)

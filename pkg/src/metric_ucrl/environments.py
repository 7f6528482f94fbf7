"""Seeded environment families.

* ``make_finite_random`` -- uniform random deterministic tables.
* ``make_line_world`` -- a continuous benchmark on ``[0, 1]`` with a tent
  shaped reward; it is a construction of this package, not a published
  benchmark.
* ``make_hard_instance`` -- binary tree with one hidden rewarding leaf action
  and two absorbing states.
* ``make_cluster_linear`` -- finite MDP whose pairs fall into ``d`` clusters
  sharing reward and successor, with one-hot cluster features.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .mdp import (ContractViolation, DiscreteMetric, EnvironmentSpec, LipschitzConstants,
                  ProductL1Metric, finite_env)


def make_finite_random(seed: int, n_states: int, n_actions: int, horizon: int) -> EnvironmentSpec:
    if n_states < 1 or n_actions < 1:
        raise ContractViolation("need at least one state and one action")
    rng = np.random.default_rng(seed)
    nxt = rng.integers(0, n_states, size=(n_states, n_actions))
    rew = np.round(rng.uniform(0.0, 1.0, size=(n_states, n_actions)), 3)
    return finite_env(nxt, rew, horizon, name="finite_random",
                      info={"family": "finite_random", "seed": seed})


# ---------------------------------------------------------------------------
# line world
# ---------------------------------------------------------------------------


def line_world_constants(slope: float, action_weight: float, horizon: int) -> LipschitzConstants:
    """Continuity constants of the line world under ``|ds| + w * |da|``.

    With reward ``tent(s)`` of slope ``slope`` and a 1-Lipschitz clipped
    successor, ``V*_h`` has slope at most ``slope * (H - h + 1)`` in the
    state, so ``Q*_h`` changes by at most ``slope * H`` per unit of state and
    ``slope * (H - 1)`` per unit of action. The successor moves by at most
    ``|ds| + |da| <= max(1, 1/w) * dist``.
    """
    l1 = slope * max(horizon, (horizon - 1) / action_weight)
    l2 = max(1.0, 1.0 / action_weight)
    return LipschitzConstants(l1, l2)


def make_line_world(seed: int, n_actions: int = 11, horizon: int = 3,
                    bump_params: dict | None = None) -> EnvironmentSpec:
    """Walk on ``[0, 1]`` with clipped displacement actions.

    ``bump_params`` may set ``slope`` (tent slope, default 1),
    ``action_weight`` (weight of the action coordinate in the metric,
    default 1), ``peak`` and ``initial_state`` (default: seeded, rounded to
    three decimals).
    """
    if n_actions < 2:
        raise ContractViolation("line world needs at least two actions")
    params = {"slope": 1.0, "action_weight": 1.0, **(bump_params or {})}
    unknown = set(params) - {"slope", "action_weight", "peak", "initial_state"}
    if unknown:
        raise ContractViolation(f"unknown bump parameters {sorted(unknown)}")
    rng = np.random.default_rng(seed)
    peak = round(float(rng.uniform(0.0, 1.0)), 3)
    s0 = round(float(rng.uniform(0.0, 1.0)), 3)
    peak = float(params.get("peak", peak))
    s0 = float(params.get("initial_state", s0))
    slope = float(params["slope"])
    weight = float(params["action_weight"])
    if slope < 0 or weight <= 0:
        raise ContractViolation("slope must be >= 0 and action_weight > 0")
    actions = tuple(float(a) for a in np.round(np.linspace(-0.25, 0.25, n_actions), 12))

    def transition(s, a):
        return min(1.0, max(0.0, s + a))

    def reward(s, a):
        return max(0.0, 1.0 - slope * abs(s - peak))

    return EnvironmentSpec(
        actions=actions,
        horizon=int(horizon),
        initial_state=s0,
        transition=transition,
        reward=reward,
        metric=ProductL1Metric(weight),
        lipschitz=line_world_constants(slope, weight, horizon),
        state_bounds=(0.0, 1.0),
        name="line_world",
        info={"family": "line_world", "seed": seed, "peak": peak, "slope": slope,
              "action_weight": weight, "diameter": 1.0 + weight * 0.5,
              "doubling_dimension": 1},
    )


# ---------------------------------------------------------------------------
# hard instance
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HardInstanceSpec:
    n_states: int
    n_actions: int
    horizon: int
    tree_size: int
    tree_depth: int          # ceil(log2(tree_size))
    leaves: tuple
    star_pair: tuple         # (leaf state, action index)
    star_steps: int          # stages needed to act at the star leaf
    absorbing_reward_state: int
    absorbing_null_state: int
    seed: int

    @property
    def leaf_count(self) -> int:
        return len(self.leaves)

    @property
    def max_star_steps(self) -> int:
        """Stages needed to act at the deepest leaf; the worst case over star draws."""
        return node_depth(max(self.leaves)) + 1

    @property
    def optimal_value(self) -> float:
        return float(max(self.horizon - self.star_steps, 0))


def node_depth(i: int) -> int:
    """Depth of node ``i`` in a heap-ordered binary tree (root depth 0)."""
    return (i + 1).bit_length() - 1


def make_hard_instance(seed: int, n_states: int, n_actions: int, horizon: int):
    """Binary tree of ``n_states - 2`` nodes plus absorbing ``s_n`` and ``s_r``.

    Nodes are heap-ordered (children of ``i`` are ``2i+1`` and ``2i+2``), so
    the tree is complete and the last level fills left to right. Action 0
    moves to the left child, every other action to the right child; a missing
    child leads to ``s_n``. Exactly one leaf action moves to ``s_r``.
    """
    if n_states < 4:
        raise ContractViolation("hard instance needs at least 4 states")
    if n_actions < 1:
        raise ContractViolation("hard instance needs at least one action")
    if horizon < math.ceil(math.log2(n_states)):
        raise ContractViolation("horizon must be at least ceil(log2(n_states))")
    n = n_states - 2
    s_n, s_r = n, n + 1
    nxt = np.empty((n_states, n_actions), dtype=int)
    rew = np.zeros((n_states, n_actions))
    for i in range(n):
        left, right = 2 * i + 1, 2 * i + 2
        nxt[i, 0] = left if left < n else s_n
        nxt[i, 1:] = right if right < n else s_n
    nxt[s_n, :] = s_n
    nxt[s_r, :] = s_r
    rew[s_r, :] = 1.0
    leaves = tuple(i for i in range(n) if 2 * i + 1 >= n)

    rng = np.random.default_rng(seed)
    pick = int(rng.integers(0, len(leaves) * n_actions))
    star = (leaves[pick // n_actions], pick % n_actions)
    nxt[star] = s_r

    spec = HardInstanceSpec(
        n_states=n_states, n_actions=n_actions, horizon=horizon, tree_size=n,
        tree_depth=math.ceil(math.log2(n)) if n > 1 else 0, leaves=leaves, star_pair=star,
        star_steps=node_depth(star[0]) + 1, absorbing_reward_state=s_r,
        absorbing_null_state=s_n, seed=seed,
    )
    env = finite_env(nxt, rew, horizon, initial_state=0, name="hard_instance",
                     info={"family": "hard_instance", "seed": seed,
                           "leaf_count": len(leaves), "tree_depth": spec.tree_depth})
    return env, spec


# ---------------------------------------------------------------------------
# cluster-linear
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ClusterLinearSpec:
    d: int
    states_per_cluster: int
    n_abstract_states: int
    cluster_of: np.ndarray       # (S, A) cluster index of each pair
    cluster_reward: np.ndarray   # (d,)
    cluster_next: np.ndarray     # (d,) abstract successor of each cluster

    def features(self, s, a) -> np.ndarray:
        phi = np.zeros(self.d)
        phi[self.cluster_of[int(s), int(a)]] = 1.0
        return phi


def make_cluster_linear(seed: int, d: int, states_per_cluster: int, n_actions: int,
                        horizon: int):
    """Finite MDP whose value functions are linear in one-hot cluster features.

    An abstract MDP with ``ceil(d / A)`` states has its pairs mapped onto
    ``d`` clusters (``(z, a) -> (z * A + a) mod d``); each cluster carries one
    reward and one abstract successor. Every abstract state is expanded into
    ``states_per_cluster`` concrete states, and a concrete successor is a
    seeded member of the abstract successor. Members of a cluster therefore
    share reward and successor value, so ``Q*_h`` is constant on clusters.
    """
    if d < 1 or states_per_cluster < 1 or n_actions < 1:
        raise ContractViolation("d, states_per_cluster and n_actions must be positive")
    rng = np.random.default_rng(seed)
    m = -(-d // n_actions)
    cluster_reward = np.round(rng.uniform(0.0, 1.0, size=d), 3)
    cluster_next = rng.integers(0, m, size=d)
    n_states = m * states_per_cluster
    abstract = np.arange(n_states) // states_per_cluster
    cluster_of = (abstract[:, None] * n_actions + np.arange(n_actions)[None, :]) % d
    members = rng.integers(0, states_per_cluster, size=(n_states, n_actions))
    nxt = cluster_next[cluster_of] * states_per_cluster + members
    rew = cluster_reward[cluster_of]
    cluster_of.setflags(write=False)
    spec = ClusterLinearSpec(d=d, states_per_cluster=states_per_cluster, n_abstract_states=m,
                             cluster_of=cluster_of, cluster_reward=cluster_reward,
                             cluster_next=cluster_next)
    env = finite_env(nxt, rew, horizon, name="cluster_linear", feature_map=spec.features,
                     info={"family": "cluster_linear", "seed": seed, "d": d})
    return env, spec

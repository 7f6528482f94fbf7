"""Ground-truth solvers: backward induction on finite MDPs and on state grids.

Arrays are indexed by ``stage - 1``; ``v_star`` has one extra trailing row of
zeros for the value after the last stage.
"""

from __future__ import annotations

import csv
import itertools
import warnings
from dataclasses import dataclass

import numpy as np

from .mdp import ContractViolation, EnvironmentSpec


@dataclass
class ValueSolution:
    q_star: np.ndarray            # (H, N, A)
    v_star: np.ndarray            # (H + 1, N)
    v_star_initial: float
    states: np.ndarray            # state value of each row (finite: 0..S-1, grid: grid points)
    resolution: float | None = None
    error_bound: float = 0.0
    coarse: bool = False
    bounds: tuple | None = None
    grid_shape: tuple | None = None

    @property
    def horizon(self) -> int:
        return self.q_star.shape[0]

    def index_of(self, state) -> int:
        if self.resolution is None:
            return int(state)
        return int(_snap(np.asarray([state], dtype=float), self.bounds, self.grid_shape)[0])

    def q(self, h: int, state, action_index: int) -> float:
        return float(self.q_star[h - 1, self.index_of(state), action_index])

    def v(self, h: int, state) -> float:
        return float(self.v_star[h - 1, self.index_of(state)])

    def greedy_action(self, h: int, state) -> int:
        return int(np.argmax(self.q_star[h - 1, self.index_of(state)]))

    def to_csv(self, path) -> None:
        """Write ``stage, state, action, q_value`` rows."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["stage", "state", "action", "q_value"])
            H, N, A = self.q_star.shape
            for h in range(H):
                for i in range(N):
                    s = self.states[i]
                    label = s if np.ndim(s) == 0 else " ".join(repr(float(c)) for c in np.ravel(s))
                    for a in range(A):
                        w.writerow([h + 1, label, a, repr(float(self.q_star[h, i, a]))])


def finite_tables(env: EnvironmentSpec):
    """``(next_state, reward)`` tables of a finite environment, shape ``(S, A)``."""
    if not env.is_finite:
        raise ContractViolation("finite tables need a finite environment")
    if env.tables is not None:
        return env.tables
    S, A = env.n_states, env.n_actions
    nxt = np.empty((S, A), dtype=int)
    rew = np.empty((S, A))
    for s in range(S):
        for i, a in enumerate(env.actions):
            nxt[s, i] = env.transition(s, a)
            rew[s, i] = env.reward(s, a)
    return nxt, rew


def _backward(nxt: np.ndarray, rew: np.ndarray, horizon: int):
    n = nxt.shape[0]
    q = np.empty((horizon,) + nxt.shape)
    v = np.zeros((horizon + 1, n))
    for h in range(horizon - 1, -1, -1):
        q[h] = rew + v[h + 1][nxt]
        v[h] = q[h].max(axis=1)
    return q, v


def exact_dp(env: EnvironmentSpec) -> ValueSolution:
    """Exact backward induction on a finite environment."""
    nxt, rew = finite_tables(env)
    q, v = _backward(nxt, rew, env.horizon)
    return ValueSolution(q_star=q, v_star=v, v_star_initial=float(v[0, env.initial_state]),
                         states=np.arange(env.n_states))


def evaluate_policy(env: EnvironmentSpec, policy) -> np.ndarray:
    """Value ``V^pi`` of a policy on a finite environment, shape ``(H + 1, S)``.

    ``policy`` is either an ``(H, S)`` array of action indices or a callable
    ``policy(state, stage) -> action index``.
    """
    nxt, rew = finite_tables(env)
    S, H = env.n_states, env.horizon
    if callable(policy):
        table = np.array([[policy(s, h) for s in range(S)] for h in range(1, H + 1)], dtype=int)
    else:
        table = np.asarray(policy, dtype=int)
    v = np.zeros((H + 1, S))
    idx = np.arange(S)
    for h in range(H - 1, -1, -1):
        a = table[h]
        v[h] = rew[idx, a] + v[h + 1][nxt[idx, a]]
    return v


def rollout(env: EnvironmentSpec, action_indices) -> list:
    """Rewards collected from the initial state under a fixed action sequence."""
    s, rewards = env.initial_state, []
    for i in action_indices:
        a = env.actions[i]
        rewards.append(float(env.reward(s, a)))
        s = env.transition(s, a)
    return rewards


def _sum_backward(rewards):
    total = 0.0
    for r in reversed(rewards):
        total = r + total
    return total


def brute_force_value(env: EnvironmentSpec):
    """Best total reward over all ``A**H`` open-loop action sequences.

    Sums are accumulated from the last stage backwards so that the result is
    bitwise comparable with backward induction. Returns ``(value, sequence)``.
    """
    best, best_seq = -np.inf, None
    for seq in itertools.product(range(env.n_actions), repeat=env.horizon):
        total = _sum_backward(rollout(env, seq))
        if total > best:
            best, best_seq = total, seq
    return best, best_seq


# ---------------------------------------------------------------------------
# grid discretisation
# ---------------------------------------------------------------------------


def _snap(points: np.ndarray, bounds, per_axis) -> np.ndarray:
    """Nearest grid index per point; exact ties go to the lower coordinate."""
    lo, hi = (np.atleast_1d(np.asarray(b, dtype=float)) for b in bounds)
    pts = points.reshape(len(points), -1)
    counts = np.asarray(per_axis)
    mesh = (hi - lo) / (counts - 1)
    t = (pts - lo) / mesh
    idx = np.clip(np.ceil(t - 0.5), 0, counts - 1).astype(int)
    return np.ravel_multi_index(tuple(idx.T), tuple(counts))


def grid_dp(env: EnvironmentSpec, mesh: float) -> ValueSolution:
    """Backward induction on a regular grid over ``env.state_bounds``.

    Next states are snapped to the nearest grid point. The attached
    ``error_bound`` is ``L * mesh * H`` with ``L`` from the environment's
    Lipschitz constants; ``coarse`` is set when that bound reaches ``H``.
    """
    if env.state_bounds is None:
        raise ContractViolation("grid_dp needs an environment with state_bounds")
    if env.lipschitz is None:
        raise ContractViolation("grid_dp needs Lipschitz constants for its error bound")
    if mesh <= 0:
        raise ContractViolation("mesh must be positive")
    lo, hi = (np.atleast_1d(np.asarray(b, dtype=float)) for b in env.state_bounds)
    counts = np.maximum(np.round((hi - lo) / mesh).astype(int), 1) + 1
    axes = [np.linspace(l, h, c) for l, h, c in zip(lo, hi, counts)]
    grid = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=1)
    scalar = lo.size == 1 and np.ndim(env.initial_state) == 0
    states = grid[:, 0] if scalar else grid

    n, A = len(grid), env.n_actions
    nxt = np.empty((n, A), dtype=int)
    rew = np.empty((n, A))
    for j, a in enumerate(env.actions):
        succ = np.array([env.transition(s, a) for s in states], dtype=float)
        nxt[:, j] = _snap(succ, (lo, hi), counts)
        rew[:, j] = [env.reward(s, a) for s in states]
    q, v = _backward(nxt, rew, env.horizon)

    actual_mesh = float(np.max((hi - lo) / (counts - 1)))
    bound = env.lipschitz.l * actual_mesh * env.horizon
    coarse = bound >= env.horizon
    if coarse:
        warnings.warn(f"grid error bound {bound:.3g} is not below the horizon", RuntimeWarning,
                      stacklevel=2)
    init = int(_snap(np.asarray([env.initial_state], dtype=float), (lo, hi), counts)[0])
    return ValueSolution(q_star=q, v_star=v, v_star_initial=float(v[0, init]), states=states,
                         resolution=actual_mesh, error_bound=bound, coarse=coarse,
                         bounds=(lo, hi), grid_shape=tuple(int(c) for c in counts))


def solve(env: EnvironmentSpec, mesh: float = 1e-3) -> ValueSolution:
    """``exact_dp`` for finite environments, ``grid_dp`` otherwise."""
    return exact_dp(env) if env.is_finite else grid_dp(env, mesh)

"""Deterministic finite-horizon MDPs, metrics, experience buffers and regret.

States are opaque to this module: finite environments use integer indices,
continuous ones use floats or small float vectors. Actions are always a
finite ordered tuple of values.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

#: Returned by :func:`nearest_gap` for an empty buffer.
INFINITE_GAP = float("inf")


class ContractViolation(ValueError):
    """A caller broke a precondition (unknown action, bad trajectory, ...)."""


class EnvironmentIntegrityError(RuntimeError):
    """The environment produced something outside its declared contract."""


class DeterminismViolation(EnvironmentIntegrityError):
    """The same (state, action) produced two different outcomes."""


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------


def _as_rows(values) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim <= 1:
        return arr.reshape(-1, 1)
    return arr.reshape(arr.shape[0], -1)


class Metric:
    """Pseudometric over state-action pairs.

    Subclasses implement :meth:`pairwise`, which works on stacked states and
    stacked action values and returns the full distance matrix.
    """

    #: True when dist = state_distance + action_distance.
    separable = False

    def pairwise(self, states1, actions1, states2, actions2) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, x, y) -> float:
        (s1, a1), (s2, a2) = x, y
        return float(self.pairwise([s1], [a1], [s2], [a2])[0, 0])


class DiscreteMetric(Metric):
    """Distance ``scale`` between distinct pairs and 0 between equal ones."""

    def __init__(self, scale: float):
        self.scale = float(scale)

    def pairwise(self, states1, actions1, states2, actions2):
        x = np.hstack([_as_rows(states1), _as_rows(actions1)])
        y = np.hstack([_as_rows(states2), _as_rows(actions2)])
        differ = (x[:, None, :] != y[None, :, :]).any(axis=-1)
        return self.scale * differ

    def __repr__(self):
        return f"DiscreteMetric(scale={self.scale})"


class ProductL1Metric(Metric):
    """``||s - s'||_1 + action_weight * ||a - a'||_1`` on real states/actions."""

    separable = True

    def __init__(self, action_weight: float = 1.0):
        self.action_weight = float(action_weight)

    def state_distance(self, states1, states2) -> np.ndarray:
        x, y = _as_rows(states1), _as_rows(states2)
        return np.abs(x[:, None, :] - y[None, :, :]).sum(axis=-1)

    def action_distance(self, actions1, actions2) -> np.ndarray:
        x, y = _as_rows(actions1), _as_rows(actions2)
        return self.action_weight * np.abs(x[:, None, :] - y[None, :, :]).sum(axis=-1)

    def pairwise(self, states1, actions1, states2, actions2):
        return self.state_distance(states1, states2) + self.action_distance(actions1, actions2)

    def __repr__(self):
        return f"ProductL1Metric(action_weight={self.action_weight})"


def check_pseudometric(metric: Metric, pairs: Sequence[tuple], tol: float = 1e-12,
                       max_triples: int = 20000, seed: int = 0) -> dict:
    """Check symmetry and the triangle inequality on sampled pairs.

    Returns worst-case symmetry and triangle violations; triples are
    enumerated when few enough, otherwise sampled.
    """
    states = [p[0] for p in pairs]
    actions = [p[1] for p in pairs]
    d = metric.pairwise(states, actions, states, actions)
    n = len(pairs)
    asym = float(np.max(np.abs(d - d.T))) if n else 0.0
    if n ** 3 <= max_triples:
        i, j, k = (idx.ravel() for idx in np.indices((n, n, n)))
    else:
        rng = np.random.default_rng(seed)
        i, j, k = rng.integers(0, n, size=(3, max_triples))
    worst_triangle = float(np.max(d[i, k] - d[i, j] - d[j, k])) if n else 0.0
    return {
        "symmetric": asym == 0.0,
        "max_asymmetry": asym,
        "triangle": worst_triangle <= tol,
        "max_triangle_excess": max(worst_triangle, 0.0),
        "nonnegative": bool((d >= 0).all()),
    }


# ---------------------------------------------------------------------------
# environments
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LipschitzConstants:
    """Q*-continuity ``l1`` and transition-continuity ``l2``; ``l = (l2+1)*l1``."""

    l1: float
    l2: float

    def __post_init__(self):
        if self.l1 < 0 or self.l2 < 0:
            raise ContractViolation("Lipschitz constants must be nonnegative")

    @property
    def l(self) -> float:
        return (self.l2 + 1.0) * self.l1


@dataclass(frozen=True, eq=False)
class EnvironmentSpec:
    """A deterministic finite-horizon MDP with a metric on state-action pairs.

    ``transition`` and ``reward`` take a state and an action *value*.
    Finite environments set ``n_states`` (states are ``0..n_states-1``) and
    may carry ``tables = (next_state, reward)`` indexed by action position.
    Continuous environments set ``state_bounds = (low, high)``.
    """

    actions: tuple
    horizon: int
    initial_state: Any
    transition: Callable[[Any, Any], Any]
    reward: Callable[[Any, Any], float]
    metric: Metric
    lipschitz: LipschitzConstants | None = None
    n_states: int | None = None
    state_bounds: tuple | None = None
    feature_map: Callable[[Any, Any], np.ndarray] | None = None
    tables: tuple | None = None
    name: str = "env"
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.horizon < 1:
            raise ContractViolation("horizon must be a positive integer")
        if len(self.actions) == 0:
            raise ContractViolation("action list must be nonempty")
        object.__setattr__(self, "actions", tuple(self.actions))

    @property
    def is_finite(self) -> bool:
        return self.n_states is not None

    @property
    def n_actions(self) -> int:
        return len(self.actions)

    def action_index(self, action) -> int:
        for i, a in enumerate(self.actions):
            if np.array_equal(a, action):
                return i
        raise ContractViolation(f"unknown action {action!r}")

    def state_action_pairs(self):
        """All (state, action) pairs of a finite environment."""
        if not self.is_finite:
            raise ContractViolation("state_action_pairs needs a finite environment")
        return [(s, a) for s in range(self.n_states) for a in self.actions]


def finite_env(next_state, rewards, horizon: int, initial_state: int = 0,
               metric: Metric | None = None, name: str = "finite", **kwargs) -> EnvironmentSpec:
    """Build a finite environment from ``(S, A)`` transition and reward tables.

    The default metric is the discrete one with distance ``horizon`` between
    distinct pairs, for which ``l1 = l2 = 1`` are valid continuity constants.
    """
    next_state = np.asarray(next_state, dtype=int)
    rewards = np.asarray(rewards, dtype=float)
    if next_state.shape != rewards.shape or next_state.ndim != 2:
        raise ContractViolation("transition and reward tables must both be (S, A)")
    n_states, n_actions = next_state.shape
    if next_state.min() < 0 or next_state.max() >= n_states:
        raise ContractViolation("transition table points outside the state set")
    next_state.setflags(write=False)
    rewards.setflags(write=False)
    kwargs.setdefault("lipschitz", LipschitzConstants(1.0, 1.0))
    return EnvironmentSpec(
        actions=tuple(range(n_actions)),
        horizon=int(horizon),
        initial_state=int(initial_state),
        transition=lambda s, a: int(next_state[s, a]),
        reward=lambda s, a: float(rewards[s, a]),
        metric=metric if metric is not None else DiscreteMetric(horizon),
        n_states=n_states,
        tables=(next_state, rewards),
        name=name,
        **kwargs,
    )


def step(env: EnvironmentSpec, s, a):
    """Apply one deterministic transition; returns ``(next_state, reward)``."""
    env.action_index(a)
    r = float(env.reward(s, a))
    if not (0.0 <= r <= 1.0):
        raise EnvironmentIntegrityError(f"reward {r} at ({s!r}, {a!r}) is outside [0, 1]")
    return env.transition(s, a), r


def check_reward_range(env: EnvironmentSpec, pairs=None) -> bool:
    pairs = env.state_action_pairs() if pairs is None else pairs
    return all(0.0 <= env.reward(s, a) <= 1.0 for s, a in pairs)


# ---------------------------------------------------------------------------
# experience
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TransitionRecord:
    state: Any
    action: Any
    next_state: Any
    reward: float
    episode_index: int
    stage_index: int

    def __post_init__(self):
        if not (0.0 <= self.reward <= 1.0):
            raise ContractViolation(f"reward {self.reward} outside [0, 1]")
        if self.stage_index < 1:
            raise ContractViolation("stage indices start at 1")


@dataclass(frozen=True)
class ExperienceBuffer:
    """Append-only collection of observed transitions."""

    records: tuple = ()

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)


def append_episode(buffer: ExperienceBuffer, trajectory: Sequence[TransitionRecord],
                   horizon: int) -> ExperienceBuffer:
    """Return a new buffer holding ``buffer`` followed by one full episode."""
    trajectory = tuple(trajectory)
    if len(trajectory) != horizon:
        raise ContractViolation(f"expected {horizon} records, got {len(trajectory)}")
    if [t.stage_index for t in trajectory] != list(range(1, horizon + 1)):
        raise ContractViolation("trajectory stages must be 1..H in order")
    return ExperienceBuffer(buffer.records + trajectory)


def nearest_gap(buffer: ExperienceBuffer, x: tuple, metric: Metric) -> float:
    """Distance from pair ``x`` to its nearest buffered pair."""
    if len(buffer) == 0:
        return INFINITE_GAP
    d = metric.pairwise([x[0]], [x[1]],
                        [r.state for r in buffer], [r.action for r in buffer])
    if np.isnan(d).any():
        raise ContractViolation("metric returned NaN")
    return float(d.min())


# ---------------------------------------------------------------------------
# regret accounting
# ---------------------------------------------------------------------------


def episode_regret(v_star_initial: float, trajectory_rewards: Sequence[float]) -> float:
    return v_star_initial - sum(trajectory_rewards)


@dataclass
class RegretLedger:
    """Per-episode regret rows. Holds only deterministic quantities (no timings)."""

    v_star_initial: float
    episodes: list = field(default_factory=list)
    episode_rewards: list = field(default_factory=list)
    instant_regrets: list = field(default_factory=list)
    cumulative_regrets: list = field(default_factory=list)
    buffer_sizes: list = field(default_factory=list)

    def record(self, episode_reward: float, buffer_size: int) -> float:
        inst = self.v_star_initial - episode_reward
        prev = self.cumulative_regrets[-1] if self.cumulative_regrets else 0.0
        self.episodes.append(len(self.episodes) + 1)
        self.episode_rewards.append(episode_reward)
        self.instant_regrets.append(inst)
        self.cumulative_regrets.append(prev + inst)
        self.buffer_sizes.append(buffer_size)
        return inst

    def __len__(self):
        return len(self.episodes)

    @property
    def total(self) -> float:
        return self.cumulative_regrets[-1] if self.cumulative_regrets else 0.0

    def episodes_with_regret(self, tol: float = 1e-9) -> int:
        return sum(1 for r in self.instant_regrets if r > tol)

    def plateau_episode(self, tol: float = 1e-9) -> int:
        """Last episode with instant regret above ``tol`` (0 if none)."""
        last = 0
        for k, r in zip(self.episodes, self.instant_regrets):
            if r > tol:
                last = k
        return last

    def as_array(self) -> np.ndarray:
        return np.column_stack([self.episodes, self.episode_rewards, self.instant_regrets,
                                self.cumulative_regrets, self.buffer_sizes])

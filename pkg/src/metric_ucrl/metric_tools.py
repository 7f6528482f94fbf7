"""Nets, packings and regret-bound calculators.

Nets and packings are computed over finite samples of the state-action
space, so their sizes estimate the covering and packing numbers of the
underlying space rather than compute them.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .mdp import ContractViolation, EnvironmentSpec, Metric

_CHUNK = 2048


@dataclass(frozen=True)
class MetricSample:
    """A finite cloud of state-action pairs with the metric that compares them."""

    states: tuple
    actions: tuple
    metric: Metric

    def __len__(self):
        return len(self.states)

    @classmethod
    def from_pairs(cls, pairs, metric: Metric) -> "MetricSample":
        pairs = list(pairs)
        return cls(tuple(p[0] for p in pairs), tuple(p[1] for p in pairs), metric)

    def distances_from(self, i: int) -> np.ndarray:
        return self.metric.pairwise([self.states[i]], [self.actions[i]],
                                    self.states, self.actions)[0]

    def pairwise(self) -> np.ndarray:
        return self.metric.pairwise(self.states, self.actions, self.states, self.actions)


def grid_sample(env: EnvironmentSpec, mesh: float) -> MetricSample:
    """All pairs of a finite env, or state-grid x actions for a 1-D continuous env."""
    if env.is_finite:
        return MetricSample.from_pairs(env.state_action_pairs(), env.metric)
    lo, hi = env.state_bounds
    n = int(round((hi - lo) / mesh)) + 1
    grid = np.linspace(lo, hi, n)
    states = tuple(float(s) for s in grid for _ in env.actions)
    actions = tuple(a for _ in grid for a in env.actions)
    return MetricSample(states, actions, env.metric)


def diameter(sample: MetricSample) -> float:
    best = 0.0
    for lo in range(0, len(sample), _CHUNK):
        d = sample.metric.pairwise(sample.states[lo:lo + _CHUNK], sample.actions[lo:lo + _CHUNK],
                                   sample.states, sample.actions)
        best = max(best, float(d.max()))
    return best


@dataclass(frozen=True)
class CoverResult:
    epsilon: float
    centers: tuple        # indices into the sample
    kind: str             # "net" or "packing"

    @property
    def size(self) -> int:
        return len(self.centers)


def greedy_net(sample: MetricSample, eps: float, method: str = "first") -> CoverResult:
    """An ``eps``-net of the sample.

    ``method="first"`` repeatedly opens a center at the first uncovered point;
    ``method="farthest"`` opens it at the point farthest from all centers.
    Either way the centers are pairwise more than ``eps`` apart, so the net
    is also a packing.
    """
    if eps <= 0:
        raise ContractViolation("eps must be positive")
    n = len(sample)
    if n == 0:
        return CoverResult(eps, (), "net")
    centers = []
    if method == "first":
        uncovered = np.ones(n, dtype=bool)
        while uncovered.any():
            i = int(np.argmax(uncovered))
            centers.append(i)
            uncovered &= sample.distances_from(i) > eps
    elif method == "farthest":
        i = 0
        nearest = np.full(n, np.inf)
        while True:
            centers.append(i)
            nearest = np.minimum(nearest, sample.distances_from(i))
            i = int(np.argmax(nearest))
            if nearest[i] <= eps:
                break
    else:
        raise ContractViolation(f"unknown method {method!r}")
    return CoverResult(eps, tuple(centers), "net")


def greedy_packing(sample: MetricSample, eps: float, order: str = "min_degree") -> CoverResult:
    """Maximal ``eps``-packing built by greedy insertion.

    ``order="min_degree"`` repeatedly inserts the free point with the fewest
    free points within ``eps`` (ties to the lowest index), the usual greedy
    heuristic for large independent sets; it aims at the maximum packing.
    ``order="in_order"`` inserts points in sample order and yields the same
    centers as ``greedy_net(..., method="first")``.
    """
    if eps <= 0:
        raise ContractViolation("eps must be positive")
    n = len(sample)
    free = np.ones(n, dtype=bool)
    centers = []
    if order == "in_order":
        for i in range(n):
            if free[i]:
                centers.append(i)
                free &= sample.distances_from(i) > eps
    elif order == "min_degree":
        close = np.zeros((n, n), dtype=bool)
        for lo in range(0, n, _CHUNK):
            close[lo:lo + _CHUNK] = sample.metric.pairwise(
                sample.states[lo:lo + _CHUNK], sample.actions[lo:lo + _CHUNK],
                sample.states, sample.actions) <= eps
        degree = close.sum(axis=1)
        while free.any():
            i = int(np.argmin(np.where(free, degree, n + 1)))
            centers.append(i)
            removed = close[i] & free
            free &= ~removed
            degree -= close[:, removed].sum(axis=1)
    else:
        raise ContractViolation(f"unknown order {order!r}")
    return CoverResult(eps, tuple(sorted(centers)), "packing")


def is_net(sample: MetricSample, result: CoverResult) -> bool:
    """Every sample point lies within ``epsilon`` of some center."""
    if len(sample) == 0:
        return True
    if not result.centers:
        return False
    c = list(result.centers)
    d = sample.metric.pairwise(sample.states, sample.actions,
                               [sample.states[i] for i in c], [sample.actions[i] for i in c])
    return bool((d.min(axis=1) <= result.epsilon).all())


def is_packing(sample: MetricSample, result: CoverResult) -> bool:
    """Distinct centers are more than ``epsilon`` apart."""
    c = list(result.centers)
    if len(c) < 2:
        return True
    d = sample.metric.pairwise([sample.states[i] for i in c], [sample.actions[i] for i in c],
                               [sample.states[i] for i in c], [sample.actions[i] for i in c])
    off = ~np.eye(len(c), dtype=bool)
    return bool((d[off] > result.epsilon).all())


def is_maximal_packing(sample: MetricSample, result: CoverResult) -> bool:
    """No further sample point can join the packing."""
    if not is_packing(sample, result):
        return False
    chosen = set(result.centers)
    rest = [i for i in range(len(sample)) if i not in chosen]
    if not rest:
        return True
    c = list(result.centers)
    d = sample.metric.pairwise([sample.states[i] for i in rest], [sample.actions[i] for i in rest],
                               [sample.states[i] for i in c], [sample.actions[i] for i in c])
    return bool((d.min(axis=1) <= result.epsilon).all())


# ---------------------------------------------------------------------------
# bounds
# ---------------------------------------------------------------------------


def regret_upper_bound(net_size: float, eps: float, lipschitz: float, episodes: float,
                       horizon: float) -> float:
    """``H * |net| + 2 * eps * L * K * H``."""
    if min(net_size, eps, lipschitz, episodes, horizon) < 0:
        raise ContractViolation("bound inputs must be nonnegative")
    return horizon * net_size + 2.0 * eps * lipschitz * episodes * horizon


def optimal_epsilon(diam: float, lipschitz: float, episodes: float, dim: int) -> float:
    """Net radius ``D^(d/(d+1)) * (L K)^(-1/(d+1))`` balancing the two bound terms."""
    if diam <= 0 or lipschitz <= 0 or episodes <= 0:
        raise ContractViolation("D, L and K must be positive")
    if dim < 1 or int(dim) != dim:
        raise ContractViolation("dimension must be a positive integer")
    return diam ** (dim / (dim + 1)) * (lipschitz * episodes) ** (-1.0 / (dim + 1))


def regret_lower_bound(packing_size: float, episodes: float, horizon: float,
                       tree_depth: float) -> float:
    """Reference lower bound for the tree-shaped hard family.

    With ``p = K / C`` the expected regret of any algorithm is at least
    ``(1 - p) * K * (H - depth)`` for ``K < C``. Cumulative regret cannot
    decrease in ``K``, so past ``K = C / 2`` the value stays at its maximum
    ``C / 4 * (H - depth)``.
    """
    if min(packing_size, episodes, horizon, tree_depth) < 0:
        raise ContractViolation("bound inputs must be nonnegative")
    if tree_depth >= horizon:
        warnings.warn("tree depth reaches the horizon; the bound is vacuous", RuntimeWarning,
                      stacklevel=2)
        return 0.0
    if packing_size == 0 or episodes == 0:
        return 0.0
    k = min(float(episodes), packing_size / 2.0)
    return (1.0 - k / packing_size) * k * (horizon - tree_depth)


def net_size_scale(diam: float, eps: float, dim: int) -> float:
    """``(D / eps)^d``, the order of the net size in doubling dimension ``d``."""
    return (diam / eps) ** dim


def bound_at_optimal_epsilon(diam: float, lipschitz: float, episodes: float, horizon: float,
                             dim: int) -> tuple[float, float, float]:
    """Return ``(eps*, H*(D/eps*)^d, 2*eps*L*K*H)``; both terms scale as ``(DLK)^(d/(d+1)) H``."""
    eps = optimal_epsilon(diam, lipschitz, episodes, dim)
    return eps, horizon * net_size_scale(diam, eps, dim), 2 * eps * lipschitz * episodes * horizon


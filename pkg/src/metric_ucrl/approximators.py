"""Optimistic function approximators over state-action pairs.

Every evaluator maps key-value data ``{(x_i, y_i)}`` to a function that
upper-bounds any suitably regular function agreeing with the data:

* :class:`NearestNeighborEvaluator` -- the Lipschitz upper envelope
  ``min(cap, min_i y_i + L * dist(x, x_i))``;
* :class:`LinearSpanEvaluator` -- least-squares extrapolation inside the span
  of observed features, ``cap`` outside it;
* :class:`TabularEvaluator` -- stored value at seen keys, a default elsewhere.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .mdp import ContractViolation, Metric

_CHUNK = 2048


@dataclass(frozen=True)
class KeyValueSet:
    """Keys ``(states[i], actions[i])`` with values ``values[i]``."""

    states: tuple
    actions: tuple
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float).reshape(-1)
        if not (len(self.states) == len(self.actions) == len(values)):
            raise ContractViolation("states, actions and values must have equal length")
        if not np.isfinite(values).all():
            raise ContractViolation("key-value set holds non-finite values")
        object.__setattr__(self, "states", tuple(self.states))
        object.__setattr__(self, "actions", tuple(self.actions))
        object.__setattr__(self, "values", values)

    @classmethod
    def from_pairs(cls, pairs: Sequence[tuple], values) -> "KeyValueSet":
        pairs = list(pairs)
        return cls(tuple(p[0] for p in pairs), tuple(p[1] for p in pairs), values)

    @classmethod
    def empty(cls) -> "KeyValueSet":
        return cls((), (), np.zeros(0))

    def __len__(self):
        return len(self.values)

    @property
    def pairs(self):
        return list(zip(self.states, self.actions))


class NearestNeighborEvaluator:
    """Lipschitz upper envelope of key-value data.

    For a separable metric the envelope over a product of query states and a
    finite action list is computed per key-action group, which avoids the
    full ``queries x keys`` distance matrix in the action dimension.
    """

    kind = "nearest_neighbor"

    def __init__(self, kv: KeyValueSet, metric: Metric, lipschitz: float, cap: float):
        if lipschitz < 0:
            raise ContractViolation("Lipschitz constant must be nonnegative")
        if cap <= 0:
            raise ContractViolation("cap must be positive")
        self.kv = kv
        self.metric = metric
        self.lipschitz = float(lipschitz)
        self.cap = float(cap)
        self._groups = None

    def evaluate(self, states, actions) -> np.ndarray:
        """Envelope at the pairs ``zip(states, actions)``."""
        states, actions = list(states), list(actions)
        out = np.full(len(states), self.cap)
        if len(self.kv) == 0 or not states:
            return out
        for lo in range(0, len(states), _CHUNK):
            d = self.metric.pairwise(states[lo:lo + _CHUNK], actions[lo:lo + _CHUNK],
                                     self.kv.states, self.kv.actions)
            if np.isnan(d).any():
                raise ContractViolation("metric returned NaN")
            env = (self.kv.values[None, :] + self.lipschitz * d).min(axis=1)
            out[lo:lo + _CHUNK] = np.minimum(self.cap, env)
        return out

    def evaluate_grid(self, states, action_list) -> np.ndarray:
        """Envelope on ``states x action_list``; returns shape ``(n_states, n_actions)``."""
        states, action_list = list(states), list(action_list)
        n, m = len(states), len(action_list)
        if len(self.kv) == 0 or n == 0:
            return np.full((n, m), self.cap)
        if not self.metric.separable:
            qs = [s for s in states for _ in action_list]
            qa = action_list * n
            return self.evaluate(qs, qa).reshape(n, m)
        group_actions, starts, order = self._action_groups()
        key_states = [self.kv.states[i] for i in order]
        values = self.kv.values[order]
        adist = self.metric.action_distance(action_list, group_actions)  # (m, g)
        out = np.empty((n, m))
        for lo in range(0, n, _CHUNK):
            sd = self.metric.state_distance(states[lo:lo + _CHUNK], key_states)
            if np.isnan(sd).any():
                raise ContractViolation("metric returned NaN")
            per_group = np.minimum.reduceat(values[None, :] + self.lipschitz * sd, starts, axis=1)
            env = (per_group[:, None, :] + self.lipschitz * adist[None, :, :]).min(axis=2)
            out[lo:lo + _CHUNK] = np.minimum(self.cap, env)
        return out

    def _action_groups(self):
        if self._groups is None:
            acts = np.asarray(self.kv.actions, dtype=float).reshape(len(self.kv), -1)
            uniq, inverse = np.unique(acts, axis=0, return_inverse=True)
            inverse = inverse.reshape(-1)
            order = np.argsort(inverse, kind="stable")
            starts = np.searchsorted(inverse[order], np.arange(len(uniq)))
            group_actions = [u[0] if u.size == 1 else u for u in uniq]
            self._groups = (group_actions, starts, order)
        return self._groups

    def __call__(self, s, a) -> float:
        return float(self.evaluate([s], [a])[0])


def nn_evaluate(kv: KeyValueSet, metric: Metric, lipschitz: float, x: tuple, cap: float) -> float:
    """``min(cap, min_i y_i + L * dist(x, x_i))``; ``cap`` for empty data."""
    return NearestNeighborEvaluator(kv, metric, lipschitz, cap)(*x)


class LinearSpanEvaluator:
    """Minimum-norm least-squares fit in feature space, ``cap`` off the span.

    Span membership is decided by the norm of the residual of projecting the
    query feature onto the span of the observed features.
    """

    kind = "linear_span"

    def __init__(self, kv: KeyValueSet, feature_map: Callable, cap: float,
                 span_tol: float = 1e-8, clamp: bool = False):
        self.kv = kv
        self.feature_map = feature_map
        self.cap = float(cap)
        self.span_tol = float(span_tol)
        self.clamp = clamp
        self._cache = {}
        if len(kv) == 0:
            self.basis = None
            self.weights = None
            return
        phi = np.array([np.asarray(feature_map(s, a), dtype=float) for s, a in kv.pairs])
        zero = ~phi.any(axis=1) & (kv.values != 0)
        if zero.any():
            warnings.warn("all-zero feature vector carries a nonzero value", RuntimeWarning,
                          stacklevel=2)
        u, sv, vt = np.linalg.svd(phi, full_matrices=False)
        rank = int((sv > sv.max(initial=0.0) * max(phi.shape) * np.finfo(float).eps).sum())
        self.basis = vt[:rank]
        self.weights = vt[:rank].T @ ((u[:, :rank].T @ kv.values) / sv[:rank])

    @property
    def dimension(self) -> int:
        return 0 if self.basis is None else self.basis.shape[0]

    def in_span(self, phi: np.ndarray) -> bool:
        if self.basis is None or self.basis.shape[0] == 0:
            return False
        residual = phi - self.basis.T @ (self.basis @ phi)
        return float(np.linalg.norm(residual)) <= self.span_tol * (1.0 + float(np.linalg.norm(phi)))

    def evaluate_feature(self, phi) -> float:
        phi = np.asarray(phi, dtype=float)
        if not self.in_span(phi):
            return self.cap
        value = float(phi @ self.weights)
        if self.clamp:
            value = min(max(value, 0.0), self.cap)
        return value

    def __call__(self, s, a) -> float:
        key = _pair_key(s, a)
        if key not in self._cache:
            self._cache[key] = self.evaluate_feature(self.feature_map(s, a))
        return self._cache[key]

    def evaluate(self, states, actions) -> np.ndarray:
        return np.array([self(s, a) for s, a in zip(states, actions)], dtype=float)

    def evaluate_grid(self, states, action_list) -> np.ndarray:
        states, action_list = list(states), list(action_list)
        return np.array([[self(s, a) for a in action_list] for s in states],
                        dtype=float).reshape(len(states), len(action_list))


def linear_evaluate(kv: KeyValueSet, feature_map: Callable, x: tuple, cap: float,
                    span_tol: float = 1e-8) -> float:
    return LinearSpanEvaluator(kv, feature_map, cap, span_tol)(*x)


def _pair_key(s, a):
    return (s if np.isscalar(s) else tuple(np.ravel(s)), a if np.isscalar(a) else tuple(np.ravel(a)))


class TabularEvaluator:
    """Stored value at seen keys (minimum over duplicates), ``default`` elsewhere."""

    kind = "tabular"

    def __init__(self, kv: KeyValueSet, default: float):
        self.kv = kv
        self.default = float(default)
        self.table = {}
        for s, a, y in zip(kv.states, kv.actions, kv.values):
            k = _pair_key(s, a)
            self.table[k] = min(self.table.get(k, np.inf), float(y))

    def __call__(self, s, a) -> float:
        return self.table.get(_pair_key(s, a), self.default)

    def evaluate(self, states, actions) -> np.ndarray:
        return np.array([self(s, a) for s, a in zip(states, actions)], dtype=float)

    def evaluate_grid(self, states, action_list) -> np.ndarray:
        states, action_list = list(states), list(action_list)
        return np.array([[self(s, a) for a in action_list] for s in states],
                        dtype=float).reshape(len(states), len(action_list))


@dataclass(frozen=True)
class PropertyReport:
    lipschitz_ok: bool
    dominance_ok: bool
    interpolation_ok: bool
    max_lipschitz_excess: float
    max_dominance_violation: float
    max_interpolation_error: float
    n_pairs: int

    @property
    def all_ok(self) -> bool:
        return self.lipschitz_ok and self.dominance_ok and self.interpolation_ok


def check_oracle_properties(evaluator, kv: KeyValueSet, metric: Metric, lipschitz: float,
                            sample_points: Sequence[tuple], q: Callable | None = None,
                            tol: float = 1e-9, delta: float = 0.0) -> PropertyReport:
    """Check Lipschitz continuity, dominance over ``q`` and interpolation of keys.

    Lipschitz continuity is tested on every unordered pair of sample points,
    dominance at every sample point (skipped when ``q`` is None) and
    interpolation at every key, the latter with slack ``delta``.
    """
    states = [p[0] for p in sample_points]
    actions = [p[1] for p in sample_points]
    n = len(states)
    values = evaluator.evaluate(states, actions)

    lip_excess, n_pairs = -np.inf, 0
    for lo in range(0, n, _CHUNK):
        d = metric.pairwise(states[lo:lo + _CHUNK], actions[lo:lo + _CHUNK], states, actions)
        diff = np.abs(values[lo:lo + _CHUNK, None] - values[None, :])
        rows = np.arange(lo, min(lo + _CHUNK, n))[:, None]
        upper = rows < np.arange(n)[None, :]
        if upper.any():
            lip_excess = max(lip_excess, float((diff - lipschitz * d)[upper].max()))
        n_pairs += int(upper.sum())
    lip_excess = max(lip_excess, 0.0)

    dom = 0.0
    if q is not None and n:
        truth = np.array([q(s, a) for s, a in sample_points], dtype=float)
        dom = max(float((truth - values).max()), 0.0)

    interp = 0.0
    if len(kv):
        at_keys = evaluator.evaluate(kv.states, kv.actions)
        interp = float(np.abs(at_keys - kv.values).max())

    return PropertyReport(
        lipschitz_ok=lip_excess <= tol,
        dominance_ok=dom <= tol,
        interpolation_ok=interp <= delta + tol,
        max_lipschitz_excess=lip_excess,
        max_dominance_violation=dom,
        max_interpolation_error=interp,
        n_pairs=n_pairs,
    )

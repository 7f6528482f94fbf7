"""Upper-confidence agents for deterministic MDPs and the training loop.

``TabularAgent`` keeps optimistic tables over a finite MDP and replans by
dynamic programming after every episode. ``UCRLFAAgent`` keeps an experience
buffer and, after every episode, rebuilds one optimistic Q evaluator per stage
from the buffer with a function-approximation oracle (nearest-neighbor
envelope, linear span, or tabular). Both act greedily with ties broken
towards the lowest action index.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .approximators import (KeyValueSet, LinearSpanEvaluator, NearestNeighborEvaluator,
                            TabularEvaluator)
from .mdp import (INFINITE_GAP, ContractViolation, DeterminismViolation, EnvironmentSpec,
                  ExperienceBuffer, RegretLedger, TransitionRecord, append_episode, step)
from .oracle import ValueSolution, solve

AGENT_KINDS = ("tabular", "ucrl-fa-nn", "ucrl-fa-linear", "ucrl-fa-tabular")


def _state_key(s):
    return s if np.ndim(s) == 0 else tuple(np.ravel(s).tolist())


# ---------------------------------------------------------------------------
# tabular
# ---------------------------------------------------------------------------


class TabularAgent:
    """Optimistic tables ``r_hat``, ``f_hat`` (-1 for unknown) and bonus ``b``."""

    kind = "tabular"

    def __init__(self, env: EnvironmentSpec):
        if not env.is_finite:
            raise ContractViolation("the tabular agent needs a finite environment")
        self.env = env
        S, A, H = env.n_states, env.n_actions, env.horizon
        self.r_hat = np.ones((S, A))
        self.f_hat = np.full((S, A), -1, dtype=int)
        self.bonus = np.full((S, A), float(H))
        self.q = np.full((H, S, A), float(H))

    def plan(self) -> np.ndarray:
        """Backward recursion over the current tables; unknown successors count 0."""
        H = self.env.horizon
        q = np.empty_like(self.q)
        q[H - 1] = self.r_hat
        known = self.f_hat >= 0
        for h in range(H - 2, -1, -1):
            v_next = q[h + 1].max(axis=1)
            cont = np.where(known, v_next[np.where(known, self.f_hat, 0)], 0.0)
            q[h] = np.minimum(H, self.r_hat + cont + self.bonus)
        self.q = q
        return q

    def act(self, s, h: int) -> int:
        return int(np.argmax(self.q[h - 1, s]))

    def observe(self, record: TransitionRecord) -> None:
        s, a = record.state, self.env.action_index(record.action)
        if self.bonus[s, a] == 0 and (self.f_hat[s, a] != record.next_state
                                      or self.r_hat[s, a] != record.reward):
            raise DeterminismViolation(f"pair ({s}, {record.action}) changed its outcome")
        self.f_hat[s, a] = record.next_state
        self.r_hat[s, a] = record.reward
        self.bonus[s, a] = 0.0

    def end_episode(self, trajectory) -> None:
        for rec in trajectory:
            self.observe(rec)
        self.plan()

    def q_values(self, s, h: int) -> np.ndarray:
        return self.q[h - 1, s].copy()

    def q_table(self, h: int) -> np.ndarray:
        return self.q[h - 1].copy()


# ---------------------------------------------------------------------------
# UCRL with function approximation
# ---------------------------------------------------------------------------


@dataclass
class LayeredQEstimate:
    """One evaluator per stage plus the successor values used to build them.

    ``v_next[i, h-1]`` is ``max_a Q_{h+1}(f(x_i), a)`` for unique buffered
    pair ``i`` (zero at the last stage).
    """

    evaluators: list
    v_next: np.ndarray
    actions: tuple

    def q_values(self, s, h: int) -> np.ndarray:
        return self.evaluators[h - 1].evaluate_grid([s], self.actions)[0]

    def q_grid(self, states, h: int) -> np.ndarray:
        return self.evaluators[h - 1].evaluate_grid(states, self.actions)

    def value(self, s, action, h: int) -> float:
        return float(self.evaluators[h - 1].evaluate([s], [action])[0])


class UCRLFAAgent:
    """Buffer-based optimistic agent, generic over the approximation oracle.

    ``cap_mode="stage"`` clamps stage ``h`` estimates at ``H - h + 1``;
    ``cap_mode="horizon"`` clamps every stage before the last at ``H``, which
    reproduces the tabular agent exactly under the discrete metric. The last
    stage is always clamped at 1.
    """

    def __init__(self, env: EnvironmentSpec, oracle: str = "nearest_neighbor",
                 l1: float | None = None, cap_mode: str = "stage", span_tol: float = 1e-8):
        if oracle not in ("nearest_neighbor", "linear_span", "tabular"):
            raise ContractViolation(f"unknown oracle {oracle!r}")
        if cap_mode not in ("stage", "horizon"):
            raise ContractViolation(f"unknown cap mode {cap_mode!r}")
        if oracle == "nearest_neighbor" and l1 is None:
            if env.lipschitz is None:
                raise ContractViolation("nearest-neighbor oracle needs a Lipschitz constant")
            l1 = env.lipschitz.l1
        if oracle == "linear_span" and env.feature_map is None:
            raise ContractViolation("linear-span oracle needs an environment feature map")
        self.env = env
        self.oracle = oracle
        self.l1 = None if l1 is None else float(l1)
        self.cap_mode = cap_mode
        self.span_tol = span_tol
        self.buffer = ExperienceBuffer()
        self._index = {}
        self._states, self._actions, self._next, self._rewards = [], [], [], []
        self.estimate = self.recompute()

    @property
    def kind(self) -> str:
        return {"nearest_neighbor": "ucrl-fa-nn", "linear_span": "ucrl-fa-linear",
                "tabular": "ucrl-fa-tabular"}[self.oracle]

    @property
    def n_keys(self) -> int:
        return len(self._states)

    def cap(self, h: int) -> float:
        H = self.env.horizon
        if h == H:
            return 1.0
        return float(H - h + 1) if self.cap_mode == "stage" else float(H)

    def _evaluator(self, kv: KeyValueSet, h: int):
        cap = self.cap(h)
        if self.oracle == "nearest_neighbor":
            return NearestNeighborEvaluator(kv, self.env.metric, self.l1, cap)
        if self.oracle == "linear_span":
            return LinearSpanEvaluator(kv, self.env.feature_map, cap, self.span_tol, clamp=True)
        return TabularEvaluator(kv, cap)

    def recompute(self) -> LayeredQEstimate:
        """Rebuild every stage evaluator from the buffer, last stage first."""
        H, n = self.env.horizon, self.n_keys
        rewards = np.asarray(self._rewards, dtype=float)
        v_next = np.zeros((n, H))
        evaluators = [None] * H
        if n:
            next_keys = [_state_key(s) for s in self._next]
            uniq = {}
            for k, s in zip(next_keys, self._next):
                uniq.setdefault(k, s)
            uniq_states = list(uniq.values())
            pos = {k: i for i, k in enumerate(uniq)}
            inverse = np.array([pos[k] for k in next_keys])
        for h in range(H, 0, -1):
            if h < H and n:
                best = evaluators[h].evaluate_grid(uniq_states, self.env.actions).max(axis=1)
                v_next[:, h - 1] = best[inverse]
            values = rewards + v_next[:, h - 1] if n else np.zeros(0)
            kv = KeyValueSet(tuple(self._states), tuple(self._actions), values)
            evaluators[h - 1] = self._evaluator(kv, h)
        self.estimate = LayeredQEstimate(evaluators, v_next, self.env.actions)
        return self.estimate

    def act(self, s, h: int) -> int:
        return int(np.argmax(self.estimate.q_values(s, h)))

    def q_values(self, s, h: int) -> np.ndarray:
        return self.estimate.q_values(s, h)

    def q_table(self, h: int) -> np.ndarray:
        return self.estimate.q_grid(range(self.env.n_states), h)

    def end_episode(self, trajectory) -> None:
        self.buffer = append_episode(self.buffer, trajectory, self.env.horizon)
        for rec in trajectory:
            key = (_state_key(rec.state), self.env.action_index(rec.action))
            i = self._index.get(key)
            if i is None:
                self._index[key] = len(self._states)
                self._states.append(rec.state)
                self._actions.append(rec.action)
                self._next.append(rec.next_state)
                self._rewards.append(rec.reward)
            elif (_state_key(self._next[i]) != _state_key(rec.next_state)
                  or self._rewards[i] != rec.reward):
                raise DeterminismViolation(f"pair {key} changed its outcome")
        self.recompute()

    def nearest_gaps(self, states, actions) -> np.ndarray:
        """Distance of each query pair to its nearest buffered pair."""
        if not self.n_keys:
            return np.full(len(states), INFINITE_GAP)
        d = self.env.metric.pairwise(states, actions, self._states, self._actions)
        return d.min(axis=1)


def make_agent(kind: str, env: EnvironmentSpec, l1_override: float | None = None,
               cap_mode: str = "stage", span_tol: float = 1e-8):
    if kind == "tabular":
        return TabularAgent(env)
    oracle = {"ucrl-fa-nn": "nearest_neighbor", "ucrl-fa-linear": "linear_span",
              "ucrl-fa-tabular": "tabular"}.get(kind)
    if oracle is None:
        raise ContractViolation(f"unknown agent kind {kind!r}; expected one of {AGENT_KINDS}")
    return UCRLFAAgent(env, oracle=oracle, l1=l1_override, cap_mode=cap_mode, span_tol=span_tol)


# ---------------------------------------------------------------------------
# training loop
# ---------------------------------------------------------------------------


@dataclass
class StepDiagnostic:
    episode: int
    stage: int
    nearest_gap: float
    q_hat: float
    q_star: float
    optimism_margin: float      # q_hat - q_star at the executed pair
    induction_margin: float     # r + Q_{h+1} + L * gap - Q_h (nan when not applicable)


@dataclass
class TrainingResult:
    ledger: RegretLedger
    solution: ValueSolution
    agent: object
    recompute_ms: list = field(default_factory=list)
    steps: list = field(default_factory=list)
    optimism_margins: list = field(default_factory=list)   # worst Q_hat - Q* per check
    decomposition_margins: list = field(default_factory=list)
    seed: int | None = None

    @property
    def min_optimism_margin(self) -> float:
        return min(self.optimism_margins, default=math.inf)

    @property
    def min_induction_margin(self) -> float:
        vals = [d.induction_margin for d in self.steps if not math.isnan(d.induction_margin)]
        return min(vals, default=math.inf)

    @property
    def min_decomposition_margin(self) -> float:
        return min(self.decomposition_margins, default=math.inf)


def optimism_margin(agent, env: EnvironmentSpec, solution: ValueSolution) -> float:
    """Smallest ``Q_hat_h(s, a) - Q*_h(s, a)`` over all stages and oracle states."""
    worst = math.inf
    for h in range(1, env.horizon + 1):
        if env.is_finite:
            q_hat = agent.q_table(h)
        elif isinstance(agent, UCRLFAAgent):
            q_hat = agent.estimate.q_grid(list(solution.states), h)
        else:
            raise ContractViolation("optimism check needs a finite env or a UCRL-FA agent")
        worst = min(worst, float((q_hat - solution.q_star[h - 1]).min()))
    return worst


def run_training(agent, env: EnvironmentSpec, episodes: int, solution: ValueSolution | None = None,
                 seed: int | None = None, check_optimism: bool = False,
                 check_induction: bool = False, mesh: float = 1e-3,
                 l1_override: float | None = None) -> TrainingResult:
    """Play ``episodes`` episodes and account regret against the oracle value.

    ``agent`` is an agent instance or a kind name from ``AGENT_KINDS``. The
    agents are deterministic; ``seed`` is only recorded. With
    ``check_optimism`` the estimate used in each episode (and the final one)
    is compared with ``Q*`` everywhere; with ``check_induction`` every executed
    step of a nearest-neighbor agent is tested against the per-step bonus
    inequality and the episode regret against its gap decomposition.
    """
    if episodes < 1:
        raise ContractViolation("need at least one episode")
    if isinstance(agent, str):
        agent = make_agent(agent, env, l1_override=l1_override)
    solution = solution if solution is not None else solve(env, mesh)
    H = env.horizon
    ledger = RegretLedger(solution.v_star_initial)
    result = TrainingResult(ledger=ledger, solution=solution, agent=agent, seed=seed)
    nn_agent = isinstance(agent, UCRLFAAgent) and agent.oracle == "nearest_neighbor"
    big_l = None
    if nn_agent:
        l2 = env.lipschitz.l2 if env.lipschitz is not None else 1.0
        big_l = (l2 + 1.0) * agent.l1

    for k in range(1, episodes + 1):
        if check_optimism:
            result.optimism_margins.append(optimism_margin(agent, env, solution))
        s = env.initial_state
        trajectory, chosen = [], []
        for h in range(1, H + 1):
            ai = agent.act(s, h)
            a = env.actions[ai]
            s_next, r = step(env, s, a)
            trajectory.append(TransitionRecord(s, a, s_next, r, k, h))
            chosen.append(ai)
            s = s_next
        rewards = [t.reward for t in trajectory]

        if check_induction and nn_agent:
            _induction_diagnostics(agent, env, solution, trajectory, chosen, big_l, result, k)

        t0 = time.perf_counter()
        agent.end_episode(trajectory)
        result.recompute_ms.append((time.perf_counter() - t0) * 1e3)
        size = len(agent.buffer) if isinstance(agent, UCRLFAAgent) else k * H
        ledger.record(sum(rewards), size)

    if check_optimism:
        result.optimism_margins.append(optimism_margin(agent, env, solution))
    return result


def _induction_diagnostics(agent, env, solution, trajectory, chosen, big_l, result, k):
    H = env.horizon
    states = [t.state for t in trajectory]
    actions = [t.action for t in trajectory]
    gaps = agent.nearest_gaps(states, actions)
    q_hat = [agent.estimate.value(s, a, h) for h, (s, a) in enumerate(zip(states, actions), 1)]
    for h in range(1, H + 1):
        q_next = q_hat[h] if h < H else 0.0
        bonus = big_l * gaps[h - 1] if math.isfinite(gaps[h - 1]) else math.inf
        margin = trajectory[h - 1].reward + q_next + bonus - q_hat[h - 1]
        q_star = solution.q(h, states[h - 1], chosen[h - 1])
        result.steps.append(StepDiagnostic(k, h, float(gaps[h - 1]), q_hat[h - 1], q_star,
                                           q_hat[h - 1] - q_star, margin))
    regret = solution.v_star_initial - sum(t.reward for t in trajectory)
    total_gap = float(np.sum(gaps))
    bound = H if not math.isfinite(total_gap) else min(H, big_l * total_gap)
    result.decomposition_margins.append(bound - regret)

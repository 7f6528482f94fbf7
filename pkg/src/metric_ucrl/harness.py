"""Seeded experiment runner: configs, CSV/JSON outputs, exponent fits, verdicts.

A config is a JSON document::

    {
      "environment": {"family": "line_world",
                      "params": {"n_actions": 11, "horizon": 3}},
      "agent": {"kind": "ucrl-fa-nn", "l1_override": null, "cap_mode": "stage"},
      "episodes": 500,
      "seeds": [0, 1, 2],
      "oracle": {"mesh": 0.001},
      "diagnostics": {"check_optimism": false, "check_induction": true},
      "fit": {"window": 0.5, "band": [0.35, 0.65]},
      "sweep": {"grid": {"horizon": [2, 3]}, "epsilons": [0.01, 0.02]},
      "workers": 1,
      "output": "runs/line"
    }

``agent`` may also be given as a bare kind string and ``seed`` as a single
integer. Unknown keys anywhere are rejected.
"""

from __future__ import annotations

import csv
import itertools
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import environments as envs
from .agents import AGENT_KINDS, make_agent, run_training
from .mdp import ContractViolation
from .metric_tools import (diameter, grid_sample, greedy_net, optimal_epsilon,
                           regret_lower_bound, regret_upper_bound)
from .oracle import solve

REGRET_COLUMNS = ("episode", "episode_reward", "instant_regret", "cumulative_regret",
                  "buffer_size", "recompute_ms")
DIAGNOSTIC_COLUMNS = ("episode", "stage", "nearest_gap", "q_hat", "q_star", "optimism_margin",
                      "induction_margin")
EXACT_SLACK = 1e-6

FAMILY_PARAMS = {
    "finite_random": ("n_states", "n_actions", "horizon"),
    "line_world": ("n_actions", "horizon", "bump_params"),
    "hard_instance": ("n_states", "n_actions", "horizon"),
    "cluster_linear": ("d", "states_per_cluster", "n_actions", "horizon"),
}


class ConfigError(ContractViolation):
    pass


class InsufficientDataError(ContractViolation):
    pass


class OutputExistsError(ContractViolation):
    pass


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


def _check_keys(section: dict, allowed, where: str):
    if not isinstance(section, dict):
        raise ConfigError(f"{where} must be a mapping")
    unknown = set(section) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")


@dataclass
class ExperimentConfig:
    family: str
    params: dict
    agent: str = "ucrl-fa-nn"
    episodes: int = 100
    seeds: list = field(default_factory=lambda: [0])
    mesh: float = 1e-3
    check_optimism: bool = False
    check_induction: bool = False
    l1_override: float | None = None
    cap_mode: str = "stage"
    fit_window: float = 0.5
    fit_band: tuple | None = None
    sweep_grid: dict = field(default_factory=dict)
    epsilons: list = field(default_factory=list)
    workers: int = 1
    output: str | None = None

    def __post_init__(self):
        if self.family not in FAMILY_PARAMS:
            raise ConfigError(f"unknown environment family {self.family!r}")
        _check_keys(self.params, FAMILY_PARAMS[self.family], "environment.params")
        if self.agent not in AGENT_KINDS:
            raise ConfigError(f"unknown agent kind {self.agent!r}")
        if int(self.episodes) < 1:
            raise ConfigError("episodes must be >= 1")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("seeds must be distinct; runs are stored per seed")
        if self.mesh <= 0:
            raise ConfigError("oracle.mesh must be positive")
        if not 0 < self.fit_window <= 1:
            raise ConfigError("fit.window must be in (0, 1]")
        if self.cap_mode not in ("stage", "horizon"):
            raise ConfigError("agent.cap_mode must be 'stage' or 'horizon'")
        _check_keys(self.sweep_grid, FAMILY_PARAMS[self.family], "sweep.grid")
        self.episodes = int(self.episodes)
        self.seeds = [int(s) for s in self.seeds]

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        _check_keys(doc, ("environment", "agent", "episodes", "seed", "seeds", "oracle",
                          "diagnostics", "fit", "sweep", "workers", "output"), "config")
        env = doc.get("environment")
        if env is None:
            raise ConfigError("config needs an 'environment' section")
        _check_keys(env, ("family", "params"), "environment")
        agent = doc.get("agent", "ucrl-fa-nn")
        if isinstance(agent, str):
            agent = {"kind": agent}
        _check_keys(agent, ("kind", "l1_override", "cap_mode"), "agent")
        oracle = doc.get("oracle", {})
        _check_keys(oracle, ("mesh",), "oracle")
        diag = doc.get("diagnostics", {})
        _check_keys(diag, ("check_optimism", "check_induction"), "diagnostics")
        fit = doc.get("fit", {})
        _check_keys(fit, ("window", "band"), "fit")
        sweep = doc.get("sweep", {})
        _check_keys(sweep, ("grid", "epsilons"), "sweep")
        if "seed" in doc and "seeds" in doc:
            raise ConfigError("give either 'seed' or 'seeds', not both")
        seeds = doc.get("seeds", [doc.get("seed", 0)])
        band = fit.get("band")
        return cls(
            family=env.get("family"),
            params=dict(env.get("params", {})),
            agent=agent.get("kind", "ucrl-fa-nn"),
            episodes=doc.get("episodes", 100),
            seeds=list(seeds),
            mesh=float(oracle.get("mesh", 1e-3)),
            check_optimism=bool(diag.get("check_optimism", False)),
            check_induction=bool(diag.get("check_induction", False)),
            l1_override=agent.get("l1_override"),
            cap_mode=agent.get("cap_mode", "stage"),
            fit_window=float(fit.get("window", 0.5)),
            fit_band=None if band is None else (float(band[0]), float(band[1])),
            sweep_grid=dict(sweep.get("grid", {})),
            epsilons=[float(e) for e in sweep.get("epsilons", [])],
            workers=int(doc.get("workers", 1)),
            output=doc.get("output"),
        )

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            doc = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        return cls.from_dict(doc)


def build_environment(family: str, params: dict, seed: int):
    """Return ``(env, extra)``; ``extra`` is the family's instance spec or None."""
    p = dict(params)
    if family == "finite_random":
        return envs.make_finite_random(seed, p["n_states"], p["n_actions"], p["horizon"]), None
    if family == "line_world":
        return envs.make_line_world(seed, p.get("n_actions", 11), p.get("horizon", 3),
                                    p.get("bump_params")), None
    if family == "hard_instance":
        return envs.make_hard_instance(seed, p["n_states"], p["n_actions"], p["horizon"])
    if family == "cluster_linear":
        return envs.make_cluster_linear(seed, p["d"], p.get("states_per_cluster", 1),
                                        p["n_actions"], p["horizon"])
    raise ConfigError(f"unknown environment family {family!r}")


# ---------------------------------------------------------------------------
# fitting and bounds
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FitResult:
    exponent: float
    intercept: float
    r_squared: float
    window: tuple


def fit_exponent(regret_series, window=None) -> FitResult:
    """Least-squares slope of ``log(regret)`` against ``log(episode)``.

    ``window`` is an inclusive ``(first, last)`` episode range (1-based); the
    default is the last half of the series. Nonpositive values are dropped.
    """
    y = np.asarray(regret_series, dtype=float)
    k = np.arange(1, len(y) + 1)
    if window is None:
        window = (len(y) // 2 + 1, len(y))
    first, last = int(window[0]), int(window[1])
    sel = (k >= first) & (k <= last) & (y > 0)
    if sel.sum() < 5:
        raise InsufficientDataError(f"only {int(sel.sum())} usable points in window {window}")
    lx, ly = np.log(k[sel]), np.log(y[sel])
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    ss_tot = float(((ly - ly.mean()) ** 2).sum())
    r2 = 1.0 if ss_tot == 0 else max(0.0, 1.0 - float((resid ** 2).sum()) / ss_tot)
    return FitResult(float(slope), float(intercept), r2, (first, last))


def epsilon_scan(diam: float, lipschitz: float, episodes: int, horizon: int, dim: int,
                 epsilons) -> list:
    """Upper-bound values over ``epsilons`` with net size ``(D / eps)^d``."""
    return [(float(e), regret_upper_bound((diam / e) ** dim, e, lipschitz, episodes, horizon))
            for e in epsilons]


def _verdict(value, threshold, passed):
    return {"pass": bool(passed), "value": float(value), "threshold": float(threshold)}


def compute_verdicts(cfg: ExperimentConfig, env, extra, result) -> tuple[dict, dict]:
    """Return ``(verdicts, bounds)`` for a finished run."""
    ledger, sol = result.ledger, result.solution
    K, H = len(ledger), env.horizon
    total = ledger.total
    verdicts, bounds = {}, {}
    slack = EXACT_SLACK if env.is_finite else EXACT_SLACK + K * sol.error_bound

    if cfg.agent == "tabular":
        sa = env.n_states * env.n_actions
        bounds["SAH"] = sa * H
        verdicts["regret <= SAH"] = _verdict(total, sa * H, total <= sa * H + EXACT_SLACK)
        n_pos = ledger.episodes_with_regret(1e-9)
        verdicts["regret episodes <= SA"] = _verdict(n_pos, sa, n_pos <= sa)

    if cfg.agent == "ucrl-fa-linear":
        d = int(extra.d) if extra is not None and hasattr(extra, "d") else env.info["d"]
        bounds["Hd"] = H * d
        verdicts["regret <= Hd"] = _verdict(total, H * d, total <= H * d + EXACT_SLACK)
        n_pos = ledger.episodes_with_regret(EXACT_SLACK)
        verdicts["regret episodes <= d"] = _verdict(n_pos, d, n_pos <= d)

    if cfg.agent == "ucrl-fa-nn" and env.lipschitz is not None:
        big_l = env.lipschitz.l
        if env.is_finite:
            # under the discrete metric every eps < H gives the full pair set as net
            net, eps = env.n_states * env.n_actions, 0.0
        else:
            sample = grid_sample(env, cfg.mesh)
            diam = env.info.get("diameter") or diameter(sample)
            dim = int(env.info.get("doubling_dimension", 1))
            eps = optimal_epsilon(diam, big_l, K, dim)
            net = greedy_net(sample, eps).size
            bounds["diameter"] = diam
        ub = regret_upper_bound(net, eps, big_l, K, H)
        bounds.update({"epsilon": eps, "net_size": net, "L": big_l, "upper_bound": ub,
                       "slack": slack})
        verdicts["regret <= H|N(eps)| + 2 eps L K H"] = _verdict(total, ub, total <= ub + slack)

    if extra is not None and hasattr(extra, "leaf_count"):
        packing = extra.leaf_count * env.n_actions
        bounds["lower_bound_reference"] = regret_lower_bound(packing, K, H, extra.max_star_steps)
        plateau = ledger.plateau_episode(1e-9)
        verdicts["plateau <= leaves*A + 1"] = _verdict(plateau, packing + 1, plateau <= packing + 1)

    if cfg.fit_band is not None:
        fit = fit_exponent(ledger.cumulative_regrets,
                           (K - int(round(cfg.fit_window * K)) + 1, K))
        lo, hi = cfg.fit_band
        verdicts["fitted exponent in band"] = _verdict(fit.exponent, hi, lo <= fit.exponent <= hi)

    tol = EXACT_SLACK + sol.error_bound
    if cfg.check_optimism:
        m = result.min_optimism_margin
        verdicts["optimism"] = _verdict(m, -tol, m >= -tol)
    if cfg.check_induction and result.steps:
        m = result.min_induction_margin
        verdicts["induction"] = _verdict(m, -EXACT_SLACK, m >= -EXACT_SLACK)
        m = result.min_decomposition_margin
        verdicts["regret decomposition"] = _verdict(m, -tol, m >= -tol)
    return verdicts, bounds


# ---------------------------------------------------------------------------
# running
# ---------------------------------------------------------------------------


def _prepare_dir(out: Path, overwrite: bool, marker: str = "summary.json") -> None:
    if (out / marker).exists() and not overwrite:
        raise OutputExistsError(f"{out} already holds results; pass overwrite to replace them")
    out.mkdir(parents=True, exist_ok=True)


def write_regret_csv(path, result) -> None:
    led = result.ledger
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(REGRET_COLUMNS)
        for row in zip(led.episodes, led.episode_rewards, led.instant_regrets,
                       led.cumulative_regrets, led.buffer_sizes, result.recompute_ms):
            w.writerow([row[0], repr(row[1]), repr(row[2]), repr(row[3]), row[4],
                        f"{row[5]:.3f}"])


def write_diagnostics_csv(path, result) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(DIAGNOSTIC_COLUMNS)
        for d in result.steps:
            w.writerow([d.episode, d.stage, repr(d.nearest_gap), repr(d.q_hat), repr(d.q_star),
                        repr(d.optimism_margin), repr(d.induction_margin)])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    return obj


def execute(cfg: ExperimentConfig, seed: int):
    """Run one seed in memory; returns ``(env, extra, result, verdicts, bounds)``."""
    env, extra = build_environment(cfg.family, cfg.params, seed)
    agent = make_agent(cfg.agent, env, l1_override=cfg.l1_override, cap_mode=cfg.cap_mode)
    solution = solve(env, cfg.mesh)
    result = run_training(agent, env, cfg.episodes, solution=solution, seed=seed,
                          check_optimism=cfg.check_optimism,
                          check_induction=cfg.check_induction)
    verdicts, bounds = compute_verdicts(cfg, env, extra, result)
    return env, extra, result, verdicts, bounds


def run_experiment(cfg: ExperimentConfig, out=None, seed: int | None = None,
                   overwrite: bool = False) -> dict:
    """Run one seed and write ``regret.csv``, ``summary.json`` and diagnostics.

    Returns the summary dictionary; ``summary["passed"]`` is True iff every
    verdict passed.
    """
    out = Path(out if out is not None else (cfg.output or "runs/experiment"))
    seed = cfg.seeds[0] if seed is None else int(seed)
    _prepare_dir(out, overwrite)
    t0 = time.perf_counter()
    env, extra, result, verdicts, bounds = execute(cfg, seed)
    elapsed = time.perf_counter() - t0
    write_regret_csv(out / "regret.csv", result)
    if result.steps:
        write_diagnostics_csv(out / "diagnostics.csv", result)
    led = result.ledger
    summary = {
        "config": asdict(cfg),
        "seed": seed,
        "environment": {"name": env.name, "horizon": env.horizon,
                        "n_actions": env.n_actions, "n_states": env.n_states,
                        "info": env.info},
        "v_star_initial": result.solution.v_star_initial,
        "oracle_error_bound": result.solution.error_bound,
        "episodes": len(led),
        "final_regret": led.total,
        "episodes_with_regret": led.episodes_with_regret(1e-9),
        "plateau_episode": led.plateau_episode(1e-9),
        "bounds": bounds,
        "verdicts": verdicts,
        "passed": all(v["pass"] for v in verdicts.values()),
        "elapsed_s": elapsed,
    }
    if cfg.check_optimism:
        summary["min_optimism_margin"] = result.min_optimism_margin
    if result.steps:
        summary["min_induction_margin"] = result.min_induction_margin
        summary["min_decomposition_margin"] = result.min_decomposition_margin
    try:
        summary["fit"] = asdict(fit_exponent(
            led.cumulative_regrets, (len(led) - int(round(cfg.fit_window * len(led))) + 1,
                                     len(led))))
    except InsufficientDataError as exc:
        summary["fit"] = {"error": str(exc)}
    summary = _jsonable(summary)
    (out / "summary.json").write_text(json.dumps(summary, indent=2))
    return summary


def verify_experiment(cfg: ExperimentConfig, out=None, seed: int | None = None,
                      overwrite: bool = False) -> dict:
    """Diagnostics-only run: optimism and induction checks, no bound verdicts."""
    diag_cfg = replace(cfg, check_optimism=True, check_induction=True, fit_band=None)
    out = Path(out if out is not None else (cfg.output or "runs/verify"))
    seed = cfg.seeds[0] if seed is None else int(seed)
    _prepare_dir(out, overwrite, "verify.json")
    env, extra, result, verdicts, _ = execute(diag_cfg, seed)
    keep = {k: v for k, v in verdicts.items()
            if k in ("optimism", "induction", "regret decomposition")}
    if result.steps:
        write_diagnostics_csv(out / "diagnostics.csv", result)
    report = _jsonable({"seed": seed, "verdicts": keep,
                        "passed": all(v["pass"] for v in keep.values()),
                        "min_optimism_margin": result.min_optimism_margin,
                        "min_induction_margin": result.min_induction_margin})
    (out / "verify.json").write_text(json.dumps(report, indent=2))
    return report


def dump_oracle(cfg: ExperimentConfig, out=None, seed: int | None = None,
                overwrite: bool = False) -> dict:
    """Write the oracle's ``Q*`` table as CSV plus a small JSON header."""
    out = Path(out if out is not None else (cfg.output or "runs/oracle"))
    seed = cfg.seeds[0] if seed is None else int(seed)
    _prepare_dir(out, overwrite, "oracle.json")
    env, _ = build_environment(cfg.family, cfg.params, seed)
    sol = solve(env, cfg.mesh)
    sol.to_csv(out / "q_star.csv")
    info = _jsonable({"seed": seed, "v_star_initial": sol.v_star_initial,
                      "error_bound": sol.error_bound, "resolution": sol.resolution,
                      "coarse": sol.coarse})
    (out / "oracle.json").write_text(json.dumps(info, indent=2))
    return info


def _sweep_job(args):
    doc, label, seed, out, overwrite = args
    cfg = ExperimentConfig(**doc)
    try:
        summary = run_experiment(cfg, out, seed=seed, overwrite=overwrite)
        return label, seed, str(out), summary, None
    except Exception as exc:  # recorded per run; the aggregate is still written
        return label, seed, str(out), None, f"{type(exc).__name__}: {exc}"


def sweep(cfg: ExperimentConfig, out=None, overwrite: bool = False) -> dict:
    """Run every grid point for every seed and aggregate cumulative regret.

    Writes one directory per run, ``aggregate.csv`` (mean and spread of
    cumulative regret per episode and grid point, plus the lower-bound
    reference for hard instances) and ``sweep.json``.
    """
    out = Path(out if out is not None else (cfg.output or "runs/sweep"))
    _prepare_dir(out, overwrite, "sweep.json")
    keys = sorted(cfg.sweep_grid)
    points = [dict(zip(keys, combo)) for combo in
              itertools.product(*(cfg.sweep_grid[k] for k in keys))] or [{}]
    jobs = []
    for point in points:
        label = ",".join(f"{k}={point[k]}" for k in keys) or "base"
        doc = asdict(replace(cfg, params={**cfg.params, **point}, sweep_grid={}))
        for seed in cfg.seeds:
            run_dir = out / f"{label.replace('=', '-').replace(',', '_')}" / f"seed_{seed}"
            jobs.append((doc, label, seed, run_dir, overwrite))
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as pool:
            finished = list(pool.map(_sweep_job, jobs))
    else:
        finished = [_sweep_job(j) for j in jobs]

    failures = [{"label": l, "seed": s, "error": e} for l, s, _, _, e in finished if e]
    rows = []
    for point in points:
        label = ",".join(f"{k}={point[k]}" for k in keys) or "base"
        series = []
        for l, s, run_dir, summary, err in finished:
            if l == label and err is None:
                with open(Path(run_dir) / "regret.csv") as fh:
                    series.append([float(r["cumulative_regret"]) for r in csv.DictReader(fh)])
        if not series:
            continue
        arr = np.array(series)
        p = {**cfg.params, **point}
        lower = None
        if cfg.family == "hard_instance":
            _, spec = build_environment(cfg.family, p, cfg.seeds[0])
            lower = (spec.leaf_count * spec.n_actions, spec.horizon, spec.max_star_steps)
        for k in range(arr.shape[1]):
            ref = "" if lower is None else repr(regret_lower_bound(lower[0], k + 1, lower[1],
                                                                   lower[2]))
            rows.append([label, k + 1, repr(float(arr[:, k].mean())),
                         repr(float(arr[:, k].std())), repr(float(arr[:, k].min())),
                         repr(float(arr[:, k].max())), arr.shape[0], ref])
    with open(out / "aggregate.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["label", "episode", "mean_cumulative_regret", "std_cumulative_regret",
                    "min_cumulative_regret", "max_cumulative_regret", "n_runs",
                    "lower_bound_reference"])
        w.writerows(rows)

    report = {
        "runs": [{"label": l, "seed": s, "dir": d,
                  "passed": None if summ is None else summ["passed"],
                  "final_regret": None if summ is None else summ["final_regret"]}
                 for l, s, d, summ, _ in finished],
        "failures": failures,
        "passed": not failures and all(summ["passed"] for _, _, _, summ, e in finished if e is None),
    }
    if cfg.epsilons:
        env, _ = build_environment(cfg.family, cfg.params, cfg.seeds[0])
        if env.lipschitz is not None and not env.is_finite:
            diam = env.info.get("diameter") or diameter(grid_sample(env, cfg.mesh))
            dim = int(env.info.get("doubling_dimension", 1))
            scan = epsilon_scan(diam, env.lipschitz.l, cfg.episodes, env.horizon, dim,
                                cfg.epsilons)
            report["epsilon_scan"] = scan
            report["optimal_epsilon"] = optimal_epsilon(diam, env.lipschitz.l, cfg.episodes, dim)
    report = _jsonable(report)
    (out / "sweep.json").write_text(json.dumps(report, indent=2))
    return report

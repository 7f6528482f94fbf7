"""Command line front end: ``run``, ``sweep``, ``verify`` and ``oracle``.

Exit status is 0 when every verdict passes, 1 when a verdict fails and 2 on
a configuration or contract error (an ``error.json`` is written to the output
directory when one is known).
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from . import harness
from .mdp import ContractViolation, EnvironmentIntegrityError

EXIT_OK, EXIT_VERDICT, EXIT_ERROR = 0, 1, 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="metric-ucrl",
                                     description="Optimistic exploration experiments on "
                                                 "deterministic metric MDPs.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (("run", "run one seed and emit regret.csv / summary.json"),
                       ("sweep", "run all seeds and grid points, then aggregate"),
                       ("verify", "diagnostics only: optimism and per-step induction"),
                       ("oracle", "dump the exact or grid Q* table")):
        p = sub.add_parser(name, help=text)
        p.add_argument("config", type=Path, help="JSON experiment config")
        p.add_argument("--seed", type=int, default=None, help="override the config seeds")
        p.add_argument("--episodes", type=int, default=None, help="override the episode count")
        p.add_argument("--out", type=Path, default=None, help="output directory")
        p.add_argument("--overwrite", action="store_true",
                       help="replace results in an existing output directory")
        p.add_argument("--check-optimism", action="store_true")
        p.add_argument("--check-induction", action="store_true")
        p.add_argument("--l1-override", type=float, default=None,
                       help="Lipschitz constant handed to the agent instead of the declared one")
    return parser


def _apply_flags(cfg: harness.ExperimentConfig, args) -> harness.ExperimentConfig:
    changes = {}
    if args.seed is not None:
        changes["seeds"] = [args.seed]
    if args.episodes is not None:
        changes["episodes"] = args.episodes
    if args.check_optimism:
        changes["check_optimism"] = True
    if args.check_induction:
        changes["check_induction"] = True
    if args.l1_override is not None:
        changes["l1_override"] = args.l1_override
    return replace(cfg, **changes) if changes else cfg


def _write_error(out, exc) -> None:
    payload = {"error": type(exc).__name__, "message": str(exc)}
    print(json.dumps(payload), file=sys.stderr)
    if out is not None:
        try:
            out = Path(out)
            out.mkdir(parents=True, exist_ok=True)
            (out / "error.json").write_text(json.dumps(payload, indent=2))
        except OSError:
            pass


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out = args.out
    try:
        cfg = _apply_flags(harness.ExperimentConfig.load(args.config), args)
        out = out if out is not None else cfg.output
        if args.command == "run":
            report = harness.run_experiment(cfg, out, overwrite=args.overwrite)
        elif args.command == "sweep":
            report = harness.sweep(cfg, out, overwrite=args.overwrite)
        elif args.command == "verify":
            report = harness.verify_experiment(cfg, out, overwrite=args.overwrite)
        else:
            report = harness.dump_oracle(cfg, out, overwrite=args.overwrite)
            report["passed"] = True
    except (ContractViolation, EnvironmentIntegrityError, FileNotFoundError) as exc:
        _write_error(out, exc)
        return EXIT_ERROR
    for name, v in report.get("verdicts", {}).items():
        print(f"{'PASS' if v['pass'] else 'FAIL'}  {name}: {v['value']:.6g} "
              f"(threshold {v['threshold']:.6g})")
    print("passed" if report["passed"] else "failed")
    return EXIT_OK if report["passed"] else EXIT_VERDICT


if __name__ == "__main__":
    sys.exit(main())

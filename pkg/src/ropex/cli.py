"""Command-line entry point: ``ropex run | validate-schedule | bounds``."""
from __future__ import annotations

import argparse
import dataclasses
import os
import sys
from typing import List, Optional

from .experiment import (
    BOUND_NAMES,
    ConfigError,
    ExperimentConfig,
    ScheduleViolation,
    prepare_schedule,
    run_experiment,
)
from .schedules import PolicyKind, theoretical_bounds, validate_conditions, build_schedule, PolicyRequirementError
from .solver import OracleError

EXIT_OK, EXIT_CONFIG, EXIT_SCHEDULE, EXIT_ORACLE = 0, 2, 3, 4
OUT_ENV = "ROPEX_OUT"


def _int_list(text: str) -> tuple:
    try:
        return tuple(int(float(v)) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ropex", description="Regularized operator extrapolation experiments")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an experiment from a key=value config file")
    r.add_argument("--config", required=True)
    r.add_argument("--k-sweep", type=_int_list)
    r.add_argument("--reps", type=int)
    r.add_argument("--seed", type=int)
    r.add_argument("--out")
    r.add_argument("--workers", type=int)

    for name, helptext in (("validate-schedule", "check the step-size conditions of a policy"),
                           ("bounds", "print closed-form gap bounds")):
        s = sub.add_parser(name, help=helptext)
        s.add_argument("--policy", required=True)
        s.add_argument("--k", type=int, required=True)
        s.add_argument("--problem", required=True)
    return p


def _cmd_run(args) -> int:
    cfg = ExperimentConfig.from_file(args.config)
    changes = {}
    if args.k_sweep:
        changes["K"] = args.k_sweep
    for key in ("reps", "seed", "workers"):
        if getattr(args, key) is not None:
            changes[key] = getattr(args, key)
    if changes:
        cfg = dataclasses.replace(cfg, **changes)
    out = args.out or os.environ.get(OUT_ENV) or "ropex_out"
    report = run_experiment(cfg, out)
    sys.stdout.write(report.text())
    print(f"outputs written to {out}")
    return EXIT_OK


def _cmd_validate(args) -> int:
    cfg = ExperimentConfig(problem=args.problem, policy=args.policy, K=(args.k,))
    problem = cfg.build_problem()
    try:
        sched = build_schedule(cfg.policy_kind, problem.constants, problem.D_X, args.k)
    except (PolicyRequirementError, ValueError) as e:
        raise ConfigError(str(e)) from None
    report = validate_conditions(sched, problem.constants)
    print(report.summary())
    return EXIT_OK if report.passed else EXIT_SCHEDULE


def _cmd_bounds(args) -> int:
    cfg = ExperimentConfig(problem=args.problem, policy=args.policy, K=(args.k,))
    problem = cfg.build_problem()
    prepare_schedule(cfg, problem, args.k)
    b = theoretical_bounds(cfg.policy_kind, problem.constants, problem.D_X, args.k)
    values = b.as_dict()
    for name in BOUND_NAMES:
        v = values[name]
        label = b.equations.get(name, "")
        print(f"{name}={'NA' if v is None else format(v, '.17g')}" + (f"  # {label}" if label else ""))
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {"run": _cmd_run, "validate-schedule": _cmd_validate, "bounds": _cmd_bounds}
    try:
        return handlers[args.command](args)
    except ScheduleViolation as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_SCHEDULE
    except OracleError as e:
        print(f"error: oracle misconfiguration: {e}", file=sys.stderr)
        return EXIT_ORACLE
    except (ConfigError, PolicyRequirementError, FileNotFoundError) as e:
        print(f"error: invalid configuration: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

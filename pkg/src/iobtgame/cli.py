"""Command line interface.

Subcommands:
  solve     solve stage 1 of one instance and print the policy plus the
            connectivity certificate as JSON
  scenario  run one of the predefined experiment sweeps and write CSV
  check     run the oracle battery; nonzero exit on any mismatch

Exit codes: 0 success, 1 check failure, 2 configuration/usage error,
3 infeasible instance.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__, fse
from .connectivity import check_stage
from .checks import run_battery
from .harness import (
    ConfigError,
    InfeasibleInstance,
    generate_instance,
    load_config,
    run_scenario,
    scale_loaded,
    write_csv,
    write_timings,
)
from .netmodel import EmptyFeasibleSet


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="iobtgame",
        description="Dynamic connectivity game solver and experiment harness.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    solve = sub.add_parser("solve", help="solve one instance and print the policy")
    solve.add_argument("--config", type=Path, default=None, help="scenario JSON file")
    solve.add_argument("--mode", choices=["fse", "nfse", "equal"], default="fse")
    solve.add_argument("--horizon", type=int, default=None, help="override the horizon")
    solve.add_argument("--seed", type=int, default=0)
    solve.add_argument("--scale", type=float, default=1.0, help="device count fraction")
    solve.add_argument("--out", type=Path, default=None, help="write JSON here instead of stdout")

    scen = sub.add_parser("scenario", help="run an experiment sweep, write CSV")
    scen.add_argument("--scenario", required=True, choices=["1", "2", "3"])
    scen.add_argument("--config", type=Path, default=None)
    scen.add_argument("--scale", type=float, default=1.0)
    scen.add_argument("--seed", type=int, default=0)
    scen.add_argument("--runs", type=int, default=1)
    scen.add_argument("--out", type=Path, default=Path("results"))
    scen.add_argument("--jobs", type=int, default=1)

    chk = sub.add_parser("check", help="run the oracle battery")
    chk.add_argument("--seed", type=int, default=0)
    return parser


def _cmd_solve(args) -> int:
    loaded = scale_loaded(load_config(args.config), args.scale)
    if args.horizon is not None:
        from dataclasses import replace

        loaded = type(loaded)(
            cfg=replace(loaded.cfg, horizon=args.horizon),
            spec=loaded.spec,
            scenario=loaded.scenario,
        )
    cfg = loaded.cfg
    state = generate_instance(loaded, args.seed)
    cache = fse.ValueCache()
    if args.mode == "equal":
        q = fse.equal_probability_policy(state)
        b = fse.myopic_best_response(state, q, cfg)
        game = fse.build_stage_game(state, cfg, continuation=None)
        policy = fse.StagePolicy(q_star=q, b_star=b, omega_a=0.0, omega_d=0.0)
    else:
        k = 1 if args.mode == "nfse" else fse.stages_to_go(1, cfg)
        game = fse.build_stage_game(state, cfg, fse.make_continuation(k, cfg, cache))
        policy = fse.solve_stage_from_game(game)
    report = check_stage(game, policy, cfg, stage=1)
    payload = {
        "mode": args.mode,
        "horizon": cfg.horizon,
        "attacker_mixture": [
            {"action": a.describe(), "probability": p} for a, p in policy.q_star.support
        ],
        "response": policy.b_star.describe(),
        "attacker_value": policy.omega_a,
        "defender_value": policy.omega_d,
        "connectivity": report.to_dict(),
    }
    text = json.dumps(payload, indent=2)
    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "solution.json").write_text(text + "\n")
        print(args.out / "solution.json")
    else:
        print(text)
    return 0


def _cmd_scenario(args) -> int:
    loaded = scale_loaded(load_config(args.config), args.scale)
    rows = run_scenario(
        args.scenario, loaded, seed=args.seed, runs=args.runs, jobs=args.jobs
    )
    out = args.out
    csv_path = out / f"scenario{args.scenario}.csv"
    write_csv(rows, csv_path)
    write_timings(rows, out / f"scenario{args.scenario}_timings.csv")
    print(f"{csv_path}: {len(rows)} rows")
    return 0


def _cmd_check(args) -> int:
    failures = 0
    for result in run_battery(seed=args.seed):
        status = "PASS" if result.ok else "FAIL"
        print(f"[{status}] {result.name}: {result.detail}")
        failures += 0 if result.ok else 1
    return 1 if failures else 0


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "solve":
            return _cmd_solve(args)
        if args.command == "scenario":
            return _cmd_scenario(args)
        return _cmd_check(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (InfeasibleInstance, EmptyFeasibleSet) as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())

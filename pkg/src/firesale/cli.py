"""Command-line front end.

Subcommands:
    run         run best-response dynamics on a game file, write trace + verdict
    reproduce   replay a bundled example scenario against its fixture
    experiment  run the diversification experiment from a JSON config
    analyze     maximal equilibrium, profile verification, coalition scan, bailout
    validate    schema-check a game file

The CLI is a thin shell over the library; no numerics live here. Exit codes
for ``run``: 0 converged, 2 cycle detected, 3 budget exhausted; schema errors
exit 1. ``reproduce`` exits 4 on a fixture mismatch.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import analysis, dynamics, examples, experiments
from .dynamics import DynamicsConfig, DynamicsKind, Verdict
from .model import GameSchemaError, load_game

_KINDS = {
    "sync-exact": DynamicsKind.SYNCHRONOUS_EXACT,
    "seq-exact": DynamicsKind.SEQUENTIAL_EXACT,
    "sync-simplified": DynamicsKind.SYNCHRONOUS_SIMPLIFIED,
}

_EXIT = {
    Verdict.CONVERGED: 0,
    Verdict.CYCLE_DETECTED: 2,
    Verdict.BUDGET_EXHAUSTED: 3,
}


def _parse_floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.split(","))


def _parse_ints(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.split(","))


def _load(path: str):
    try:
        return load_game(path)
    except FileNotFoundError:
        print(f"error: no such file: {path}", file=sys.stderr)
        raise SystemExit(1)
    except GameSchemaError as exc:
        print(f"error: invalid game file {path}: {exc}", file=sys.stderr)
        raise SystemExit(1)


def _cmd_run(args) -> int:
    game = _load(args.game)
    cfg = DynamicsConfig(
        kind=_KINDS[args.kind],
        start=_parse_floats(args.start) if args.start else None,
        delta=args.delta,
        max_steps=args.max_steps,
        order=_parse_ints(args.order) if args.order else None,
    )
    try:
        trace = dynamics.run_dynamics(game, cfg)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    prefix = Path(args.out_prefix) if args.out_prefix else Path(args.game).with_suffix("")
    trace_path = prefix.with_name(prefix.name + "_trace.csv")
    verdict_path = prefix.with_name(prefix.name + "_verdict.json")
    dynamics.trace_to_csv(trace, trace_path)
    dynamics.write_verdict(trace, cfg, verdict_path)
    final = ", ".join(f"{v:.6g}" for v in trace.final)
    print(f"{trace.verdict.value} after {trace.steps} steps; final profile [{final}]")
    if trace.cycle is not None:
        print(f"cycle period {trace.cycle.period}")
    print(f"wrote {trace_path} and {verdict_path}")
    return _EXIT[trace.verdict]


def _cmd_reproduce(args) -> int:
    ids = list(examples.EXAMPLE_IDS) if args.example == "all" else [args.example]
    failed = False
    for example_id in ids:
        kwargs = {}
        if example_id == "bad_equilibrium":
            kwargs["n"] = args.n
        try:
            report = examples.reproduce(example_id, **kwargs)
        except KeyError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1
        print(report.format())
        failed = failed or not report.ok
    return 4 if failed else 0


def _cmd_experiment(args) -> int:
    try:
        doc = json.loads(Path(args.config).read_text())
        cfg = experiments.ExperimentConfig.from_json(doc)
    except (OSError, ValueError) as exc:
        print(f"error: bad experiment config: {exc}", file=sys.stderr)
        return 1
    result = experiments.run_experiment(cfg)
    written = experiments.write_results(result, args.out_dir)
    for path in written:
        print(f"wrote {path}")
    return 0


def _cmd_analyze(args) -> int:
    game = _load(args.game)
    out: dict
    try:
        if args.bailout:
            donor, recipient, asset = (int(v) for v in args.bailout[:3])
            share = float(args.bailout[3])
            report = analysis.bailout_whatif(game, donor, recipient, asset, share)
            out = report.to_json()
        elif args.profile is not None:
            y = np.array(_parse_floats(args.profile))
            report = analysis.verify_equilibrium(game, y)
            out = report.to_json()
            if args.coalition:
                hit = analysis.coalition_scan(game, y, grid=args.grid)
                out["coalition"] = hit.to_json() if hit is not None else None
        else:
            report = analysis.maximal_equilibrium(game)
            out = report.to_json()
            if args.coalition:
                hit = analysis.coalition_scan(game, report.profile, grid=args.grid)
                out["coalition"] = hit.to_json() if hit is not None else None
    except (ValueError, analysis.UnsupportedRegimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    text = json.dumps(out, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n")
        print(f"wrote {args.out}")
    else:
        print(text)
    return 0


def _cmd_validate(args) -> int:
    try:
        game = load_game(args.game)
    except FileNotFoundError:
        print(f"error: no such file: {args.game}", file=sys.stderr)
        return 1
    except GameSchemaError as exc:
        print(f"invalid: {exc}", file=sys.stderr)
        return 1
    print(f"ok: {args.game}: {game.n_agents} agents, {game.n_assets} assets, "
          f"alpha={game.alpha:g}, leverage cap={game.leverage_cap:g}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="firesale",
        description="Fire-sale games: dynamics, equilibria, and experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run best-response dynamics on a game file")
    run.add_argument("game", help="path to a game JSON file")
    run.add_argument("--kind", choices=sorted(_KINDS), default="sync-exact")
    run.add_argument("--start", help="comma-separated start profile (default all-ones)")
    run.add_argument("--delta", type=float, default=1e-5,
                     help="stop when all strategy changes drop below this (default 1e-5)")
    run.add_argument("--max-steps", type=int, default=10_000)
    run.add_argument("--order", help="comma-separated sequential deviation order")
    run.add_argument("--out-prefix", help="prefix for the trace/verdict files")
    run.set_defaults(func=_cmd_run)

    rep = sub.add_parser("reproduce", help="replay a bundled example scenario")
    rep.add_argument("example", choices=sorted(examples.EXAMPLE_IDS) + ["all"])
    rep.add_argument("--n", type=int, default=10,
                     help="agent count for bad_equilibrium (default 10)")
    rep.set_defaults(func=_cmd_reproduce)

    exp = sub.add_parser("experiment", help="run the diversification experiment")
    exp.add_argument("config", help="experiment config JSON")
    exp.add_argument("--out-dir", default="experiment_out")
    exp.set_defaults(func=_cmd_experiment)

    ana = sub.add_parser("analyze", help="equilibrium and welfare analysis")
    ana.add_argument("game", help="path to a game JSON file")
    ana.add_argument("--profile", help="verify this profile instead of the maximal equilibrium")
    ana.add_argument("--coalition", action="store_true",
                     help="also scan for an improving coalition deviation")
    ana.add_argument("--grid", type=int, default=51, help="coalition grid resolution")
    ana.add_argument("--bailout", nargs=4, metavar=("DONOR", "RECIPIENT", "ASSET", "SHARE"),
                     help="evaluate an asset transfer instead")
    ana.add_argument("--out", help="write the JSON report here instead of stdout")
    ana.set_defaults(func=_cmd_analyze)

    val = sub.add_parser("validate", help="schema-check a game file")
    val.add_argument("game")
    val.set_defaults(func=_cmd_validate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

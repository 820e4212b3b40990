"""Command-line interface: ``rtzmg <subcommand> [options]``.

Every subcommand writes its artifact to ``--out`` (or prints JSON to stdout
when no output path applies).  Failures exit with status 1 and a JSON object
``{"error": ..., "message": ...}`` on stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .dataset import dataset_counts, estimate_model, flatten, load_dataset, sample_dataset, save_dataset, two_stage_subsample
from .evaluation import nash_gap
from .experiment import ExperimentConfig, fit_loglog_slope, read_rows, run_experiment, summarize
from .game import load_game, save_game, uniform_policy_pair
from .instances import HardInstanceParams, hard_rmdp, random_game, random_phi
from .solver import PenaltyParams, load_result, rtz_vi, rtz_vi_lcb, save_result


def _emit(obj, out=None) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True)
    if out:
        Path(out).write_text(text + "\n")
    else:
        print(text)


def cmd_generate(args) -> None:
    game = random_game(args.S, args.A, args.B, args.H, args.seed, args.sigma_plus, args.sigma_minus)
    save_game(game, args.out)


def cmd_hard_instance(args) -> None:
    phi = tuple(int(c) for c in args.phi) if args.phi else random_phi(args.H, args.seed)
    params = HardInstanceParams(
        H=args.H, sigma=args.sigma, epsilon=args.epsilon, phi=phi,
        c0=args.c0, c2=args.c2, c5=args.c5, C=args.C, n_states=args.n_states,
    )
    save_game(hard_rmdp(params), args.out)


def cmd_sample(args) -> None:
    game = load_game(args.game)
    data = sample_dataset(game, uniform_policy_pair(game.S, game.A, game.B, game.H), args.k, args.seed)
    if args.subsample == "two-stage":
        data = two_stage_subsample(data, args.delta, args.seed)
    elif args.subsample == "flat":
        data = flatten(data)
    save_dataset(data, args.out)


def cmd_solve(args) -> None:
    game = load_game(args.game)
    data = load_dataset(args.data)
    model = estimate_model(dataset_counts(data), game.rewards, args.delta, data.K)
    if args.algo == "lcb":
        params = PenaltyParams(c_n=args.cn, delta=args.delta, k=data.K)
        result = rtz_vi_lcb(model, args.sigma_plus, args.sigma_minus, params)
    else:
        result = rtz_vi(model, args.sigma_plus, args.sigma_minus)
    save_result(result, args.out)


def cmd_evaluate(args) -> None:
    game = load_game(args.game)
    result = load_result(args.result)
    report = nash_gap(game, result.policy.mu, result.policy.nu)
    _emit(report.to_dict(), args.out)


def cmd_experiment(args) -> None:
    if args.config:
        config = ExperimentConfig.from_dict(json.loads(Path(args.config).read_text()))
        if args.out:
            config.out_dir = args.out
    else:
        config = ExperimentConfig(
            game={"kind": "random", "S": args.S, "A": args.A, "B": args.B, "H": args.H},
            K_grid=tuple(args.k),
            seeds=tuple(range(args.seed, args.seed + args.seeds)),
            delta=args.delta,
            c_n=args.cn,
            sigma_plus=args.sigma_plus,
            sigma_minus=args.sigma_minus,
            out_dir=args.out,
            threads=args.threads,
            subsample=args.subsample,
            timing=args.timing,
        )
    config.threads = args.threads if args.threads else config.threads
    _, summary = run_experiment(config)
    if not config.out_dir:
        _emit(summary)


def cmd_slope(args) -> None:
    if args.csv:
        summary = summarize(read_rows(args.csv))
        points = [(d["K"], d[f"mean_gap_{args.column}"]) for d in summary["per_K"]]
    else:
        points = [tuple(map(float, p.split(":"))) for p in args.points.split(",")]
    slope, intercept, r2 = fit_loglog_slope(points)
    _emit({"slope": slope, "intercept": intercept, "r_squared": r2, "points": points}, args.out)


def _common(p, *, sizes=False, radii=True, delta=True, cn=False):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.add_argument("--threads", type=int, default=None)
    if sizes:
        for name, default in (("--S", 5), ("--A", 2), ("--B", 2), ("--H", 5)):
            p.add_argument(name, type=int, default=default)
    if radii:
        p.add_argument("--sigma-plus", type=float, default=0.2)
        p.add_argument("--sigma-minus", type=float, default=0.2)
    if delta:
        p.add_argument("--delta", type=float, default=0.05)
    if cn:
        p.add_argument("--cn", type=float, default=1.0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rtzmg", description="Offline robust zero-sum Markov game toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="random game to JSON")
    _common(p, sizes=True, delta=False)
    p.set_defaults(func=cmd_generate, need_out=True)

    p = sub.add_parser("hard-instance", help="two-state hard instance to JSON")
    _common(p, radii=False, delta=False)
    p.add_argument("--H", type=int, default=16)
    p.add_argument("--sigma", type=float, default=0.2)
    p.add_argument("--epsilon", type=float, default=0.5)
    p.add_argument("--phi", default=None, help="bit string of length H (default: drawn from --seed)")
    p.add_argument("--c0", type=float, default=0.25)
    p.add_argument("--c2", type=float, default=0.25)
    p.add_argument("--c5", type=float, default=0.1)
    p.add_argument("--C", type=float, default=1.0)
    p.add_argument("--n-states", type=int, default=2)
    p.set_defaults(func=cmd_hard_instance, need_out=True)

    p = sub.add_parser("sample", help="behavior-policy dataset to CSV")
    _common(p, radii=False)
    p.add_argument("--game", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--subsample", choices=("none", "flat", "two-stage"), default="none")
    p.set_defaults(func=cmd_sample, need_out=True)

    p = sub.add_parser("solve", help="solve an empirical model")
    _common(p, cn=True)
    p.add_argument("--game", required=True, help="game JSON supplying the reward table")
    p.add_argument("--data", required=True)
    p.add_argument("--algo", choices=("lcb", "vi"), default="lcb")
    p.set_defaults(func=cmd_solve, need_out=True)

    p = sub.add_parser("evaluate", help="Nash gap of a solved policy on the true game")
    _common(p, radii=False, delta=False)
    p.add_argument("--game", required=True)
    p.add_argument("--result", required=True)
    p.set_defaults(func=cmd_evaluate, need_out=False)

    p = sub.add_parser("experiment", help="sweep K over seeds")
    _common(p, sizes=True, cn=True)
    p.add_argument("--config", default=None, help="ExperimentConfig JSON (overrides the size flags)")
    p.add_argument("--k", type=int, nargs="+", default=[128, 256])
    p.add_argument("--seeds", type=int, default=1, help="number of consecutive seeds starting at --seed")
    p.add_argument("--subsample", choices=("two-stage", "none"), default="two-stage")
    p.add_argument("--timing", action="store_true", help="record solver runtimes (breaks byte-identical reruns)")
    p.set_defaults(func=cmd_experiment, need_out=False)

    p = sub.add_parser("slope", help="log-log slope of mean gap versus K")
    p.add_argument("--csv", default=None)
    p.add_argument("--points", default=None, help="K:gap pairs, comma separated")
    p.add_argument("--column", choices=("lcb", "vi"), default="lcb")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_slope, need_out=False)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.need_out and not args.out:
            raise ValueError(f"{args.command} requires --out")
        if args.command == "slope" and not (args.csv or args.points):
            raise ValueError("slope requires --csv or --points")
        args.func(args)
    except Exception as exc:  # reported as JSON for scripted callers
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

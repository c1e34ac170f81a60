"""Command-line interface.

Subcommands: train, eval, verify, ablate, ag-ratio, plot. Exit codes:
0 success, 1 verification failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import harness, metrics, nn, plots
from .envs import make_env
from .errors import ConfigError


def _parse_overrides(pairs) -> dict[str, str]:
    out = {}
    for pair in pairs or ():
        if "=" not in pair:
            raise ConfigError(f"override {pair!r} must look like key=value")
        key, _, value = pair.partition("=")
        out[key.strip()] = value.strip()
    return out


def _load_base_config(args) -> harness.RunConfig:
    cfg = harness.load_config(args.config) if args.config else harness.RunConfig()
    overrides = _parse_overrides(getattr(args, "set", None))
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = str(args.seed)
    if getattr(args, "algo", None):
        overrides["algo.kind"] = args.algo
    if getattr(args, "env", None):
        overrides["env"] = args.env
    if getattr(args, "out", None):
        overrides["out_dir"] = args.out
    if getattr(args, "steps", None) is not None:
        overrides["total_env_steps"] = str(args.steps)
    return harness.apply_overrides(cfg, overrides) if overrides else cfg


def _cmd_train(args) -> int:
    cfg = _load_base_config(args)
    final = harness.train(cfg)
    print(f"final success_rate={final.success_rate:.4f} after {final.env_step} env steps "
          f"({final.wall_clock_s:.1f}s); outputs in {cfg.out_dir}")
    return 0


def _cmd_eval(args) -> int:
    net = nn.load_checkpoint(args.checkpoint)
    env = make_env(args.env)
    rng = np.random.default_rng(args.seed)
    rate = metrics.evaluate(net, env, args.episodes, rng)
    print(f"success_rate={rate:.4f} over {args.episodes} episodes on {args.env}")
    return 0


def _cmd_verify(args) -> int:
    overrides = {}
    for pair in args.tolerance or ():
        if "=" not in pair:
            raise ConfigError(f"tolerance override {pair!r} must look like name=value")
        name, _, value = pair.partition("=")
        overrides[name.strip()] = float(value)
    report = harness.verify(suite=args.suite, n_instances=args.seeds,
                            tolerance_overrides=overrides, base_seed=args.seed)
    for check in report.checks:
        print(check.line())
    Path(args.json).write_text(report.to_json(), encoding="ascii")
    n_fail = sum(not c.passed for c in report.checks)
    print(f"{len(report.checks)} checks, {n_fail} failures; report at {args.json}")
    return 0 if report.all_passed else 1


def _cmd_ablate(args) -> int:
    cfg = _load_base_config(args)
    values = [float(v) for v in args.values.split(",") if v]
    seeds = [int(v) for v in args.seeds.split(",") if v]
    rows = harness.ablate(cfg, args.param, values, seeds)
    for row in rows:
        print(f"{args.param}={row['value']:g} seed={row['seed']} "
              f"final_success={row['final_success']:.4f}")
    return 0


def _cmd_ag_ratio(args) -> int:
    env = make_env(args.env)
    rng = np.random.default_rng(args.seed)
    ratio = metrics.initial_ag_change_ratio(env, args.n, rng)
    print(f"initial_ag_change_ratio={ratio:.4f} over {args.n} random trajectories on {args.env}")
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        successes = {}
        if args.metrics:
            finals = plots.final_success_by_algo(plots.read_metrics(args.metrics))
            successes = {algo: 100.0 * float(np.mean(v)) for algo, v in finals.items()}
        path = plots.plot_ag_ratio_scatter(ratio, successes, out_dir / "ag_ratio_scatter.svg")
        print(f"scatter written to {path}")
    return 0


def _cmd_plot(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    curve = plots.plot_learning_curves(args.csvs, out_dir / "learning_curves.svg")
    print(f"learning curves written to {curve}")
    try:
        bars = plots.plot_gain_bars(args.csvs, out_dir / "gain_bars.svg")
        print(f"gain bars written to {bars}")
    except ValueError as exc:
        print(f"gain bars skipped: {exc}", file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hindsight",
                                     description="self-supervised goal-reaching experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="run one training job")
    p.add_argument("--config", help="config file (flat 'key = value' lines)")
    p.add_argument("--seed", type=int)
    p.add_argument("--algo", choices=("gcsl", "her01", "her10", "her_sql", "her_hbc", "hdm"))
    p.add_argument("--env")
    p.add_argument("--out")
    p.add_argument("--steps", type=int, help="override total_env_steps")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override any config key (repeatable)")
    p.set_defaults(fn=_cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--episodes", type=int, default=200)
    p.add_argument("--env", default="four-rooms")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=_cmd_eval)

    p = sub.add_parser("verify", help="run the tabular identity checks")
    p.add_argument("--suite", default="all",
                   choices=("all", "online-to-offline", "nce", "pmi", "ebm", "her"))
    p.add_argument("--seeds", type=int, default=20,
                   help="number of random instances per randomized check")
    p.add_argument("--seed", type=int, default=0, help="base seed")
    p.add_argument("--tolerance", action="append", metavar="NAME=VALUE",
                   help="override a check tolerance (repeatable)")
    p.add_argument("--json", default="verify_report.json")
    p.set_defaults(fn=_cmd_verify)

    p = sub.add_parser("ablate", help="sweep gamma_hdm or beta")
    p.add_argument("--config")
    p.add_argument("--param", required=True, choices=harness.ABLATION_PARAMS)
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--seeds", default="0", help="comma-separated seeds")
    p.add_argument("--seed", type=int)
    p.add_argument("--algo")
    p.add_argument("--env")
    p.add_argument("--out")
    p.add_argument("--steps", type=int)
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.set_defaults(fn=_cmd_ablate)

    p = sub.add_parser("ag-ratio", help="initial achieved-goal change ratio")
    p.add_argument("--env", default="four-rooms")
    p.add_argument("--n", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="directory for the scatter SVG")
    p.add_argument("--metrics", nargs="*", help="metrics CSVs for success points")
    p.set_defaults(fn=_cmd_ag_ratio)

    p = sub.add_parser("plot", help="learning curves + gain bars from metrics CSVs")
    p.add_argument("csvs", nargs="+")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_plot)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

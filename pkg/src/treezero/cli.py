"""Command line entry point.

    treezero run --preset muzero --env cartpole --seeds 0 1 2 --out runs/
    treezero summarize runs/
    treezero eval --checkpoint runs/muzero_cartpole/seed_0/checkpoint_final.npz

`run` trains one run per seed and writes config.json, metrics.csv and
checkpoints under <out>/<preset>_<env>/seed_<s>/, then refreshes the
summary files. `--set key=value` overrides any config field. `eval` replays
greedy episodes from a saved checkpoint and prints the reward stats.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import sys

import numpy as np

from .config import apply_overrides, load_config
from .envs import make_env
from .harness import run_many, summarize
from .mcts import SearchParams
from .networks import load_checkpoint
from .presets import ENV_TABLES, PRESET_NAMES, build_config
from .trainer import evaluate


def _parse_sets(pairs: list[str]) -> dict:
    out = {}
    for pair in pairs:
        if "=" not in pair:
            raise ValueError(f"--set expects key=value, got {pair!r}")
        key, value = pair.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def cmd_run(args) -> int:
    overrides = _parse_sets(args.set)
    configs = []
    for seed in args.seeds:
        if args.config:
            cfg = load_config(args.config)
            cfg = dataclasses.replace(cfg, seed=seed)
            if overrides:
                apply_overrides(cfg, overrides)
            cfg.validate()
        else:
            if not args.preset or not args.env:
                print("run: --preset and --env are required without --config",
                      file=sys.stderr)
                return 2
            cfg = build_config(args.preset, args.env, grid_size=args.grid_size,
                               seed=seed, overrides=overrides)
        if args.stop_on_solved:
            cfg.stop_on_solved = True
        configs.append(cfg)
    results = run_many(configs, args.out, mode=args.mode,
                       verbose=not args.quiet)
    for res in results:
        print(f"seed {res['seed']}: steps={res['steps']} "
              f"final_reward={res['final_reward']:.3f} "
              f"solved_at={res['solved_at']}")
    return 0


def cmd_summarize(args) -> int:
    rows = summarize(args.out_dir, final_window=args.window)
    if not rows:
        print(f"no runs found under {args.out_dir}", file=sys.stderr)
        return 1
    for row in rows:
        solved = (f"{row['solved_runs']}/{row['runs']} solved"
                  + (f" (mean step {row['solved_steps_mean']:.0f})"
                     if row["solved_steps_mean"] != "" else ""))
        print(f"{row['group']}: final_reward = {row['final_reward_mean']:.3f} "
              f"+/- {row['final_reward_std']:.3f} over {row['runs']} runs, {solved}")
    return 0


def cmd_eval(args) -> int:
    net, meta = load_checkpoint(args.checkpoint)
    if "config_json" not in meta:
        print("checkpoint carries no config; cannot rebuild the environment",
              file=sys.stderr)
        return 1
    cfg = json.loads(str(meta["config_json"]))
    params = SearchParams(
        num_simulations=args.num_simulations or int(cfg["num_simulations"]),
        discount=float(cfg["discount"]),
        c1=float(cfg["c1"]), c2=float(cfg["c2"]),
    )
    env_factory = lambda: make_env(cfg["env"], int(cfg["grid_size"]))
    rng = np.random.default_rng(args.seed)
    rewards, opponent = evaluate(net, env_factory, params, args.episodes, rng)
    print(f"episodes={args.episodes} mean={rewards.mean():.3f} "
          f"min={rewards.min():.3f} max={rewards.max():.3f}")
    if opponent is not None:
        print(f"second seat mean={opponent.mean():.3f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="treezero")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="train one run per seed")
    run_p.add_argument("--preset", choices=PRESET_NAMES)
    run_p.add_argument("--env", choices=sorted(ENV_TABLES))
    run_p.add_argument("--grid-size", type=int, default=4)
    run_p.add_argument("--seeds", type=int, nargs="+", default=[0])
    run_p.add_argument("--out", default="runs")
    run_p.add_argument("--config", help="base config JSON instead of a preset")
    run_p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    run_p.add_argument("--mode", choices=["sequential", "concurrent"],
                       default="sequential")
    run_p.add_argument("--stop-on-solved", action="store_true")
    run_p.add_argument("--quiet", action="store_true")
    run_p.set_defaults(func=cmd_run)

    sum_p = sub.add_parser("summarize", help="aggregate finished runs")
    sum_p.add_argument("out_dir")
    sum_p.add_argument("--window", type=int, default=10,
                       help="evaluations averaged into the final reward")
    sum_p.set_defaults(func=cmd_summarize)

    eval_p = sub.add_parser("eval", help="greedy episodes from a checkpoint")
    eval_p.add_argument("--checkpoint", required=True)
    eval_p.add_argument("--episodes", type=int, default=100)
    eval_p.add_argument("--seed", type=int, default=0)
    eval_p.add_argument("--num-simulations", type=int)
    eval_p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""Command line: ``locorl run | compare | replay``.

Exit codes: 0 success, 1 configuration error, 2 I/O error.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import ConfigError, parse_config
from .experiment import cmd_compare, cmd_replay, cmd_run
from .rl import ShapeMismatch

EXIT_OK, EXIT_CONFIG, EXIT_IO = 0, 1, 2


def _seeds(text):
    return [int(x) for x in text.replace(",", " ").split()]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="locorl", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log training progress")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", type=Path, help="experiment configuration file")
        sp.add_argument("--episodes", type=int, help="override [experiment] max_episodes")
        sp.add_argument("--obstacle", choices=("fixed", "random"),
                        help="obstacle spawn: fixed offset or uniform random range")
        sp.add_argument("--out-dir", type=Path, default=Path("out"))

    run = sub.add_parser("run", help="train one schedule")
    common(run)
    run.add_argument("--schedule", choices=("linear", "ieg", "constant"), default="ieg")
    run.add_argument("--seed", type=int, help="defaults to the first configured seed")

    cmp_ = sub.add_parser("compare", help="train linear and ieg schedules and compare")
    common(cmp_)
    cmp_.add_argument("--seeds", type=_seeds, help="e.g. '1,2,3,4,5'; defaults to config")

    rep = sub.add_parser("replay", help="greedy episode from a saved Q-table")
    common(rep)
    rep.add_argument("qtable", type=Path)
    rep.add_argument("--seed", type=int, default=0, help="seed for argmax tie breaks")
    return p


def _load_config(args):
    text = "" if args.config is None else args.config.read_text()
    cfg = parse_config(text)
    overrides = {}
    if args.episodes is not None:
        overrides["max_episodes"] = args.episodes
    if args.obstacle is not None:
        overrides["obstacle"] = args.obstacle
    return cfg.with_overrides(**overrides) if overrides else cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = _load_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        if args.command == "run":
            seed = cfg.experiment.seeds[0] if args.seed is None else args.seed
            run = cmd_run(cfg, args.schedule, seed, args.out_dir)
            last = run.summaries[-1]
            print(f"{args.schedule} seed {seed}: {len(run.summaries)} episodes, "
                  f"last reward_sum {last['reward_sum']:.4f} ({last['termination']}); "
                  f"outputs in {args.out_dir}")
        elif args.command == "compare":
            seeds = args.seeds or list(cfg.experiment.seeds)
            report = cmd_compare(cfg, seeds, args.out_dir)
            print(f"mean reward improvement {report.mean_reward_improvement:+.2f}%, "
                  f"mean safety improvement {report.mean_safety_improvement:+.2f}%; "
                  f"report in {args.out_dir / 'report.txt'}")
        else:
            out = args.out_dir / "replay.csv"
            result = cmd_replay(args.qtable, cfg, out, args.seed)
            print(f"replay: {result.termination.value} after {result.steps} steps, "
                  f"reward_sum {result.reward_sum:.4f}; steps in {out}")
    except ShapeMismatch as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

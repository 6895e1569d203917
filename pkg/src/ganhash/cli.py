"""Command-line entry point.

    ganhash run          --config cfg.json --out DIR [--seed N] [--stage NAME]
    ganhash pretrain-gan --config cfg.json --out DIR [--seed N]
    ganhash train        --config cfg.json --out DIR [--seed N]
    ganhash index        --config cfg.json --out DIR [--seed N]
    ganhash encode-lsh   --config cfg.json --out DIR [--seed N]
    ganhash eval         --config cfg.json --out DIR [--seed N]
    ganhash sweep        --config cfg.json --out DIR [--seed N]
    ganhash dump-samples --config cfg.json --out DIR [--seed N]
    ganhash report       --out DIR

``--seed N`` adds N to every seed in the config. ``GANHASH_DATA_ROOT``
resolves relative dataset paths. Exit codes: 0 success, 1 config error,
2 stage failure.
"""

from __future__ import annotations

import argparse
import sys
import traceback

from .errors import ConfigError
from .pipeline import (
    STAGE_ORDER,
    load_config,
    report,
    run_pipeline,
    shift_seeds,
)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_STAGE = 2

_STAGE_COMMANDS = ["pretrain-gan", "train", "index", "encode-lsh", "eval", "dump-samples"]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ganhash", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, needs_config=True):
        if needs_config:
            p.add_argument("--config", required=True, help="experiment config JSON")
            p.add_argument("--seed", type=int, default=0,
                           help="offset added to every configured seed")
        p.add_argument("--out", required=True, help="run output directory")

    run = sub.add_parser("run", help="run the full pipeline")
    add_common(run)
    run.add_argument("--stage", choices=STAGE_ORDER, help="run only this stage")

    for name in _STAGE_COMMANDS:
        add_common(sub.add_parser(name, help=f"run the {name} stage"))

    sweep = sub.add_parser("sweep", help="train/index/eval every synthetic fraction")
    add_common(sweep)

    rep = sub.add_parser("report", help="aggregate eval reports into a summary table")
    add_common(rep, needs_config=False)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)

    if args.command == "report":
        table, _ = report(args.out)
        print(table)
        return EXIT_OK

    try:
        cfg = shift_seeds(load_config(args.config), args.seed)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG

    if args.command == "run":
        stages = [args.stage] if args.stage else list(STAGE_ORDER)
    elif args.command == "sweep":
        stages = ["train", "index", "encode-lsh", "eval"]
    else:
        stages = [args.command]

    for stage in stages:
        try:
            run_pipeline(cfg, args.out, stage=stage)
        except ConfigError as e:
            print(f"config error in stage {stage}: {e}", file=sys.stderr)
            return EXIT_CONFIG
        except Exception as e:
            print(f"stage {stage} failed: {e}", file=sys.stderr)
            traceback.print_exc()
            return EXIT_STAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

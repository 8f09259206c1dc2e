"""Command-line entry point.

    scoutcast simulate|features|tune|train|evaluate|report --config <path>

Exit codes: 0 success, 2 config error, 3 data error.
"""

from __future__ import annotations

import argparse
import json
import sys

from .core import DataError
from .experiment import (
    ConfigError,
    cmd_evaluate,
    cmd_features,
    cmd_report,
    cmd_simulate,
    cmd_train,
    cmd_tune,
    load_config,
)

COMMANDS = ("simulate", "features", "tune", "train", "evaluate", "report")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scoutcast",
        description="Forecast one-year player quality and transfer value development "
                    "on synthetic league data.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="experiment config (JSON or YAML)")
        p.add_argument("--seed", type=int, default=None, help="override the master seed")
        p.add_argument("--out", default=None, help="override the output directory")
        p.add_argument("--json-errors", action="store_true",
                       help="emit machine-readable errors on stderr")
    return parser


def _fail(exc: Exception, code: int, json_errors: bool) -> int:
    if json_errors:
        payload = {"error": {"type": type(exc).__name__, "message": str(exc), "code": code}}
        print(json.dumps(payload), file=sys.stderr)
    else:
        print(f"scoutcast: error: {exc}", file=sys.stderr)
    return code


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            raw = cfg.to_dict()
            raw["seed"] = args.seed
            raw["sim"]["seed"] = args.seed
            from .experiment import config_from_dict

            cfg = config_from_dict(raw)
        out = args.out
        if args.command == "simulate":
            target = cmd_simulate(cfg, out)
        elif args.command == "features":
            target = cmd_features(cfg, out)
        elif args.command == "tune":
            cmd_tune(cfg, out=out)
            target = None
        elif args.command == "train":
            target = cmd_train(cfg, out=out)
        elif args.command == "evaluate":
            target = cmd_evaluate(cfg, out=out)
        else:
            target = cmd_report(cfg, out)
        if target is not None:
            print(target)
        return 0
    except ConfigError as exc:
        return _fail(exc, 2, args.json_errors)
    except DataError as exc:
        return _fail(exc, 3, args.json_errors)


if __name__ == "__main__":
    sys.exit(main())

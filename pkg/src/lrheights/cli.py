"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 enumeration budget exceeded,
4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import sys

from .config import TASKS, ConfigError, load_config
from .exact import BudgetExceededError
from .harness import run_task, sweep

EXIT_OK, EXIT_CONFIG, EXIT_BUDGET, EXIT_IO = 0, 2, 3, 4


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lrheights",
        description="Exact enumeration, sampling and entropy ledgers for long-range integer height chains.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in (*TASKS, "sweep"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="key = value configuration file")
        p.add_argument("--out", help="output directory (overrides output.dir)")
        p.add_argument("--seed", type=int, help="RNG seed (overrides run.seed)")
        p.add_argument("--quiet", action="store_true", help="print nothing on success")
        if name == "sweep":
            p.add_argument("--jobs", type=int, default=1, help="grid cells run in parallel")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config, None if args.command == "sweep" else args.command)
        if args.seed is not None:
            config = config.replace(run__seed=args.seed)
        out = args.out if args.out is not None else config["output.dir"]
        if args.command == "sweep":
            result = sweep(config, out, jobs=args.jobs)
            if not args.quiet:
                print(f"{len(result.entries)} runs ok, {len(result.failures)} failed -> {result.summary_path}")
                for cell, err in result.failures:
                    print(f"  failed {cell}: {err}", file=sys.stderr)
        else:
            entry = run_task(config, out)
            if not args.quiet:
                print(json.dumps({"run_id": entry.run_id, "summary": entry.summary}, sort_keys=True))
    except ConfigError as exc:
        for v in exc.violations:
            print(f"config error: {v}", file=sys.stderr)
        return EXIT_CONFIG
    except BudgetExceededError as exc:
        print(f"budget error: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

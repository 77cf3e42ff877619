#!/usr/bin/env python3
"""
Main CLI entry point for mbpre
Runs one experiment command from a JSON configuration
"""

import argparse
import sys
from typing import List, Optional

from .runner.config import COMMANDS, ConfigValidationError, load_config, with_overrides

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mbpre",
        description="mbpre - critical multitype branching processes in random environment",
    )
    parser.add_argument("command", choices=COMMANDS, help="Experiment to run")
    parser.add_argument("--config", required=True, help="Path to the JSON configuration")
    parser.add_argument("--seed", type=int, help="Override the master seed")
    parser.add_argument("--out", help="Override the output directory")
    parser.add_argument("--replicas", type=int, help="Override the replica count")
    parser.add_argument("--workers", type=int, help="Override the number of worker processes")
    parser.add_argument("--quiet", action="store_true", help="Hide progress output")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Main CLI entry point"""
    parser = build_parser()
    args = parser.parse_args(argv)

    try:
        config = load_config(args.config, args.command)
        config = with_overrides(
            config, seed=args.seed, output_dir=args.out, replicas=args.replicas, workers=args.workers
        )
    except ConfigValidationError as exc:
        print("❌ 設定エラー:", file=sys.stderr)
        for path, message in exc.errors:
            print(f"  {path}: {message}", file=sys.stderr)
        return EXIT_VALIDATION

    from .core import BranchingLab

    try:
        BranchingLab(config, verbose=not args.quiet).run()
    except Exception as exc:
        print(f"❌ 実行エラー: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

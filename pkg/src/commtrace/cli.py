"""Command-line entry point: one subcommand per pipeline stage.

Exit codes: 0 success, 2 configuration error, 3 data/prerequisite error,
4 numeric failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import DATA_ROOT_ENV, SAMPLE_CONFIG, load_config
from .errors import ConfigError, DataError, NumericError
from .stages import STAGES, run_stage

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="commtrace",
        description="Offline analytics for egocentric wearable audio feature "
                    "streams: diarization training, speaking sessions, vocal "
                    "arousal, and cohort statistics.",
        epilog=f"The default data root may also come from ${DATA_ROOT_ENV}.")
    parser.add_argument("--print-sample-config", action="store_true",
                        help="write a template config to stdout and exit")
    sub = parser.add_subparsers(dest="stage")
    for stage in STAGES:
        sp = sub.add_parser(stage, help=f"run the {stage} stage")
        sp.add_argument("--config", required=True, help="pipeline config (INI)")
        sp.add_argument("--seed", type=int, default=None,
                        help="override the config seed")
        sp.add_argument("--jobs", type=int, default=1,
                        help="worker threads for per-recording work")
        sp.add_argument("--stage-dir", default=None,
                        help="override this stage's output directory")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.print_sample_config:
        sys.stdout.write(SAMPLE_CONFIG)
        return EXIT_OK
    if args.stage is None:
        parser.print_help()
        return EXIT_CONFIG

    try:
        config = load_config(args.config, seed=args.seed, jobs=args.jobs)
        stage_dir = Path(args.stage_dir) if args.stage_dir else None
        outputs = run_stage(args.stage, config, stage_dir)
    except ConfigError as exc:
        print(f"commtrace: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"commtrace: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"commtrace: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    print(f"commtrace: stage {args.stage!r} wrote {len(outputs)} files")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

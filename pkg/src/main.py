import argparse
import logging
import sys
from pathlib import Path

from src.commands import EXIT_CONFIG, compare_nonjoint, compare_oracle, optimize, probe_hessian, simulate
from src.config import RunConfig, dump_config, load_config, settings
from src.errors import ConfigError, DomainError, OracleCapExceeded

logger = logging.getLogger("cogalloc")

COMMANDS = (optimize, compare_oracle, compare_nonjoint, simulate, probe_hessian)


def configure_logging(level_name: str) -> None:
    level = logging.getLevelNamesMapping().get(level_name.upper())
    logging.basicConfig(
        level=level if level is not None else logging.WARNING,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    if level is None:
        logger.warning("Unknown log level %r, using WARNING", level_name)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON run configuration; defaults when omitted")
    common.add_argument("--seed", type=int, help="master seed, overrides the config")
    common.add_argument("--jobs", type=int, default=settings.jobs, help="worker processes")
    common.add_argument("--out", type=Path, default=Path(settings.out_dir), help="output directory")
    common.add_argument(
        "--emit-effective-config",
        action="store_true",
        help="print the fully defaulted configuration and exit",
    )

    parser = argparse.ArgumentParser(
        prog="cogalloc",
        description="Joint sensing, SU selection and time allocation for cooperative cognitive radio",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    for command in COMMANDS:
        command.register(subparsers, [common])
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    config = load_config(args.config)
    if args.jobs < 1:
        raise ConfigError(f"--jobs must be at least 1, got {args.jobs}")
    if args.seed is not None:
        if not 0 <= args.seed < 2**64:
            raise ConfigError(f"--seed must fit in 64 unsigned bits, got {args.seed}")
        config = config.model_copy(update={"seed": args.seed})
    return config


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(settings.log)
    try:
        config = resolve_config(args)
        if args.emit_effective_config:
            print(dump_config(config))
            return 0
        logger.info("Running %s (seed %d, %d jobs) into %s", args.command, config.seed, args.jobs, args.out)
        return args.handler(config, args.out, args.jobs)
    except (ConfigError, OracleCapExceeded, DomainError) as e:
        logger.error("%s", e)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

import argparse
from pathlib import Path
from typing import Protocol

from src.config import RunConfig

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3
EXIT_ORACLE_MISMATCH = 4


class Handler(Protocol):
    def __call__(self, config: RunConfig, out_dir: Path, jobs: int) -> int: ...


def add_command(
    subparsers: argparse._SubParsersAction,
    name: str,
    help_text: str,
    handler: Handler,
    parents: list[argparse.ArgumentParser],
) -> argparse.ArgumentParser:
    parser = subparsers.add_parser(name, help=help_text, description=help_text, parents=parents)
    parser.set_defaults(handler=handler)
    return parser

import argparse
from pathlib import Path

from src.commands import EXIT_OK, add_command
from src.config import RunConfig
from src.optimizer import quasiconcavity_probe
from src.reports import write_probe


def run(config: RunConfig, out_dir: Path, jobs: int) -> int:
    """Bordered-Hessian determinants of the FC utility along the probe grid."""
    points = quasiconcavity_probe(config.probe)
    write_probe(out_dir / "probe.csv", points)

    negative = [p for p in points if p.det_h < 0]
    if negative:
        print(
            f"det[H] < 0 at {len(negative)} of {len(points)} points "
            f"(first at P_fa={negative[0].pfa:.4g}): utility is not quasiconcave"
        )
    else:
        print(f"det[H] >= 0 at all {len(points)} points")
    return EXIT_OK


def register(subparsers: argparse._SubParsersAction, parents: list[argparse.ArgumentParser]) -> None:
    add_command(subparsers, "probe-hessian", "Bordered-Hessian quasiconcavity probe", run, parents)

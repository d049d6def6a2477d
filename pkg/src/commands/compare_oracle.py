import argparse
import logging
from pathlib import Path

from src.commands import EXIT_OK, EXIT_ORACLE_MISMATCH, add_command
from src.config import RunConfig, settings
from src.errors import OracleCapExceeded
from src.reports import aggregate, write_csv, write_models
from src.services import build_tasks, oracle_task, run_tasks

logger = logging.getLogger(__name__)

MISMATCH_RTOL = 1e-9

COLUMNS = [
    "sweep_value",
    "trial",
    "m_total",
    "joint_utility",
    "oracle_utility",
    "gap",
    "relative_gap",
    "identical_costs",
]
# Wall times live in their own file so the utility file stays reproducible
TIMING_COLUMNS = ["sweep_value", "trial", "m_total", "joint_time", "oracle_time"]


def run(config: RunConfig, out_dir: Path, jobs: int) -> int:
    """Joint design against exhaustive search on every instance."""
    tasks = build_tasks(config)
    largest = max(task.config.m_total for task in tasks)
    if largest > settings.oracle_cap:
        raise OracleCapExceeded(
            f"instances with {largest} SUs exceed the exhaustive-search cap of {settings.oracle_cap}"
        )

    rows = run_tasks(oracle_task, tasks, jobs)
    write_models(out_dir / "oracle.csv", "oracle", COLUMNS, rows)
    write_models(out_dir / "oracle_timing.csv", "oracle-timing", TIMING_COLUMNS, rows)
    columns, summary = aggregate(
        rows,
        {
            "joint_time": lambda r: r.joint_time,
            "oracle_time": lambda r: r.oracle_time,
        },
    )
    write_csv(out_dir / "oracle_timing_summary.csv", "oracle-timing-summary", columns, summary)

    mismatches = [r for r in rows if r.identical_costs and r.relative_gap > MISMATCH_RTOL]
    for row in mismatches:
        logger.error(
            "Sweep %s trial %d: joint %.12g vs exhaustive %.12g",
            row.sweep_value,
            row.trial,
            row.joint_utility,
            row.oracle_utility,
        )
    if mismatches:
        return EXIT_ORACLE_MISMATCH
    return EXIT_OK


def register(subparsers: argparse._SubParsersAction, parents: list[argparse.ArgumentParser]) -> None:
    add_command(subparsers, "compare-oracle", "Compare the joint design with exhaustive search", run, parents)

import argparse
import logging
from pathlib import Path

from src.commands import EXIT_INFEASIBLE, EXIT_OK, add_command
from src.config import RunConfig
from src.reports import aggregate, write_csv, write_models
from src.services import build_tasks, nonjoint_task, run_tasks

logger = logging.getLogger(__name__)

COLUMNS = [
    "sweep_value",
    "trial",
    "joint_utility",
    "nonjoint_utility",
    "nonjoint_constrained_utility",
    "joint_negative",
    "nonjoint_negative",
    "joint_feasible",
    "nonjoint_feasible",
]


def run(config: RunConfig, out_dir: Path, jobs: int) -> int:
    """Joint design against the two-stage baseline, with negative-utility counts."""
    rows = run_tasks(nonjoint_task, build_tasks(config), jobs)
    write_models(out_dir / "nonjoint.csv", "nonjoint", COLUMNS, rows)
    columns, summary = aggregate(
        rows,
        {
            "joint_utility": lambda r: r.joint_utility,
            "nonjoint_utility": lambda r: r.nonjoint_utility,
            "nonjoint_constrained_utility": lambda r: r.nonjoint_constrained_utility,
            "gap": lambda r: r.joint_utility - r.nonjoint_utility,
            "constrained_gap": lambda r: r.joint_utility - r.nonjoint_constrained_utility,
            "joint_negative": lambda r: float(r.joint_negative),
            "nonjoint_negative": lambda r: float(r.nonjoint_negative),
        },
    )
    write_csv(out_dir / "nonjoint_summary.csv", "nonjoint-summary", columns, summary)

    behind = sum(1 for r in rows if r.joint_utility < r.nonjoint_constrained_utility * (1 - 1e-9))
    if behind:
        logger.warning(
            "Joint design below the break-even-constrained baseline on %d of %d instances", behind, len(rows)
        )
    if not any(r.joint_feasible for r in rows):
        logger.error("Joint design infeasible on every instance")
        return EXIT_INFEASIBLE
    return EXIT_OK


def register(subparsers: argparse._SubParsersAction, parents: list[argparse.ArgumentParser]) -> None:
    add_command(
        subparsers, "compare-nonjoint", "Compare the joint design with the two-stage baseline", run, parents
    )

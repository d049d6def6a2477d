import argparse
import logging
from pathlib import Path

from src.commands import EXIT_INFEASIBLE, EXIT_OK, add_command
from src.config import RunConfig
from src.reports import aggregate, write_csv, write_models
from src.services import build_tasks, optimize_task, run_tasks

logger = logging.getLogger(__name__)

COLUMNS = ["sweep_value", "trial", "fc_utility", "chosen_pfa", "chosen_k", "n_selected", "feasible"]


def run(config: RunConfig, out_dir: Path, jobs: int) -> int:
    """Joint design over the sweep, one row per (sweep value, trial)."""
    rows = run_tasks(optimize_task, build_tasks(config), jobs)
    write_models(out_dir / "optimize.csv", "optimize", COLUMNS, rows)
    columns, summary = aggregate(
        rows,
        {
            "fc_utility": lambda r: r.fc_utility,
            "n_selected": lambda r: float(r.n_selected),
            "feasible": lambda r: float(r.feasible),
        },
    )
    write_csv(out_dir / "optimize_summary.csv", "optimize-summary", columns, summary)

    if not any(row.feasible for row in rows):
        logger.error("No feasible design on any instance")
        return EXIT_INFEASIBLE
    return EXIT_OK


def register(subparsers: argparse._SubParsersAction, parents: list[argparse.ArgumentParser]) -> None:
    add_command(subparsers, "optimize", "Joint sensing design, SU selection and time allocation", run, parents)

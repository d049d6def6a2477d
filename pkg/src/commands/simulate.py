import argparse
import logging
from pathlib import Path

from src.commands import EXIT_OK, add_command
from src.config import RunConfig
from src.reports import aggregate, group_by_sweep, per_su_fairness, write_csv, write_models
from src.services import build_tasks, run_tasks, simulate_task

logger = logging.getLogger(__name__)

COLUMNS = [
    "sweep_value",
    "trial",
    "mean_delay",
    "jain_index",
    "incomplete_batches",
    "per_su_mean_delay",
    "trace_path",
]


def run(config: RunConfig, out_dir: Path, jobs: int) -> int:
    """Multi-frame delay simulation; trial 0 of every sweep point keeps a trace log."""
    trace_dir = out_dir / "traces" if config.simulation.write_traces else None
    rows = run_tasks(simulate_task, build_tasks(config, trace_dir), jobs)
    write_models(out_dir / "simulate.csv", "simulate", COLUMNS, rows)

    columns, summary = aggregate(
        rows,
        {
            "delay": lambda r: r.mean_delay,
            "jain_index": lambda r: r.jain_index,
            "incomplete_batches": lambda r: float(r.incomplete_batches),
        },
    )
    fairness = {
        value: per_su_fairness([r.per_su_mean_delay for r in group]) for value, group in group_by_sweep(rows)
    }
    for record in summary:
        record["jain_of_mean_delays"] = fairness[record["sweep_value"]]
    write_csv(out_dir / "simulate_summary.csv", "simulate-summary", columns + ["jain_of_mean_delays"], summary)
    return EXIT_OK


def register(subparsers: argparse._SubParsersAction, parents: list[argparse.ArgumentParser]) -> None:
    add_command(subparsers, "simulate", "Monte-Carlo buffer and delay simulation", run, parents)

"""CSV emission. Every file starts with a schema row, then the header."""

import csv
import logging
from collections.abc import Callable, Iterable, Sequence
from pathlib import Path

from pydantic import BaseModel

from src.schemas import MonteCarloSummary, ProbePoint
from src.simkit import jain_index, monte_carlo_average

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1


def _cell(value: object) -> object:
    if value is None:
        return ""
    if isinstance(value, list):
        return ";".join("" if v is None else repr(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return value


def write_csv(path: Path, schema: str, columns: Sequence[str], rows: Iterable[dict]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["#schema", f"cogalloc.{schema}/{SCHEMA_VERSION}"])
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_cell(row.get(column)) for column in columns])
    logger.info("Wrote %s", path)
    return path


def write_models(path: Path, schema: str, columns: Sequence[str], rows: Iterable[BaseModel]) -> Path:
    return write_csv(path, schema, columns, (row.model_dump() for row in rows))


def summarize(values: Sequence[float]) -> MonteCarloSummary | None:
    if not values:
        return None
    return monte_carlo_average(lambda trial: values[trial], len(values))


def group_by_sweep[R: BaseModel](rows: Sequence[R]) -> list[tuple[float | None, list[R]]]:
    """Rows grouped by sweep value, in first-seen order."""
    groups: dict[float | None, list[R]] = {}
    for row in rows:
        groups.setdefault(row.sweep_value, []).append(row)
    return list(groups.items())


def aggregate[R: BaseModel](
    rows: Sequence[R], metrics: dict[str, Callable[[R], float | None]]
) -> tuple[list[str], list[dict]]:
    """Mean and standard error of each metric per sweep value; None samples are skipped."""
    columns = ["sweep_value", "trials"]
    for name in metrics:
        columns += [f"mean_{name}", f"stderr_{name}"]
    out = []
    for value, group in group_by_sweep(rows):
        record: dict = {"sweep_value": value, "trials": len(group)}
        for name, metric in metrics.items():
            summary = summarize([x for x in (metric(row) for row in group) if x is not None])
            record[f"mean_{name}"] = summary.mean if summary else None
            record[f"stderr_{name}"] = summary.stderr if summary else None
        out.append(record)
    return columns, out


def per_su_fairness(delays_by_trial: Sequence[Sequence[float | None]]) -> float | None:
    """Jain index of per-SU mean delays averaged over trials."""
    if not delays_by_trial:
        return None
    n_users = max(len(d) for d in delays_by_trial)
    means = []
    for i in range(n_users):
        samples = [d[i] for d in delays_by_trial if i < len(d) and d[i] is not None]
        if samples:
            means.append(sum(samples) / len(samples))
    if not means or not any(m > 0 for m in means):
        return None
    return jain_index(means)


def write_probe(path: Path, points: Sequence[ProbePoint]) -> Path:
    return write_models(path, "probe", ["pfa", "det_h", "det_ha"], points)

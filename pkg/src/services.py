"""Experiment orchestration: sweeps, per-trial instances and the worker pool."""

import logging
import math
from collections.abc import Callable
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from pydantic import BaseModel, ConfigDict, ValidationError

from src.config import RunConfig, SweepKey
from src.economics import rate_cache
from src.errors import ConfigError
from src.optimizer import count_negative_utility, exhaustive_oracle, joint_optimize, nonjoint_baseline
from src.schemas import (
    NonJointRow,
    OptimizeRow,
    OracleRow,
    SecondaryUser,
    SensingGeometry,
    SimulationRow,
    SystemParams,
    UtilityReport,
)
from src.simkit import SimulationSetup, SimulationStreams, Stream, draw_users, run_episode, write_trace_log

logger = logging.getLogger(__name__)


class Task(BaseModel):
    """One (sweep point, trial) work item."""

    model_config = ConfigDict(frozen=True)

    config: RunConfig
    sweep_value: float | None
    trial: int
    trace_path: str | None = None


def apply_sweep(config: RunConfig, key: SweepKey | None, value: float | None) -> RunConfig:
    """Copy of `config` with one swept parameter replaced, re-validated."""
    if key is None:
        return config
    data = config.model_dump()
    match key:
        case "zeta" | "p_h0" | "gamma_db":
            data["system"][key] = value
        case "m":
            if value != int(value) or value < 1:
                raise ConfigError(f"sweep m needs positive integers, got {value}")
            count = int(value)
            if data["users"] is not None:
                if count > len(data["users"]):
                    raise ConfigError(f"sweep m={count} exceeds the {len(data['users'])} listed users")
                data["users"] = data["users"][:count]
            data["population"]["count"] = count
        case "buffer_bits":
            if value != int(value):
                raise ConfigError(f"sweep buffer_bits needs integers, got {value}")
            data["population"]["buffer_bits"] = int(value)
            for user in data["users"] or []:
                user["buffer_bits"] = int(value)
    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        problems = [f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in e.errors()]
        raise ConfigError(f"sweep {key}={value} gives an invalid configuration", problems) from e


def build_tasks(config: RunConfig, trace_dir: Path | None = None) -> list[Task]:
    tasks = []
    for index, value in enumerate(config.experiment.points()):
        point = apply_sweep(config, config.experiment.sweep, value)
        for trial in range(config.trials):
            trace_path = None
            if trace_dir is not None and trial == 0:
                trace_path = str(trace_dir / f"point{index:03d}_trial0.ndjson")
            tasks.append(Task(config=point, sweep_value=value, trial=trial, trace_path=trace_path))
    return tasks


def run_tasks[T](fn: Callable[[Task], T], tasks: list[Task], jobs: int) -> list[T]:
    """Map `fn` over tasks; results keep task order whatever the pool size."""
    if jobs <= 1 or len(tasks) <= 1:
        return [fn(task) for task in tasks]
    logger.info("Running %d tasks on %d workers", len(tasks), jobs)
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))


def instance_users(config: RunConfig, trial: int) -> list[SecondaryUser]:
    """Listed users as-is, otherwise a population drawn from the trial's instance stream."""
    if config.users is not None:
        return list(config.users)
    rng = SimulationStreams(config.seed, trial).get(Stream.INSTANCE)
    return draw_users(config.population, rng)


def _context(config: RunConfig) -> tuple[SystemParams, SensingGeometry]:
    return config.system, config.system.geometry()


def _instance(task: Task) -> tuple[list[SecondaryUser], SystemParams, SensingGeometry]:
    """Users and radio context of one task; rates cached for earlier instances are dropped."""
    rate_cache.clear()
    params, geom = _context(task.config)
    return instance_users(task.config, task.trial), params, geom


def identical_costs(users: list[SecondaryUser]) -> bool:
    return len({(su.pay_rate, su.earn_rate) for su in users}) <= 1


def optimize_task(task: Task) -> OptimizeRow:
    users, params, geom = _instance(task)
    outcome = joint_optimize(users, geom, params, task.config.grid.to_grid())
    return OptimizeRow(
        sweep_value=task.sweep_value,
        trial=task.trial,
        fc_utility=outcome.fc_utility,
        chosen_pfa=outcome.best_design.pfa_local if outcome.best_design else None,
        chosen_k=outcome.best_design.k_threshold if outcome.best_design else None,
        n_selected=outcome.best_allocation.n_selected if outcome.feasible else 0,
        feasible=outcome.feasible,
        wall_time=outcome.wall_time,
    )


def oracle_task(task: Task) -> OracleRow:
    users, params, geom = _instance(task)
    grid = task.config.grid.to_grid()
    joint = joint_optimize(users, geom, params, grid)
    oracle = exhaustive_oracle(users, geom, params, grid)
    gap = oracle.fc_utility - joint.fc_utility
    scale = max(abs(oracle.fc_utility), abs(joint.fc_utility))
    return OracleRow(
        sweep_value=task.sweep_value,
        trial=task.trial,
        m_total=len(users),
        joint_utility=joint.fc_utility,
        oracle_utility=oracle.fc_utility,
        gap=gap,
        relative_gap=abs(gap) / scale if scale > 0 else 0.0,
        identical_costs=identical_costs(users),
        joint_time=joint.wall_time,
        oracle_time=oracle.wall_time,
    )


def nonjoint_task(task: Task) -> NonJointRow:
    users, params, geom = _instance(task)
    grid = task.config.grid.to_grid()
    joint = joint_optimize(users, geom, params, grid)
    nonjoint = nonjoint_baseline(users, geom, params, grid)
    return NonJointRow(
        sweep_value=task.sweep_value,
        trial=task.trial,
        joint_utility=joint.fc_utility,
        nonjoint_utility=nonjoint.fc_utility,
        nonjoint_constrained_utility=nonjoint.constrained_fc_utility,
        joint_negative=count_negative_utility(UtilityReport.from_allocation(joint.best_allocation)),
        nonjoint_negative=count_negative_utility(nonjoint.report),
        joint_feasible=joint.feasible,
        nonjoint_feasible=nonjoint.feasible,
    )


def simulation_setup(config: RunConfig) -> SimulationSetup:
    population = config.population
    if config.users is not None:
        population = population.model_copy(update={"count": len(config.users)})
    return SimulationSetup(
        params=config.system,
        grid=config.grid.to_grid(),
        traffic=config.traffic,
        population=population,
        simulation=config.simulation,
    )


def simulate_task(task: Task) -> SimulationRow:
    setup = simulation_setup(task.config)
    episode = run_episode(setup, task.config.seed, task.trial, keep_traces=task.trace_path is not None)
    if task.trace_path is not None:
        write_trace_log(task.trace_path, episode.traces)
    completed = [d for d in episode.stats.per_su_mean_delay if d is not None]
    return SimulationRow(
        sweep_value=task.sweep_value,
        trial=task.trial,
        mean_delay=math.fsum(completed) / len(completed) if completed else None,
        jain_index=episode.stats.jain_index,
        incomplete_batches=episode.stats.incomplete_batches,
        per_su_mean_delay=episode.stats.per_su_mean_delay,
        trace_path=task.trace_path,
    )

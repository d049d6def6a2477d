"""
Multi-frame Monte-Carlo simulation of the FC and its SUs.

Frame n covers [nT, (n+1)T). At its start the FC sees fresh SU-to-FC gains
and the current buffers, picks a design, SUs vote, and on an idle
declaration the selected SUs drain their buffers at the rate of the true
hypothesis. Batches landing during the frame are available from the next one.
"""

import logging
import math
from collections.abc import Callable, Sequence
from enum import IntEnum
from pathlib import Path

import numpy as np
from pydantic import BaseModel, ConfigDict

from src.config import PopulationSpec, SimulationSpec
from src.economics import rate_cache, rate_idle, rate_interfered
from src.errors import DomainError
from src.optimizer import joint_optimize
from src.schemas import (
    Batch,
    BufferState,
    DelayStats,
    DesignGrid,
    EpisodeResult,
    FrameTrace,
    MonteCarloSummary,
    SecondaryUser,
    SensingDesign,
    SensingGeometry,
    SimulationState,
    SystemParams,
    TrafficModel,
)
from src.sensing import local_pd

logger = logging.getLogger(__name__)

_TINY_GAIN = float(np.finfo(float).tiny)


# Sampling


def pareto_from_uniform(u: float | np.ndarray, shape: float, scale: float) -> float | np.ndarray:
    """Inverse Pareto CDF on u in (0, 1]; u = 1 maps to `scale`."""
    return scale * np.power(u, -1.0 / shape)


def exponential_from_uniform(u: float | np.ndarray, mean: float) -> float | np.ndarray:
    """Inverse exponential CDF on u in (0, 1]; u = 1 maps to 0."""
    return -mean * np.log(u)


def _open_uniform(rng: np.random.Generator, size: int | None) -> float | np.ndarray:
    # Generator.random is on [0, 1); flip it onto (0, 1]
    return 1.0 - rng.random(size)


def sample_pareto_idle(
    model: TrafficModel, rng: np.random.Generator, size: int | None = None
) -> float | np.ndarray:
    """Idle period before the next batch starts accumulating (seconds)."""
    return pareto_from_uniform(_open_uniform(rng, size), model.shape, model.scale)


def sample_exponential_gain(
    mean: float, rng: np.random.Generator, size: int | None = None
) -> float | np.ndarray:
    if mean <= 0:
        raise DomainError(f"gain mean must be positive, got {mean}")
    return exponential_from_uniform(_open_uniform(rng, size), mean)


class Stream(IntEnum):
    PU = 0
    CHANNEL = 1
    VOTE = 2
    TRAFFIC = 3
    SENSING = 4
    INSTANCE = 5


class SimulationStreams:
    """
    Independent PCG64 generators keyed by (trial, SU, purpose).

    Every stream is seeded from SeedSequence(seed, spawn_key=(trial, su, purpose)),
    so adding an SU or a draw in one stream never shifts another.
    """

    def __init__(self, seed: int, trial: int = 0):
        self.seed = seed
        self.trial = trial
        self.cache: dict[tuple[int, int], np.random.Generator] = {}

    def get(self, purpose: Stream, su_index: int = 0) -> np.random.Generator:
        key = (int(purpose), su_index)
        if key not in self.cache:
            sequence = np.random.SeedSequence(self.seed, spawn_key=(self.trial, su_index, int(purpose)))
            self.cache[key] = np.random.Generator(np.random.PCG64(sequence))
        return self.cache[key]


def draw_users(
    population: PopulationSpec,
    rng: np.random.Generator,
    buffers: Sequence[int] | None = None,
) -> list[SecondaryUser]:
    """SU population with exponential SU-to-FC gains."""
    gains = np.maximum(sample_exponential_gain(population.gain_mean, rng, population.count), _TINY_GAIN)
    return [
        SecondaryUser(
            id=i,
            gain_to_fc=float(gain),
            buffer_bits=population.buffer_bits if buffers is None else buffers[i],
            pay_rate=population.pay_rate,
            earn_rate=population.earn_rate,
        )
        for i, gain in enumerate(gains)
    ]


def draw_fc_decision(
    pu_active: bool,
    design: SensingDesign,
    geom: SensingGeometry,
    vote_rngs: Sequence[np.random.Generator],
) -> tuple[list[bool], bool]:
    """
    Independent one-bit votes from the selected SUs and the FC verdict.

    Returns (votes, busy) where busy is True when at least k SUs voted busy.
    """
    p_busy = local_pd(design.pfa_local, geom) if pu_active else design.pfa_local
    votes = [bool(rng.random() < p_busy) for rng in vote_rngs]
    return votes, sum(votes) >= design.k_threshold


# Frames


class SimulationSetup(BaseModel):
    """Fixed inputs of an episode."""

    model_config = ConfigDict(frozen=True)

    params: SystemParams
    grid: DesignGrid
    traffic: TrafficModel
    population: PopulationSpec
    simulation: SimulationSpec


def initial_state(setup: SimulationSetup, streams: SimulationStreams) -> SimulationState:
    buffers = []
    for i in range(setup.population.count):
        first = setup.simulation.initial_buffer_bits
        pending = [Batch(arrival_time=0.0, bits_remaining=first)] if first > 0 else []
        idle = float(sample_pareto_idle(setup.traffic, streams.get(Stream.TRAFFIC, i)))
        buffers.append(
            BufferState(
                bits=first,
                pending_batches=pending,
                next_arrival=idle + setup.traffic.accumulation_time,
            )
        )
    return SimulationState(buffers=buffers, delays=[[] for _ in buffers])


def _drain(buffer: BufferState, bits: int, frame_end: float, delays: list[float]) -> None:
    """Remove `bits` FIFO; every batch emptied completes at the end of the frame."""
    buffer.bits -= bits
    while bits > 0:
        head = buffer.pending_batches[0]
        taken = min(bits, head.bits_remaining)
        head.bits_remaining -= taken
        bits -= taken
        if head.bits_remaining == 0:
            buffer.pending_batches.pop(0)
            delays.append(frame_end - head.arrival_time)


def _accrue(
    buffer: BufferState, traffic: TrafficModel, rng: np.random.Generator, frame_end: float
) -> int:
    """Credit every batch that lands before `frame_end`."""
    arrived = 0
    while buffer.next_arrival < frame_end:
        if traffic.batch_bits > 0:
            buffer.pending_batches.append(
                Batch(arrival_time=buffer.next_arrival, bits_remaining=traffic.batch_bits)
            )
            buffer.bits += traffic.batch_bits
            arrived += traffic.batch_bits
        buffer.next_arrival += float(sample_pareto_idle(traffic, rng)) + traffic.accumulation_time
    return arrived


def step_frame(
    state: SimulationState, setup: SimulationSetup, streams: SimulationStreams
) -> FrameTrace:
    """Advance the state by one frame and return its trace record."""
    params = setup.params
    frame = state.frame_index
    frame_end = (frame + 1) * params.frame_duration
    m_total = len(state.buffers)

    population = setup.population
    users = [
        SecondaryUser(
            id=i,
            gain_to_fc=max(
                float(sample_exponential_gain(population.gain_mean, streams.get(Stream.CHANNEL, i))),
                _TINY_GAIN,
            ),
            buffer_bits=state.buffers[i].bits,
            pay_rate=population.pay_rate,
            earn_rate=population.earn_rate,
        )
        for i in range(m_total)
    ]
    geom = params.geometry()
    if setup.simulation.resample_sensing_gain:
        gain = float(sample_exponential_gain(setup.simulation.sensing_gain_mean, streams.get(Stream.SENSING)))
        geom = SensingGeometry(
            gamma=max(geom.gamma * gain, _TINY_GAIN), n_samples=geom.n_samples, noise_var=geom.noise_var
        )
    pu_active = bool(streams.get(Stream.PU).random() < 1.0 - params.p_h0)

    outcome = joint_optimize(users, geom, params, setup.grid)
    allocation = outcome.best_allocation
    selected = allocation.selected_ids if outcome.feasible else []

    bits_out = [0] * m_total
    votes: list[bool] = []
    # No selection means no access this frame
    busy = True
    if selected:
        votes, busy = draw_fc_decision(
            pu_active, outcome.best_design, geom, [streams.get(Stream.VOTE, i) for i in selected]
        )
    if not busy:
        for i, (on, t) in enumerate(zip(allocation.active, allocation.times)):
            if not on:
                continue
            rate = rate_interfered(users[i], params) if pu_active else rate_idle(users[i], params)
            bits_out[i] = min(state.buffers[i].bits, math.floor(rate * t))
            _drain(state.buffers[i], bits_out[i], frame_end, state.delays[i])

    bits_in = [
        _accrue(state.buffers[i], setup.traffic, streams.get(Stream.TRAFFIC, i), frame_end)
        for i in range(m_total)
    ]
    state.frame_index += 1
    # Gains are fresh every frame so cached rates are never hit again
    rate_cache.clear()

    return FrameTrace(
        frame_index=frame,
        pu_active=pu_active,
        local_votes=votes,
        fc_decision=busy,
        selected_set=selected,
        design=outcome.best_design,
        allocation=allocation if outcome.feasible else None,
        bits_out=bits_out,
        bits_in=bits_in,
        buffer_bits=[b.bits for b in state.buffers],
        realized_rate_hypothesis=1 if pu_active else 0,
    )


def jain_index(values: Sequence[float]) -> float:
    """(sum x)^2 / (n * sum x^2), in [1/n, 1]."""
    x = np.asarray(values, dtype=float)
    if x.size == 0 or np.any(x < 0) or not np.any(x > 0):
        raise DomainError("Jain index needs non-negative values with at least one positive")
    return float(x.sum() ** 2 / (x.size * np.square(x).sum()))


def delay_stats(state: SimulationState) -> DelayStats:
    means = [math.fsum(d) / len(d) if d else None for d in state.delays]
    completed = [m for m in means if m is not None]
    return DelayStats(
        per_su_mean_delay=means,
        completed_batches=[len(d) for d in state.delays],
        incomplete_batches=sum(len(b.pending_batches) for b in state.buffers),
        jain_index=jain_index(completed) if completed and any(m > 0 for m in completed) else None,
    )


def run_episode(
    setup: SimulationSetup, seed: int, trial: int = 0, keep_traces: bool = True
) -> EpisodeResult:
    """Simulate `n_frames` frames; identical (setup, seed, trial) gives identical traces."""
    streams = SimulationStreams(seed, trial)
    state = initial_state(setup, streams)
    traces = []
    for _ in range(setup.simulation.n_frames):
        trace = step_frame(state, setup, streams)
        if keep_traces:
            traces.append(trace)

    stats = delay_stats(state)
    if stats.incomplete_batches:
        logger.debug("Trial %d: %d batches still queued at the horizon", trial, stats.incomplete_batches)
    return EpisodeResult(stats=stats, traces=traces)


def monte_carlo_average(
    metric: Callable[[int], float], n_trials: int
) -> MonteCarloSummary:
    """
    Mean and standard error of `metric(trial)` over trials 0..n_trials-1.

    The metric derives its randomness from the trial index, which keeps the
    summary reproducible.
    """
    if n_trials < 1:
        raise DomainError(f"n_trials must be at least 1, got {n_trials}")
    values = np.array([metric(trial) for trial in range(n_trials)], dtype=float)
    stderr = float(values.std(ddof=1) / math.sqrt(n_trials)) if n_trials > 1 else 0.0
    return MonteCarloSummary(mean=math.fsum(values) / n_trials, stderr=stderr, n_trials=n_trials)


def write_trace_log(path: str | Path, traces: Sequence[FrameTrace]) -> Path:
    """One JSON object per frame, schema `cogalloc.frame/1`."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as f:
        for trace in traces:
            f.write(trace.model_dump_json())
            f.write("\n")
    return path

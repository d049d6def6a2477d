import json
import os
from pathlib import Path
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from src.errors import ConfigError
from src.schemas import DesignGrid, ProbeParams, SecondaryUser, SystemParams, TrafficModel

ENV_FILE = "infrastructure/env/cogalloc.env"


class Settings(BaseSettings):
    """Process settings."""

    # Logging
    log: str = "WARNING"

    # Execution
    jobs: int = 1
    out_dir: str = "results"
    seed: int = 2024

    # Exhaustive search refuses instances with more SUs than this
    oracle_cap: int = 12

    model_config = SettingsConfigDict(
        env_prefix="COGALLOC_",
        env_file=ENV_FILE if os.path.exists(ENV_FILE) else None,
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )


settings = Settings()


# Run configuration


class PopulationSpec(BaseModel):
    """Random SU population: exponential gains with mean `gain_mean`, shared prices and buffers."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    count: int = Field(default=5, ge=1)
    gain_mean: float = Field(default=1.0, gt=0)
    pay_rate: float = Field(default=0.1, ge=0)
    earn_rate: float = Field(default=10.0, ge=0)
    buffer_bits: int = Field(default=1000, ge=0)


class GridSpec(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    levels: int = Field(default=10, ge=2)
    pfa_values: list[float] | None = None
    k_values: list[int] | None = None

    def to_grid(self) -> DesignGrid:
        if self.pfa_values is not None:
            return DesignGrid(pfa_values=self.pfa_values, k_values=self.k_values)
        return DesignGrid.uniform(self.levels, self.k_values)


SweepKey = Literal["zeta", "p_h0", "m", "gamma_db", "buffer_bits"]


class ExperimentSpec(BaseModel):
    """One-dimensional sweep; with no sweep key the base configuration runs once."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    sweep: SweepKey | None = None
    values: list[float] = []

    @model_validator(mode="after")
    def check_values(self) -> "ExperimentSpec":
        if self.sweep is not None and not self.values:
            raise ValueError(f"sweep '{self.sweep}' needs a non-empty list of values")
        return self

    def points(self) -> list[float | None]:
        return list(self.values) if self.sweep is not None else [None]


class SimulationSpec(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    n_frames: int = Field(default=1000, ge=1)
    initial_buffer_bits: int = Field(default=10, ge=0)
    sensing_gain_mean: float = Field(default=1.0, gt=0)
    resample_sensing_gain: bool = False
    write_traces: bool = True


class RunConfig(BaseModel):
    """Everything a subcommand needs. Omitted sections take the model defaults."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    system: SystemParams = SystemParams()
    users: list[SecondaryUser] | None = None
    population: PopulationSpec = PopulationSpec()
    grid: GridSpec = GridSpec()
    traffic: TrafficModel = TrafficModel()
    experiment: ExperimentSpec = ExperimentSpec()
    simulation: SimulationSpec = SimulationSpec()
    probe: ProbeParams = ProbeParams()
    seed: int = Field(default_factory=lambda: settings.seed, ge=0, lt=2**64)
    trials: int = Field(default=1, ge=1)

    @model_validator(mode="after")
    def check_users(self) -> "RunConfig":
        if self.users is not None:
            if not self.users:
                raise ValueError("users must not be an empty list")
            ids = [su.id for su in self.users]
            if len(set(ids)) != len(ids):
                raise ValueError("SU ids must be unique")
        return self

    @property
    def m_total(self) -> int:
        return len(self.users) if self.users is not None else self.population.count


def load_config(path: str | Path | None) -> RunConfig:
    """Parse a JSON run configuration. No path means all defaults."""
    if path is None:
        return RunConfig()
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as e:
        raise ConfigError(f"config file not found: {path}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: line {e.lineno} column {e.colno}: {e.msg}") from e
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")

    try:
        return RunConfig.model_validate(raw)
    except ValidationError as e:
        problems = [
            f"{'.'.join(str(part) for part in err['loc']) or '<root>'}: {err['msg']}"
            for err in e.errors()
        ]
        raise ConfigError(f"{path}: invalid configuration", problems) from e


def dump_config(config: RunConfig) -> str:
    """Fully defaulted configuration as JSON; `load_config` reads it back unchanged."""
    return config.model_dump_json(indent=2)

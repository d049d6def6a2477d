from enum import Enum

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from src.utils import db_to_linear, dbm_to_watts, noise_power_dbm


# Sensing


class SensingGeometry(BaseModel):
    """Sensing conditions shared by every SU: linear SNR, sample count, noise power."""

    model_config = ConfigDict(frozen=True)

    gamma: float = Field(gt=0)
    n_samples: int = Field(ge=1)
    noise_var: float = Field(default=1.0, gt=0)

    @classmethod
    def from_db(cls, gamma_db: float, n_samples: int, noise_var: float = 1.0) -> "SensingGeometry":
        return cls(gamma=db_to_linear(gamma_db), n_samples=n_samples, noise_var=noise_var)


class SensingDesign(BaseModel):
    """Operating point: local false-alarm probability and FC vote threshold."""

    model_config = ConfigDict(frozen=True)

    pfa_local: float = Field(gt=0, lt=1)
    k_threshold: int = Field(ge=1)


# Economics


class SystemParams(BaseModel):
    """Radio, economic and frame constants. Defaults are the reference operating point."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    n_samples: int = Field(default=40, ge=1)
    sample_interval: float = Field(default=1.0 / 6e6, gt=0)
    frame_duration: float = Field(default=1e-3, gt=0)
    tau2: float = Field(default=1e-5, gt=0)
    tau5: float = Field(default=1e-5, gt=0)
    tau_r: float = Field(default=5e-6, gt=0)
    tau_r_prime: float = Field(default=5e-6, gt=0)
    p_st_dbm: float = 23.0
    p_pt_dbm: float = 43.0
    bandwidth: float = Field(default=15e3, gt=0)
    noise_density_dbm_hz: float = -174.0
    sense_cost: float = Field(default=1e-4, gt=0)
    report_cost: float = Field(default=1e-3, gt=0)
    p_h0: float = Field(default=0.8, gt=0, lt=1)
    zeta: float = Field(default=0.7, gt=0, lt=1)
    gamma_db: float = -7.0
    noise_var: float = Field(default=1.0, gt=0)
    # Listed with the radio constants but used by no formula; accepted and ignored.
    bit_rate: float = Field(default=250e3, gt=0)

    @model_validator(mode="after")
    def check_usable_time(self) -> "SystemParams":
        overhead = self.tau2 + self.n_samples * self.sample_interval + self.tau5
        if self.frame_duration <= overhead:
            raise ValueError(
                f"frame_duration={self.frame_duration} leaves no usable time "
                f"(fixed overhead {overhead})"
            )
        return self

    @property
    def p_st(self) -> float:
        return dbm_to_watts(self.p_st_dbm)

    @property
    def p_pt(self) -> float:
        return dbm_to_watts(self.p_pt_dbm)

    @property
    def noise_power(self) -> float:
        return dbm_to_watts(noise_power_dbm(self.noise_density_dbm_hz, self.bandwidth))

    @property
    def sensing_duration(self) -> float:
        return self.n_samples * self.sample_interval

    def geometry(self) -> SensingGeometry:
        return SensingGeometry.from_db(self.gamma_db, self.n_samples, self.noise_var)


class SecondaryUser(BaseModel):
    """An SU as seen by the FC at the start of a frame."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    id: int
    gain_to_fc: float = Field(gt=0)
    buffer_bits: int = Field(default=1000, ge=0)
    pay_rate: float = Field(default=0.1, ge=0)
    earn_rate: float = Field(default=10.0, ge=0)

    @property
    def never_profitable(self) -> bool:
        return self.earn_rate <= self.pay_rate


class TimeBounds(BaseModel):
    model_config = ConfigDict(frozen=True)

    lower: float = Field(ge=0)
    upper: float = Field(ge=0)


# Allocation


class CaseLabel(str, Enum):
    """Time regime of a candidate set."""

    CASE1 = "case1"
    CASE2 = "case2"
    CASE3 = "case3"


class AllocationResult(BaseModel):
    """Activity and time vectors for one sensing design, aligned with `user_ids`."""

    model_config = ConfigDict(frozen=True)

    user_ids: list[int]
    active: list[bool]
    times: list[float]
    rates: list[float]
    fc_utility: float
    su_utilities: list[float]
    case: CaseLabel | None = None
    feasible: bool
    design: SensingDesign | None = None

    @property
    def selected_ids(self) -> list[int]:
        return [uid for uid, on in zip(self.user_ids, self.active) if on]

    @property
    def n_selected(self) -> int:
        return sum(self.active)


# Optimization


class DesignGrid(BaseModel):
    """Grid of (P_fa, k) operating points searched by the joint optimizer."""

    model_config = ConfigDict(frozen=True)

    pfa_values: list[float] = Field(min_length=1)
    k_values: list[int] | None = None

    @field_validator("pfa_values")
    @classmethod
    def check_pfa_values(cls, values: list[float]) -> list[float]:
        for value in values:
            if not 0.0 < value < 1.0:
                raise ValueError(f"pfa value {value} outside (0, 1)")
        for lo, hi in zip(values, values[1:]):
            if hi <= lo:
                raise ValueError("pfa values must be strictly increasing")
        return values

    @field_validator("k_values")
    @classmethod
    def check_k_values(cls, values: list[int] | None) -> list[int] | None:
        if values is not None and (not values or min(values) < 1):
            raise ValueError("k values must be a non-empty list of integers >= 1")
        return values

    @classmethod
    def uniform(cls, levels: int = 10, k_values: list[int] | None = None) -> "DesignGrid":
        """Grid {i/levels} for i = 1..levels-1."""
        return cls(pfa_values=[i / levels for i in range(1, levels)], k_values=k_values)

    def k_range(self, m_total: int) -> list[int]:
        if self.k_values is None:
            return list(range(1, m_total + 1))
        return sorted(k for k in set(self.k_values) if k <= m_total)

    def designs(self, m_total: int) -> list[SensingDesign]:
        return [
            SensingDesign(pfa_local=pfa, k_threshold=k)
            for k in self.k_range(m_total)
            for pfa in self.pfa_values
        ]


class SurfacePoint(BaseModel):
    model_config = ConfigDict(frozen=True)

    pfa: float
    k: int
    fc_utility: float
    feasible: bool


class UtilityReport(BaseModel):
    """Per-SU utilities after allocation."""

    model_config = ConfigDict(frozen=True)

    user_ids: list[int]
    utilities: list[float]

    @classmethod
    def from_allocation(cls, allocation: AllocationResult | None) -> "UtilityReport":
        if allocation is None:
            return cls(user_ids=[], utilities=[])
        return cls(user_ids=allocation.user_ids, utilities=allocation.su_utilities)


class OptimizationOutcome(BaseModel):
    best_design: SensingDesign | None = None
    best_allocation: AllocationResult | None = None
    utility_surface: list[SurfacePoint] | None = None
    wall_time: float = 0.0

    @property
    def feasible(self) -> bool:
        return self.best_allocation is not None and self.best_allocation.feasible

    @property
    def fc_utility(self) -> float:
        return self.best_allocation.fc_utility if self.feasible else 0.0


class NonJointOutcome(OptimizationOutcome):
    report: UtilityReport
    constrained_allocation: AllocationResult | None = None

    @property
    def constrained_fc_utility(self) -> float:
        """FC utility of the stage-1 choice when every active SU is held at break-even or better."""
        allocation = self.constrained_allocation
        return allocation.fc_utility if allocation is not None and allocation.feasible else 0.0


class ProbeParams(BaseModel):
    """Worked example used to show the FC utility is not quasiconcave in (P_fa, k)."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    m_total: int = 5
    k_threshold: float = 5.0
    p_h0: float = Field(default=0.6, gt=0, lt=1)
    gamma_db: float = -7.5
    n_samples: int = 40
    r0: list[float] = [7.4, 8.0, 8.2, 0.2, 9.5]
    r1: list[float] = [2.3, 3.5, 2.7, 0.02, 3.3]
    pay_time: float = 0.1
    pfa_values: list[float] | None = None

    @model_validator(mode="after")
    def check_lengths(self) -> "ProbeParams":
        if len(self.r0) != self.m_total or len(self.r1) != self.m_total:
            raise ValueError("r0 and r1 must list one rate per SU")
        return self


class ProbePoint(BaseModel):
    model_config = ConfigDict(frozen=True)

    pfa: float
    det_h: float
    det_ha: float


# Simulation


class TrafficModel(BaseModel):
    """Pareto idle periods followed by a fixed-size batch after accumulation time."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    shape: float = Field(default=1.0, gt=0)
    scale: float = Field(default=7e-3, gt=0)
    batch_bits: int = Field(default=10, ge=0)
    accumulation_time: float = Field(default=1e-3, ge=0)


class Batch(BaseModel):
    arrival_time: float
    bits_remaining: int


class BufferState(BaseModel):
    """FIFO buffer of one SU."""

    bits: int = 0
    pending_batches: list[Batch] = []
    next_arrival: float = 0.0


class FrameTrace(BaseModel):
    schema_version: str = "cogalloc.frame/1"
    frame_index: int
    pu_active: bool
    local_votes: list[bool]
    fc_decision: bool
    selected_set: list[int]
    design: SensingDesign | None = None
    allocation: AllocationResult | None = None
    bits_out: list[int]
    bits_in: list[int]
    buffer_bits: list[int]
    realized_rate_hypothesis: int


class DelayStats(BaseModel):
    per_su_mean_delay: list[float | None]
    completed_batches: list[int]
    incomplete_batches: int
    jain_index: float | None = None


class EpisodeResult(BaseModel):
    stats: DelayStats
    traces: list[FrameTrace]


class MonteCarloSummary(BaseModel):
    model_config = ConfigDict(frozen=True)

    mean: float
    stderr: float
    n_trials: int


class SimulationState(BaseModel):
    """Per-SU buffers and completed batch delays, carried from frame to frame."""

    frame_index: int = 0
    buffers: list[BufferState]
    delays: list[list[float]]


# Experiment rows


class OptimizeRow(BaseModel):
    sweep_value: float | None
    trial: int
    fc_utility: float
    chosen_pfa: float | None
    chosen_k: int | None
    n_selected: int
    feasible: bool
    wall_time: float = 0.0


class OracleRow(BaseModel):
    sweep_value: float | None
    trial: int
    m_total: int
    joint_utility: float
    oracle_utility: float
    gap: float
    relative_gap: float
    identical_costs: bool
    joint_time: float = 0.0
    oracle_time: float = 0.0


class NonJointRow(BaseModel):
    sweep_value: float | None
    trial: int
    joint_utility: float
    nonjoint_utility: float
    nonjoint_constrained_utility: float
    joint_negative: int
    nonjoint_negative: int
    joint_feasible: bool
    nonjoint_feasible: bool


class SimulationRow(BaseModel):
    sweep_value: float | None
    trial: int
    mean_delay: float | None
    jain_index: float | None
    incomplete_batches: int
    per_su_mean_delay: list[float | None]
    trace_path: str | None = None

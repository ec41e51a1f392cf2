import math
from typing import Any, Dict, List, Literal, Optional
from enum import Enum
from pydantic import BaseModel, Field, field_validator, model_validator

# --- Enums ---

class SystemKind(str, Enum):
    NSE = "nse"
    LORENZ63 = "lorenz63"
    LORENZ96 = "lorenz96"

class ObservationKind(str, Enum):
    MODAL = "modal"
    VOLUME = "volume"

class FilterKind(str, Enum):
    THREEDVAR = "3dvar"
    ENKF = "enkf"
    ENSRKF = "ensrkf"
    NUDGING = "nudging"

class BoundKind(str, Enum):
    THREEDVAR = "3dvar"
    THREEDVAR_LOCALIZED = "3dvar_localized"
    ENKF = "enkf"
    ENSRKF = "ensrkf"
    NUDGING = "nudging"

class CovarianceKind(str, Enum):
    ZERO = "zero"
    IDENTITY = "identity"
    PROJECTION = "projection"
    DIAGONAL_POWER = "diagonal_power"
    EIGEN_BALANCED = "eigen_balanced"

class RunStatus(str, Enum):
    SUCCESS = "SUCCESS"
    BOUND_NOT_GUARANTEED = "BOUND_NOT_GUARANTEED"
    BOUND_VIOLATED = "BOUND_VIOLATED"
    FILTER_DIVERGED = "FILTER_DIVERGED"
    PARTIAL_FAILURE = "PARTIAL_FAILURE"
    SYSTEM_ERROR = "SYSTEM_ERROR"

EXIT_CODES: Dict[RunStatus, int] = {
    RunStatus.SUCCESS: 0,
    RunStatus.BOUND_VIOLATED: 0,
    RunStatus.FILTER_DIVERGED: 0,
    RunStatus.BOUND_NOT_GUARANTEED: 2,
    RunStatus.PARTIAL_FAILURE: 4,
    RunStatus.SYSTEM_ERROR: 4,
}
IDENTITY_FAILURE_EXIT = 3

# --- Experiment configuration ---

class SystemSpec(BaseModel):
    kind: SystemKind = SystemKind.NSE
    # Navier-Stokes
    n: int = Field(64, ge=8)
    domain_size: float = Field(2 * math.pi, gt=0)
    nu: float = Field(0.05, gt=0)
    grashof: float = Field(20.0, ge=0)
    forcing_shell: int = Field(4, ge=1)
    # Lorenz 63
    alpha: float = Field(10.0, gt=0)
    beta: float = Field(1.0, gt=0)
    gamma: float = Field(8.0 / 3.0, gt=0)
    rho: float = 28.0
    # Lorenz 96
    dimension: int = Field(40, ge=4)
    forcing: float = 8.0
    # stochastic truth (Lorenz only)
    noise_additive: float = Field(0.0, ge=0)
    noise_multiplicative: float = Field(0.0, ge=0)

    @field_validator("n")
    @classmethod
    def even_grid(cls, v: int) -> int:
        if v % 2:
            raise ValueError("grid size must be even")
        return v

    @model_validator(mode="after")
    def deterministic_nse(self):
        if self.kind == SystemKind.NSE and (self.noise_additive or self.noise_multiplicative):
            raise ValueError("stochastic truth is only supported for Lorenz systems")
        return self

class ObservationSpec(BaseModel):
    kind: ObservationKind = ObservationKind.MODAL
    # modal NSE: every mode with |k|^2 <= max_wavenumber_sq
    max_wavenumber_sq: float = Field(8.0, gt=0)
    # modal Lorenz: coordinates offset, offset+stride, ...
    stride: int = Field(1, ge=1)
    offset: int = Field(0, ge=0)
    # volume: M x M cells
    cells: int = Field(8, ge=1)
    sigma: float = Field(0.1, ge=0)

class CovarianceSpec(BaseModel):
    kind: CovarianceKind = CovarianceKind.PROJECTION
    beta: float = Field(1.0, ge=0)
    power: float = Field(1.0, ge=0)

class InflationSpec(BaseModel):
    additive: float = Field(0.0, ge=0)
    multiplicative: float = Field(1.0, ge=1)
    localize: bool = False
    cmu_scaling: bool = False

class FilterSpec(BaseModel):
    kind: FilterKind = FilterKind.THREEDVAR
    ensemble_size: int = Field(10, ge=1)
    covariance: CovarianceSpec = Field(default_factory=CovarianceSpec)
    inflation: InflationSpec = Field(default_factory=InflationSpec)
    nudging_mu: float = Field(1.0, ge=0)
    init_offset: float = Field(1.0, ge=0)
    init_spread: float = Field(0.5, ge=0)

class TimeSpec(BaseModel):
    dt: float = Field(0.01, gt=0)
    horizon: float = Field(10.0, gt=0)
    spin_up: float = Field(5.0, ge=0)
    record_every: int = Field(1, ge=1)

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.dt))

class SeedSpec(BaseModel):
    truth: int = Field(0, ge=0)
    obs_noise: int = Field(1, ge=0)
    filter_noise: int = Field(2, ge=0)
    ensemble_init: int = Field(3, ge=0)

class ExperimentConfig(BaseModel):
    label: str = "experiment"
    system: SystemSpec = Field(default_factory=SystemSpec)
    observation: ObservationSpec = Field(default_factory=ObservationSpec)
    filter: FilterSpec = Field(default_factory=FilterSpec)
    time: TimeSpec = Field(default_factory=TimeSpec)
    seeds: SeedSpec = Field(default_factory=SeedSpec)
    replicas: int = Field(16, ge=1)
    threads: int = Field(4, ge=1)
    output_dir: str = "runs"
    divergence_factor: float = Field(1e3, gt=1)
    calibration_corpus: int = Field(500, ge=500)

    @model_validator(mode="after")
    def consistent(self):
        if self.filter.kind != FilterKind.NUDGING and self.observation.sigma <= 0:
            raise ValueError("sigma must be positive for 3DVar, EnKF and EnSRKF")
        if self.filter.kind in (FilterKind.ENKF, FilterKind.ENSRKF) and self.filter.ensemble_size < 2:
            raise ValueError("ensemble filters need at least two members")
        if self.observation.kind == ObservationKind.VOLUME:
            if self.system.kind != SystemKind.NSE:
                raise ValueError("volume observations are defined for the Navier-Stokes system only")
            if self.system.n % self.observation.cells:
                raise ValueError("grid size must be divisible by the number of cells per side")
        return self

# --- Bounds ---

class BoundInputs(BaseModel):
    nu: float = Field(..., gt=0)
    lambda_1: float = Field(..., gt=0)
    grashof: float = Field(..., ge=0)
    sigma: float = Field(..., ge=0)
    h: float = Field(..., ge=0)
    q: int = Field(..., ge=0)
    beta: Optional[float] = None
    mu: Optional[float] = None
    c1: Optional[float] = None
    c2: Optional[float] = None
    c_L: Optional[float] = None
    epsilon: Optional[float] = None
    M_u: Optional[float] = None
    cross_norm: float = Field(0.0, ge=0)
    trace_CIhC: Optional[float] = None
    horizon: Optional[float] = None

class BoundReport(BaseModel):
    kind: BoundKind
    inputs: BoundInputs
    epsilon: float
    gamma: float
    kappa: float
    bound: Optional[float] = None
    enstrophy_bound: Optional[float] = None
    flags: Dict[str, bool] = Field(default_factory=dict)
    guaranteed: bool
    notes: List[str] = Field(default_factory=list)

    def table(self) -> str:
        rows = [("kind", self.kind.value)]
        rows += [(k, v) for k, v in self.inputs.model_dump().items() if v is not None]
        rows += [("epsilon", self.epsilon), ("gamma", self.gamma), ("kappa", self.kappa),
                 ("bound", self.bound), ("enstrophy_bound", self.enstrophy_bound)]
        rows += [(f"flag:{k}", v) for k, v in self.flags.items()]
        rows.append(("guaranteed", self.guaranteed))
        width = max(len(str(r[0])) for r in rows)
        return "\n".join(f"{str(k).ljust(width)}  {v}" for k, v in rows)

# --- Run artifacts ---

class CalibrationResult(BaseModel):
    c1: float
    c2: float
    c_L: float
    corpus_size: int
    corpus_slope: float
    seed: int
    h: float
    tail_resolution: Optional[float] = None

class SpinUpSummary(BaseModel):
    grashof: float
    t0: float
    M_u: float
    max_energy_ratio: float
    max_enstrophy_ratio: float
    max_norm_Au: float
    energy_balance_residual: Optional[float] = None
    energy_envelope_ratio: Optional[float] = None
    time_integral_ratio: Optional[float] = None

class ReplicaFault(BaseModel):
    fault_type: Literal["DIVERGED", "STEP_REJECTED", "ANALYSIS_ERROR", "SYSTEM_ERROR"]
    replica: int
    step: Optional[int] = None
    message: str

class ReplicaResult(BaseModel):
    replica: int
    steps_completed: int
    tail_mean: Optional[float] = None
    limsup: Optional[float] = None
    fault: Optional[ReplicaFault] = None

class EstimateSummary(BaseModel):
    limsup: Optional[float] = None
    tail_mean: Optional[float] = None
    standard_error: Optional[float] = None
    theoretical_bound: Optional[float] = None
    passed: Optional[bool] = None
    enstrophy_average: Optional[float] = None
    enstrophy_bound: Optional[float] = None

class RunSummary(BaseModel):
    run_id: str
    config_hash: str
    label: str
    status: RunStatus
    exit_code: int
    system: SystemKind
    filter: FilterKind
    guaranteed: bool
    estimate: EstimateSummary
    bound_report: Optional[BoundReport] = None
    spin_up: Optional[SpinUpSummary] = None
    calibration: Optional[CalibrationResult] = None
    replicas: List[ReplicaResult] = Field(default_factory=list)
    meta: Dict[str, Any] = Field(default_factory=dict)

class IdentityCheck(BaseModel):
    name: str
    residual: float
    tolerance: float
    passed: bool

class IdentitySuiteReport(BaseModel):
    seed: int
    checks: List[IdentityCheck]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

class ConsistencyReport(BaseModel):
    kind: FilterKind
    dts: List[float]
    sup_differences: List[float]
    order: float
    monotone: bool
    passed: bool

class OUBoundReport(BaseModel):
    estimate: float
    standard_error: float
    bound: float
    expected: float
    alpha: float
    horizon: Optional[float] = None
    n_samples: int
    passed: bool

class StabilityReport(BaseModel):
    tail_mean: float
    limsup: Optional[float] = None
    bound: Optional[float] = None
    contraction_rate: float
    passed: Optional[bool] = None

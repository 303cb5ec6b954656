import math
from typing import Dict, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

Precision = Literal["single", "double"]
Pipeline = Literal["muon", "muon_plus", "turbo"]
PreconditionerKind = Literal["frobenius", "aol"]
Distribution = Literal["normal", "stable"]

PIPELINES: Tuple[str, ...] = ("muon", "muon_plus", "turbo")


class ArrayModel(BaseModel):
    """Base for models carrying numpy arrays"""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)


# ---------------------------------------------------------------- linalg_core

class SvdResult(ArrayModel):
    u: np.ndarray
    sigma: np.ndarray
    vt: np.ndarray

    @field_validator("sigma")
    @classmethod
    def _sorted_non_negative(cls, v: np.ndarray) -> np.ndarray:
        if v.size and (np.any(v < 0) or np.any(np.diff(v) > 0)):
            raise ValueError("singular values must be non-negative and sorted descending")
        return v


class PolarFactor(ArrayModel):
    q: np.ndarray
    rank: int
    rank_deficient: bool = False


# ---------------------------------------------------------------- sampling

class SampleSpec(BaseModel):
    rows: int = Field(gt=0)
    cols: int = Field(gt=0)
    distribution: Distribution = "normal"
    alpha: float = 2.0
    beta: float = 0.0
    seed: int = 0
    batch: int = Field(default=1, ge=1)

    @field_validator("alpha")
    @classmethod
    def _alpha_range(cls, v: float) -> float:
        if not 0 < v <= 2:
            raise ValueError(f"alpha must lie in (0, 2], got {v}")
        return v

    @field_validator("beta")
    @classmethod
    def _beta_range(cls, v: float) -> float:
        if not -1 <= v <= 1:
            raise ValueError(f"beta must lie in [-1, 1], got {v}")
        return v

    @field_validator("seed")
    @classmethod
    def _seed_64bit(cls, v: int) -> int:
        if not 0 <= v < 2**64:
            raise ValueError("seed must be a non-negative 64-bit integer")
        return v

    @property
    def label(self) -> str:
        if self.distribution == "normal":
            return "normal"
        return f"stable(alpha={self.alpha:g},beta={self.beta:g})"


class DistributionSpec(BaseModel):
    """The distribution part of a SampleSpec, as listed in sweep configs"""

    distribution: Distribution = "normal"
    alpha: float = 2.0
    beta: float = 0.0

    @classmethod
    def parse(cls, text: str) -> "DistributionSpec":
        """Parse `normal`, `stable:<alpha>` or `stable:<alpha>:<beta>`"""
        parts = [p.strip() for p in text.strip().split(":")]
        if parts[0] == "normal" and len(parts) == 1:
            return cls(distribution="normal")
        if parts[0] == "stable" and len(parts) in (2, 3):
            beta = float(parts[2]) if len(parts) == 3 else 0.0
            return cls(distribution="stable", alpha=float(parts[1]), beta=beta)
        raise ValueError(f"unrecognised distribution '{text}'")

    def to_sample_spec(self, rows: int, cols: int, seed: int, batch: int) -> SampleSpec:
        return SampleSpec(rows=rows, cols=cols, distribution=self.distribution,
                          alpha=self.alpha, beta=self.beta, seed=seed, batch=batch)

    @property
    def name(self) -> str:
        return self.distribution

    @property
    def alpha_or_none(self) -> Optional[float]:
        return self.alpha if self.distribution == "stable" else None


# ---------------------------------------------------------------- precondition

class ScalingVector(ArrayModel):
    values: np.ndarray
    broadcast: bool = False

    @field_validator("values")
    @classmethod
    def _positive_finite(cls, v: np.ndarray) -> np.ndarray:
        if v.ndim != 1 or v.size == 0:
            raise ValueError("scaling vector must be a non-empty 1-D array")
        if not np.all(np.isfinite(v)) or np.any(v <= 0):
            raise ValueError("scaling entries must be strictly positive and finite")
        return v

    def columns(self, n: int) -> np.ndarray:
        """Per-column factors for an n-column matrix"""
        if self.broadcast:
            return np.full(n, self.values[0], dtype=self.values.dtype)
        if self.values.size != n:
            raise ValueError(f"scaling vector has {self.values.size} entries, matrix has {n} columns")
        return self.values


class PreconditionResult(ArrayModel):
    x1: np.ndarray
    scaling: ScalingVector
    preconditioner: PreconditionerKind
    gram1: Optional[np.ndarray] = None


# ---------------------------------------------------------------- newton_schulz

class CoefficientSchedule(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str
    triples: Tuple[Tuple[float, float, float], ...]
    source: Optional[str] = None

    @field_validator("triples")
    @classmethod
    def _non_empty_finite(cls, v):
        if len(v) == 0:
            raise ValueError("a coefficient schedule needs at least one triple")
        for triple in v:
            if not all(math.isfinite(c) for c in triple):
                raise ValueError(f"non-finite coefficient in {triple}")
        return v

    def __len__(self) -> int:
        return len(self.triples)


class IterationStat(BaseModel):
    iteration: int
    a: float
    b: float
    c: float
    matmuls: int
    ortho_error: Optional[float] = None
    elapsed: float


class OrthogonalizeReport(ArrayModel):
    result: np.ndarray
    pipeline: str
    preconditioner: PreconditionerKind
    iterations_run: int
    matmul_count: int
    per_iteration: List[IterationStat]
    precision: Precision
    schedule_name: str
    schedule_source: Optional[str] = None
    transposed: bool = False

    @model_validator(mode="after")
    def _consistent(self):
        if len(self.per_iteration) != self.iterations_run:
            raise ValueError("per_iteration length must equal iterations_run")
        return self

    @property
    def wall_time(self) -> float:
        return sum(stat.elapsed for stat in self.per_iteration)

    @property
    def triples(self) -> List[Tuple[float, float, float]]:
        return [(s.a, s.b, s.c) for s in self.per_iteration]


# ---------------------------------------------------------------- metrics

class ErrorBreakdown(BaseModel):
    polar_error: float = Field(ge=0)
    ortho_error: float = Field(ge=0)
    bias_error: float = Field(ge=0)
    approx_error: float = Field(ge=0)
    n: int


# ---------------------------------------------------------------- toy_trainer

class TrainerConfig(BaseModel):
    layer_dims: List[int] = Field(default_factory=lambda: [32, 64, 10])
    learning_rate: float = 0.05
    momentum: float = 0.95
    steps: int = Field(default=500, ge=1)
    ns_iterations: Optional[int] = Field(default=None, ge=1)
    pipeline: Pipeline = "turbo"
    schedule: Optional[str] = None
    seed: int = 0
    dataset: Literal["gaussian_mixture"] = "gaussian_mixture"
    samples: int = Field(default=2000, ge=10)
    separation: float = 3.0
    batch_size: Optional[int] = None
    precision: Precision = "double"
    log_every: int = 100
    decompose_every: int = Field(default=0, ge=0)

    @field_validator("layer_dims")
    @classmethod
    def _two_layers(cls, v: List[int]) -> List[int]:
        if len(v) != 3 or any(d < 1 for d in v):
            raise ValueError("layer_dims must be [input, hidden, classes] with positive sizes")
        if v[2] < 2:
            raise ValueError("need at least two classes")
        return v

    @field_validator("learning_rate")
    @classmethod
    def _lr_non_negative(cls, v: float) -> float:
        if v < 0:
            raise ValueError("learning_rate must be non-negative")
        return v

    @field_validator("momentum")
    @classmethod
    def _momentum_range(cls, v: float) -> float:
        if not 0 <= v < 1:
            raise ValueError("momentum must lie in [0, 1)")
        return v

    @property
    def iterations(self) -> int:
        if self.ns_iterations is not None:
            return self.ns_iterations
        return 4 if self.pipeline == "turbo" else 5


class MomentumErrorStat(BaseModel):
    """Error split of one orthogonalized momentum buffer at one step"""
    step: int
    layer: str
    polar_error: float = Field(ge=0)
    bias_error: float = Field(ge=0)
    approx_error: float = Field(ge=0)


class TrainReport(BaseModel):
    pipeline: str
    iterations: int
    seed: int
    loss_curve: List[float]
    final_loss: float
    final_accuracy: float = Field(ge=0, le=1)
    train_accuracy: float = Field(ge=0, le=1)
    per_step_alignment: List[float]
    momentum_errors: List[MomentumErrorStat] = Field(default_factory=list)


# ---------------------------------------------------------------- bench

class SweepConfig(BaseModel):
    sizes: List[int]
    distributions: List[DistributionSpec] = Field(default_factory=lambda: [DistributionSpec()])
    pipelines: List[Pipeline] = Field(default_factory=lambda: ["muon", "muon_plus", "turbo"])
    iteration_counts: List[int] = Field(default_factory=lambda: [5])
    schedule_files: Dict[str, str] = Field(default_factory=dict)
    batch: int = Field(default=32, ge=1)
    seed: int = 0
    precisions: List[Precision] = Field(default_factory=lambda: ["single"])
    output_path: str = "results/sweep.csv"
    extend_schedules: bool = False
    allow_large: bool = False
    workers: int = Field(default=1, ge=1)

    @field_validator("sizes", "distributions", "pipelines", "iteration_counts", "precisions")
    @classmethod
    def _non_empty(cls, v):
        if not v:
            raise ValueError("list must not be empty")
        return v

    @field_validator("sizes", "iteration_counts")
    @classmethod
    def _positive(cls, v: List[int]) -> List[int]:
        if any(item < 1 for item in v):
            raise ValueError("sizes and iteration counts must be positive")
        return v


class BenchRecord(BaseModel):
    pipeline: str
    size: int
    distribution: str
    alpha: Optional[float] = None
    iterations: int
    trial_index: int
    polar_error: Optional[float] = None
    ortho_error: Optional[float] = None
    bias_error: Optional[float] = None
    approx_error: Optional[float] = None
    matmul_count: int
    wall_time: float
    precision: Precision
    schedule_name: str
    seed: int
    status: Literal["ok", "failed"] = "ok"
    message: str = ""

    @field_validator("alpha", "polar_error", "ortho_error", "bias_error", "approx_error", mode="before")
    @classmethod
    def _blank_is_none(cls, v):
        return None if v == "" else v

    @field_validator("polar_error", "ortho_error", "bias_error", "approx_error")
    @classmethod
    def _non_negative(cls, v: Optional[float]) -> Optional[float]:
        if v is not None and v < 0:
            raise ValueError("error columns must be non-negative")
        return v

    @property
    def failed(self) -> bool:
        return self.status == "failed"


RECORD_COLUMNS: Tuple[str, ...] = tuple(BenchRecord.model_fields.keys())


# ---------------------------------------------------------------- API

class OrthogonalizeRequest(BaseModel):
    matrix: List[List[float]]
    pipeline: Pipeline = "turbo"
    iterations: int = Field(default=4, ge=1)
    schedule: Optional[str] = None
    precision: Precision = "single"
    reference: bool = False


class OrthogonalizeResponse(BaseModel):
    result: List[List[float]]
    pipeline: str
    preconditioner: str
    iterations_run: int
    matmul_count: int
    schedule_name: str
    per_iteration: List[IterationStat]
    polar_error: Optional[float] = None


class ScheduleInfo(BaseModel):
    name: str
    triples: List[Tuple[float, float, float]]
    source: Optional[str] = None


class ErrorResponse(BaseModel):
    error: str
    detail: str
    status_code: int

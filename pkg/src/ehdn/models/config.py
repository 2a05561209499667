"""Run configuration models"""

from enum import Enum
from pathlib import Path
from typing import Optional

from pydantic import BaseModel, Field, field_validator, model_validator


class AmbiguityKind(str, Enum):
    """Failure ambiguity set used by the optimization"""
    LPCAS = "lpcas"  # lifted partial cross-moments
    FMAS = "fmas"    # first-order moments only


class Command(str, Enum):
    HARDEN = "harden"
    MIN_BUDGET = "min-budget"
    VALIDATE = "validate"
    EVALUATE = "evaluate"
    REPORT = "report"


class SolverOptions(BaseModel):
    """Options passed to the MILP kernel and its cone refinement"""

    mip_rel_gap: float = Field(1e-6, ge=0, description="Relative MIP gap for HiGHS")
    time_limit: Optional[float] = Field(None, gt=0, description="Seconds per solve")
    cone_tol: float = Field(1e-7, gt=0, description="Max accepted cone violation")
    max_cone_rounds: int = Field(200, ge=1)
    dual_bound_factor: float = Field(4.0, gt=0, description="Scale of the initial dual big-M")
    max_bound_doublings: int = Field(6, ge=0)
    tie_break: float = Field(1e-6, ge=0, description="Objective weight preferring fewer hardenings")


class RunConfig(BaseModel):
    """Everything needed to reproduce one CLI run"""

    command: Command = Command.HARDEN
    instance: str = Field("toy3", description="Instance file path or bundled instance name")
    levels: list[int] = Field(default_factory=lambda: [1])
    eps: float = Field(0.05, gt=0, lt=1)
    k_cc: float = Field(1.0, ge=0)
    tol: float = Field(1e-3, gt=0)
    max_iter: int = Field(50, ge=1)
    seed: int = 0
    samples: int = Field(1000, ge=1)
    quantile: float = Field(0.95, gt=0, lt=1)
    threads: int = Field(1, ge=1)
    hlcc: bool = True
    ambiguity: AmbiguityKind = AmbiguityKind.LPCAS
    gamma1: Optional[float] = Field(None, ge=0)
    gamma2: Optional[float] = Field(None, ge=0)
    calibrate: bool = False
    n_l: Optional[int] = Field(None, ge=1)
    outcome_variance: bool = True
    storage: bool = True
    conversion: bool = True
    linearized_validation: bool = False
    plan: Optional[str] = Field(None, description="Plan file for evaluate/validate")
    output_dir: str = "results"
    solver: SolverOptions = Field(default_factory=SolverOptions)

    @field_validator("levels")
    @classmethod
    def check_levels(cls, v: list[int]) -> list[int]:
        if not v:
            raise ValueError("at least one disaster level is required")
        return v

    @model_validator(mode="after")
    def check_gammas(self) -> "RunConfig":
        if self.gamma1 is not None and self.gamma2 is not None and self.gamma2 < self.gamma1:
            raise ValueError("gamma2 must be >= gamma1")
        return self

    @property
    def output_path(self) -> Path:
        return Path(self.output_dir)

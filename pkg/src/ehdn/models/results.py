"""Result models - plans, convergence traces and validation reports"""

from datetime import datetime
from typing import Optional

from pydantic import BaseModel, Field


class CCGIteration(BaseModel):
    """One column-and-constraint generation iteration"""
    iteration: int
    lower_bound: float
    upper_bound: float
    gap: float
    scenario: list[str] = Field(
        default_factory=list, description="Failed 'component@period' entries"
    )
    master_seconds: float = 0.0
    sub_seconds: float = 0.0


class CCGTrace(BaseModel):
    iterations: list[CCGIteration] = Field(default_factory=list)
    converged: bool = False

    @property
    def lower_bound(self) -> float:
        return self.iterations[-1].lower_bound if self.iterations else 0.0

    @property
    def upper_bound(self) -> float:
        return self.iterations[-1].upper_bound if self.iterations else float("inf")


class HlccStatus(BaseModel):
    """Post-hoc closed-form check of one chance constraint"""
    group: str
    mean: float = Field(..., description="s'mu(x)")
    spread: float = Field(..., description="sqrt of the second-moment term")
    lhs: float
    k_cc: float
    worst_case_prob: float
    satisfied: bool


class HardeningPlan(BaseModel):
    """Optimal first-stage decision with its worst-case cost"""
    instance: str
    level: Optional[int] = None
    ambiguity: str = "lpcas"
    hardened_lines: list[str] = Field(default_factory=list)
    hardened_pipelines: list[str] = Field(default_factory=list)
    storage: dict[str, float] = Field(default_factory=dict, description="Initial m3 per station")
    hardening_cost: float = 0.0
    welsc: float = Field(..., description="Worst expected load-shedding cost, $")
    lower_bound: float = 0.0
    gap: float = 0.0
    converged: bool = False
    gamma1: float = 0.0
    gamma2: float = 0.0
    n_l: int = 0
    hlcc: list[HlccStatus] = Field(default_factory=list)
    created_at: datetime = Field(default_factory=datetime.now)

    @property
    def hardened(self) -> set[str]:
        return set(self.hardened_lines) | set(self.hardened_pipelines)


class MinBudgetResult(BaseModel):
    """Cheapest hardening that satisfies every chance constraint"""
    instance: str
    level: Optional[int] = None
    feasible: bool
    budget: float = 0.0
    hardened_pipelines: list[str] = Field(default_factory=list)
    worst_case_prob: dict[str, float] = Field(default_factory=dict)
    message: str = ""


class ValidationReport(BaseModel):
    """Monte-Carlo statistics of a plan under the nominal distribution"""
    instance: str
    level: Optional[int] = None
    samples: int
    seed: int
    mean_cost: float
    half_width: float
    quantile: float
    var_ssa: int
    mean_ssa_failures: float
    linearized: bool = False
    vola: Optional[float] = None

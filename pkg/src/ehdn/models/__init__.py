"""Data models for ehdn"""

from ehdn.models.config import AmbiguityKind, Command, RunConfig, SolverOptions
from ehdn.models.fragility import (
    FragilitySet,
    LineFragility,
    LineState,
    PipelineFragility,
    PoleCurve,
    SegmentCurve,
)
from ehdn.models.network import (
    Costs,
    GridLine,
    GridNode,
    Horizon,
    HydrogenNode,
    HydrogenStation,
    Network,
    Pipeline,
    VoltageSettings,
    Zone,
)
from ehdn.models.results import (
    CCGIteration,
    CCGTrace,
    HardeningPlan,
    HlccStatus,
    MinBudgetResult,
    ValidationReport,
)
from ehdn.models.weather import DisasterLevel, WeatherForecast

__all__ = [
    "AmbiguityKind",
    "CCGIteration",
    "CCGTrace",
    "Command",
    "Costs",
    "DisasterLevel",
    "FragilitySet",
    "GridLine",
    "GridNode",
    "HardeningPlan",
    "HlccStatus",
    "Horizon",
    "HydrogenNode",
    "HydrogenStation",
    "LineFragility",
    "LineState",
    "MinBudgetResult",
    "Network",
    "Pipeline",
    "PipelineFragility",
    "PoleCurve",
    "RunConfig",
    "SegmentCurve",
    "SolverOptions",
    "ValidationReport",
    "VoltageSettings",
    "WeatherForecast",
    "Zone",
]

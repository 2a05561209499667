"""Network model - the coupled electricity-hydrogen distribution network"""

import math
from typing import Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from ehdn.models.fragility import FragilitySet
from ehdn.models.weather import WeatherForecast


POLE_SPACING_KM = 0.05
PIPE_SEGMENT_KM = 0.2
CRITICAL_WEIGHT = 50.0

Profile = Union[float, list[float]]


def expand_profile(value: Profile, periods: int) -> np.ndarray:
    """Expand a scalar or per-period list into an array of length `periods`"""
    if isinstance(value, (int, float)):
        return np.full(periods, float(value))
    if len(value) != periods:
        raise ValueError(f"expected {periods} per-period values, got {len(value)}")
    return np.asarray(value, dtype=float)


class _Frozen(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


def _default_weight(data):
    if isinstance(data, dict) and data.get("shed_weight") is None:
        data = dict(data)
        data["shed_weight"] = CRITICAL_WEIGHT if data.get("is_critical") else 1.0
    return data


class Horizon(_Frozen):
    """Planning horizon"""
    periods: int = Field(..., ge=1, description="Number of periods T")
    period_hours: float = Field(1.0, gt=0)
    load_factors: Optional[list[float]] = Field(
        None, description="Default per-period load multipliers for nodes without their own"
    )

    @model_validator(mode="after")
    def check_factors(self) -> "Horizon":
        if self.load_factors is not None and len(self.load_factors) != self.periods:
            raise ValueError("horizon.load_factors must have one entry per period")
        return self


class VoltageSettings(_Frozen):
    """Per-unit base and voltage limits of the grid"""
    base_kva: float = Field(10000.0, gt=0)
    v0: float = Field(1.0, gt=0, description="Substation voltage, p.u.")
    vmin: float = Field(0.9, gt=0)
    vmax: float = Field(1.1, gt=0)

    @model_validator(mode="after")
    def check_range(self) -> "VoltageSettings":
        if not self.vmin <= self.v0 <= self.vmax:
            raise ValueError("voltage limits must satisfy vmin <= v0 <= vmax")
        return self


class Costs(_Frozen):
    """Budget, prices and the pre-disaster hydrogen stock"""
    budget: float = Field(..., ge=0, description="Hardening budget C^H, $")
    hydrogen_stock_m3: float = Field(0.0, ge=0, description="Total pre-disaster hydrogen E_0")
    shed_cost_kwh: float = Field(15.0, ge=0)
    shed_cost_m3: float = Field(100.0, ge=0)
    line_harden_cost_per_km: float = Field(20000.0, ge=0)
    pipe_harden_cost_per_km: float = Field(37500.0, ge=0)


class GridNode(_Frozen):
    """Distribution grid bus"""
    id: str
    zone_id: Optional[str] = None
    p_load_kw: float = Field(0.0, ge=0)
    q_load_kvar: float = Field(0.0, ge=0)
    load_factors: Optional[list[float]] = None
    shed_weight: float = Field(1.0, ge=1)
    is_substation: bool = False
    is_critical: bool = False
    sub_p_max_kw: float = Field(0.0, ge=0, description="Substation active import cap")
    sub_q_max_kvar: float = Field(0.0, ge=0, description="Substation reactive import cap")
    dg_p_max_kw: float = Field(0.0, ge=0, description="Distributed generator active cap")
    dg_q_max_kvar: float = Field(0.0, ge=0)

    @model_validator(mode="before")
    @classmethod
    def fill_weight(cls, data):
        return _default_weight(data)

    @field_validator("load_factors")
    @classmethod
    def check_factors(cls, v: Optional[list[float]]) -> Optional[list[float]]:
        if v is not None and any(f < 0 for f in v):
            raise ValueError("load factors must be >= 0")
        return v

    @model_validator(mode="after")
    def check_reactive(self) -> "GridNode":
        if self.q_load_kvar > 0 and self.p_load_kw == 0:
            raise ValueError("reactive load requires an active load (power factor shedding)")
        return self

    @property
    def has_dg(self) -> bool:
        return self.dg_p_max_kw > 0 or self.dg_q_max_kvar > 0


class GridLine(_Frozen):
    """Distribution line between two grid nodes"""
    id: str
    from_node: str
    to_node: str
    length_km: float = Field(..., gt=0)
    r_pu: float = Field(..., ge=0)
    x_pu: float = Field(..., ge=0)
    p_max_kw: float = Field(..., gt=0)
    q_max_kvar: float = Field(..., gt=0)
    pole_count: Optional[int] = Field(None, ge=1)
    segment_count: Optional[int] = Field(None, ge=0)
    harden_cost: Optional[float] = Field(None, ge=0)
    zone_id: Optional[str] = None

    @property
    def poles(self) -> int:
        """N^P, one pole per 50 m unless given"""
        if self.pole_count is not None:
            return self.pole_count
        return max(1, math.ceil(round(self.length_km / POLE_SPACING_KM, 9)))

    @property
    def segments(self) -> int:
        """N^W, equal to the pole count unless given"""
        return self.segment_count if self.segment_count is not None else self.poles


class HydrogenNode(_Frozen):
    """Hydrogen pipeline network node"""
    id: str
    zone_id: Optional[str] = None
    load_m3h: float = Field(0.0, ge=0)
    load_factors: Optional[list[float]] = None
    shed_weight: float = Field(1.0, ge=1)
    is_critical: bool = False
    has_transmission_feed: bool = False
    feed_max_m3h: float = Field(0.0, ge=0, description="Transmission feed cap F^UT")

    @model_validator(mode="before")
    @classmethod
    def fill_weight(cls, data):
        return _default_weight(data)


class Pipeline(_Frozen):
    """Hydrogen pipeline between two hydrogen nodes"""
    id: str
    from_node: str
    to_node: str
    length_km: float = Field(..., gt=0)
    f_max_m3h: float = Field(..., gt=0)
    segment_count: Optional[int] = Field(None, ge=1)
    in_ssa: bool = False
    ssa_group: Optional[str] = None
    harden_cost: Optional[float] = Field(None, ge=0)
    zone_id: Optional[str] = None

    @property
    def segments(self) -> int:
        """N^Hy, one segment per 200 m unless given"""
        if self.segment_count is not None:
            return self.segment_count
        return max(1, math.ceil(round(self.length_km / PIPE_SEGMENT_KM, 9)))

    @property
    def ssa_key(self) -> Optional[str]:
        if not self.in_ssa:
            return None
        return self.ssa_group or "ssa"


class HydrogenStation(_Frozen):
    """Station coupling a grid node and a hydrogen node"""
    id: str
    grid_node: str
    hydrogen_node: str
    storage_max_m3: float = Field(0.0, ge=0)
    charge_max_m3h: float = Field(0.0, ge=0)
    discharge_max_m3h: float = Field(0.0, ge=0)
    eta_charge: float = Field(1.0, gt=0, le=1)
    eta_discharge: float = Field(1.0, gt=0, le=1)
    beta_h2p: float = Field(..., gt=0, description="kWh produced per m3 consumed by the fuel cell")
    beta_p2h: float = Field(..., gt=0, description="kWh consumed per m3 produced by electrolysis")
    fuel_cell_max_kw: float = Field(0.0, ge=0)
    electrolyzer_max_kw: float = Field(0.0, ge=0)
    q_max_kvar: float = Field(0.0, ge=0, description="Fuel-cell inverter reactive capability")


class Zone(_Frozen):
    """Weather zone with uniform intensity and its support bounds"""
    id: str
    lines: list[str] = Field(default_factory=list)
    pipelines: list[str] = Field(default_factory=list)
    wind_min: Profile = 0.0
    wind_max: Profile = 80.0
    rain_min: Profile = 0.0
    rain_max: Profile = 40.0

    def wind_bounds(self, periods: int) -> tuple[np.ndarray, np.ndarray]:
        return expand_profile(self.wind_min, periods), expand_profile(self.wind_max, periods)

    def rain_bounds(self, periods: int) -> tuple[np.ndarray, np.ndarray]:
        return expand_profile(self.rain_min, periods), expand_profile(self.rain_max, periods)


class Network(_Frozen):
    """Coupled electricity-hydrogen distribution network instance"""
    version: str
    name: str = "unnamed"
    horizon: Horizon
    voltage: VoltageSettings = Field(default_factory=VoltageSettings)
    costs: Costs
    grid_nodes: list[GridNode]
    grid_lines: list[GridLine] = Field(default_factory=list)
    h2_nodes: list[HydrogenNode] = Field(default_factory=list)
    pipelines: list[Pipeline] = Field(default_factory=list)
    stations: list[HydrogenStation] = Field(default_factory=list)
    zones: list[Zone] = Field(default_factory=list)
    weather: Optional[WeatherForecast] = None
    fragility: FragilitySet = Field(default_factory=FragilitySet)

    @property
    def periods(self) -> int:
        return self.horizon.periods

    def _factors(self, own: Optional[list[float]]) -> np.ndarray:
        if own is not None:
            return expand_profile(own, self.periods)
        if self.horizon.load_factors is not None:
            return np.asarray(self.horizon.load_factors, dtype=float)
        return np.ones(self.periods)

    def active_load(self, node: GridNode) -> np.ndarray:
        """P^L per period, kW"""
        return node.p_load_kw * self._factors(node.load_factors)

    def reactive_load(self, node: GridNode) -> np.ndarray:
        """Q^L per period, kvar"""
        return node.q_load_kvar * self._factors(node.load_factors)

    def hydrogen_load(self, node: HydrogenNode) -> np.ndarray:
        """G^L per period, m3/h"""
        return node.load_m3h * self._factors(node.load_factors)

    def line_cost(self, line: GridLine) -> float:
        if line.harden_cost is not None:
            return line.harden_cost
        return line.length_km * self.costs.line_harden_cost_per_km

    def pipeline_cost(self, pipe: Pipeline) -> float:
        if pipe.harden_cost is not None:
            return pipe.harden_cost
        return pipe.length_km * self.costs.pipe_harden_cost_per_km

    def zone_of(self, component: Union[GridLine, Pipeline]) -> Optional[str]:
        """Zone of a line or pipeline: its own zone_id, else the zone listing it"""
        if component.zone_id is not None:
            return component.zone_id
        listed = "lines" if isinstance(component, GridLine) else "pipelines"
        for zone in self.zones:
            if component.id in getattr(zone, listed):
                return zone.id
        return None

"""Fragility parameter models for poles, wires and pipeline segments"""

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from scipy.stats import norm

# Intensities at which hardened curves must not exceed unhardened ones
WIND_CHECK = np.linspace(0.0, 100.0, 201)  # m/s
RAIN_CHECK = np.linspace(0.5, 500.0, 1000)  # accumulated mm
ORDER_TOL = 1e-12


class _Frozen(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


def _check_table(table: list[tuple[float, float]]) -> list[tuple[float, float]]:
    if not table:
        raise ValueError("curve table must not be empty")
    xs = [p[0] for p in table]
    ys = [p[1] for p in table]
    if any(b <= a for a, b in zip(xs, xs[1:])):
        raise ValueError("curve table intensities must be strictly increasing")
    if any(y < 0 or y > 1 for y in ys):
        raise ValueError("curve table probabilities must lie in [0, 1]")
    if any(b < a for a, b in zip(ys, ys[1:])):
        raise ValueError("curve table probabilities must be nondecreasing")
    return table


def _first_above(hard: np.ndarray, soft: np.ndarray, at: np.ndarray):
    above = np.flatnonzero(hard > soft + ORDER_TOL)
    return float(at[above[0]]) if above.size else None


class PoleCurve(_Frozen):
    """Exponential pole curve a * exp(b * v)"""
    a: float = Field(..., gt=0)
    b: float = Field(..., gt=0)

    def sample(self, v: np.ndarray) -> np.ndarray:
        return np.minimum(self.a * np.exp(self.b * v), 1.0)


class LineState(_Frozen):
    """Line parameters that change with hardening"""
    pole: PoleCurve
    chi: float = Field(0.0, ge=0, description="Indirect-strike factor")
    indirect: list[tuple[float, float]] = Field(
        default_factory=lambda: [(0.0, 0.0), (100.0, 0.0)],
        description="Piecewise-linear indirect wire curve (m/s, probability)",
    )

    @field_validator("indirect")
    @classmethod
    def check_indirect(cls, v: list[tuple[float, float]]) -> list[tuple[float, float]]:
        return _check_table(v)


class LineFragility(_Frozen):
    """Fragility of one distribution line in both hardening states"""
    direct: list[tuple[float, float]] = Field(
        default_factory=lambda: [(0.0, 0.0), (100.0, 0.0)],
        description="Piecewise-linear direct wire curve (m/s, probability)",
    )
    unhardened: LineState
    hardened: LineState

    @field_validator("direct")
    @classmethod
    def check_direct(cls, v: list[tuple[float, float]]) -> list[tuple[float, float]]:
        return _check_table(v)

    @model_validator(mode="after")
    def check_hardened_lower(self) -> "LineFragility":
        direct = np.interp(WIND_CHECK, *zip(*self.direct))
        hard, soft = self.hardened, self.unhardened
        for name, h, s in (
            ("pole", hard.pole.sample(WIND_CHECK), soft.pole.sample(WIND_CHECK)),
            ("wire", np.maximum(direct, hard.chi * np.interp(WIND_CHECK, *zip(*hard.indirect))),
             np.maximum(direct, soft.chi * np.interp(WIND_CHECK, *zip(*soft.indirect)))),
        ):
            v = _first_above(h, s, WIND_CHECK)
            if v is not None:
                raise ValueError(f"hardened {name} curve exceeds the unhardened one at {v:g} m/s")
        return self

    def state(self, hardened: bool) -> LineState:
        return self.hardened if hardened else self.unhardened


class SegmentCurve(_Frozen):
    """Lognormal pipeline segment curve Phi(ln(z * R) / sigma)"""
    z: float = Field(..., gt=0)
    sigma: float = Field(..., gt=0)

    def sample(self, accumulated: np.ndarray) -> np.ndarray:
        return norm.cdf(np.log(self.z * accumulated) / self.sigma)


class PipelineFragility(_Frozen):
    """Fragility of one pipeline in both hardening states"""
    unhardened: SegmentCurve
    hardened: SegmentCurve

    @model_validator(mode="after")
    def check_hardened_lower(self) -> "PipelineFragility":
        r = _first_above(self.hardened.sample(RAIN_CHECK), self.unhardened.sample(RAIN_CHECK),
                         RAIN_CHECK)
        if r is not None:
            raise ValueError(f"hardened segment curve exceeds the unhardened one at {r:g} mm")
        return self

    def state(self, hardened: bool) -> SegmentCurve:
        return self.hardened if hardened else self.unhardened


DEFAULT_LINE = LineFragility(
    direct=[(0.0, 0.0), (30.0, 0.0), (50.0, 0.002), (70.0, 0.02)],
    unhardened=LineState(
        pole=PoleCurve(a=2e-7, b=0.2),
        chi=0.5,
        indirect=[(0.0, 0.0), (30.0, 0.0), (50.0, 0.005), (70.0, 0.05)],
    ),
    hardened=LineState(
        pole=PoleCurve(a=5e-8, b=0.19),
        chi=0.1,
        indirect=[(0.0, 0.0), (30.0, 0.0), (50.0, 0.005), (70.0, 0.05)],
    ),
)

DEFAULT_PIPELINE = PipelineFragility(
    unhardened=SegmentCurve(z=0.01, sigma=0.25),
    hardened=SegmentCurve(z=0.005, sigma=0.2),
)


class FragilitySet(_Frozen):
    """Per-class default curves plus per-component overrides keyed by id"""
    line_default: LineFragility = DEFAULT_LINE
    pipeline_default: PipelineFragility = DEFAULT_PIPELINE
    lines: dict[str, LineFragility] = Field(default_factory=dict)
    pipelines: dict[str, PipelineFragility] = Field(default_factory=dict)

    def for_line(self, line_id: str) -> LineFragility:
        return self.lines.get(line_id, self.line_default)

    def for_pipeline(self, pipe_id: str) -> PipelineFragility:
        return self.pipelines.get(pipe_id, self.pipeline_default)

"""Weather forecast model - disaster levels and intensity statistics"""

from pydantic import BaseModel, ConfigDict, Field, model_validator


class DisasterLevel(BaseModel):
    """Band of peak intensities for one disaster level"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    wind: tuple[float, float] = Field(..., description="Peak wind band, m/s")
    rain: tuple[float, float] = Field(..., description="Peak rainfall band, mm/h")

    @model_validator(mode="after")
    def check_bands(self) -> "DisasterLevel":
        for name, (lo, hi) in (("wind", self.wind), ("rain", self.rain)):
            if lo < 0 or hi < lo:
                raise ValueError(f"{name} band must satisfy 0 <= low <= high")
        return self


DEFAULT_LEVELS = {
    1: DisasterLevel(wind=(35.0, 40.0), rain=(11.0, 14.0)),
    2: DisasterLevel(wind=(40.0, 45.0), rain=(14.0, 17.0)),
    3: DisasterLevel(wind=(45.0, 50.0), rain=(17.0, 20.0)),
    4: DisasterLevel(wind=(50.0, 55.0), rain=(20.0, 22.0)),
}


class WeatherForecast(BaseModel):
    """Forecast shape shared by all disaster levels of an instance"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    ramp: list[float] = Field(..., description="Per-period fraction of the peak intensity")
    wind_variance: float = Field(4.0, ge=0)
    rain_variance: float = Field(9.0, ge=0)
    zone_correlation: float = Field(0.5, ge=0, le=1)
    time_correlation: float = Field(0.5, ge=0, lt=1)
    wind_rain_correlation: float = Field(0.0, ge=-1, le=1)
    gamma_d1: float = Field(0.1, ge=0)
    gamma_d2: float = Field(1.5, ge=0)
    levels: dict[int, DisasterLevel] = Field(default_factory=lambda: dict(DEFAULT_LEVELS))

    @model_validator(mode="after")
    def check_ratios(self) -> "WeatherForecast":
        if any(r < 0 for r in self.ramp):
            raise ValueError("ramp fractions must be >= 0")
        if self.gamma_d2 < max(1.0, self.gamma_d1):
            raise ValueError("gamma_d2 must be >= max(1, gamma_d1)")
        return self

    def level(self, level: int) -> DisasterLevel:
        if level not in self.levels:
            raise KeyError(f"unknown disaster level {level}; defined: {sorted(self.levels)}")
        return self.levels[level]

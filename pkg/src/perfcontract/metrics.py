"""Measured quantities, their physical bounds and fixed-point encoding."""

from __future__ import annotations

import math
from enum import Enum


class Metric(str, Enum):
    TEMPERATURE = "temperature"  # °C
    HUMIDITY = "humidity"  # % relative humidity
    CO2 = "co2"  # ppm
    ENERGY = "energy"  # kWh per tick

    @property
    def is_thermal(self) -> bool:
        return self is not Metric.ENERGY


THERMAL_METRICS = (Metric.TEMPERATURE, Metric.HUMIDITY, Metric.CO2)

PHYSICAL_RANGE: dict[Metric, tuple[float, float]] = {
    Metric.TEMPERATURE: (-50.0, 100.0),
    Metric.HUMIDITY: (0.0, 100.0),
    Metric.CO2: (0.0, math.inf),
    Metric.ENERGY: (0.0, math.inf),
}


def in_range(metric: Metric, value: float) -> bool:
    lo, hi = PHYSICAL_RANGE[Metric(metric)]
    return math.isfinite(value) and lo <= value <= hi


def to_milli(value: float) -> int:
    """Round to three fractional digits, as an integer count of thousandths."""
    return round(value * 1000)


def from_milli(milli: int) -> float:
    return milli / 1000

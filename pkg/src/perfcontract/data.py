"""Sensor time series: CSV ingestion, validation, lookup and synthetic data.

CSV layout (header required, one sample per row)::

    timestamp,sensor_id,metric,value
    0,TZ2/analog-input:1001,temperature,21.250

``timestamp`` is integer Unix seconds, ``metric`` one of temperature,
humidity, co2, energy, and ``value`` carries at most three fractional digits.
Energy values are consumption since the previous tick.
"""

from __future__ import annotations

import bisect
import csv
import json
import math
import re
from collections.abc import Iterable
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .metrics import PHYSICAL_RANGE, Metric, in_range

CSV_HEADER = ["timestamp", "sensor_id", "metric", "value"]
_VALUE_RE = re.compile(r"-?\d+(\.\d{1,3})?")
_METRIC_ORDER = {m: i for i, m in enumerate(Metric)}


class DataError(ValueError):
    def __init__(self, code: str, message: str, line: Optional[int] = None):
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"{where}{code}: {message}")
        self.code = code
        self.line = line


class NoData(LookupError):
    pass


@dataclass(frozen=True)
class SensorSeries:
    sensor_id: str
    metric: Metric
    timestamps: tuple[int, ...]
    values: tuple[float, ...]

    def __len__(self) -> int:
        return len(self.timestamps)

    @property
    def samples(self) -> list[tuple[int, float]]:
        return list(zip(self.timestamps, self.values))


@dataclass(frozen=True)
class BuildingDataset:
    building_id: str
    series: dict[str, SensorSeries]

    def sensors(self, metric: Metric) -> list[str]:
        return sorted(s.sensor_id for s in self.series.values() if s.metric is metric)

    def merged(self, other: BuildingDataset) -> BuildingDataset:
        clash = set(self.series) & set(other.series)
        if clash:
            raise DataError("DuplicateSensor", ", ".join(sorted(clash)))
        return BuildingDataset(self.building_id, {**self.series, **other.series})


def _check_sample(metric: Metric, prev_t: Optional[int], t: int, value: float) -> Optional[tuple[str, str]]:
    if prev_t is not None and t <= prev_t:
        return "NonMonotone", f"timestamp {t} after {prev_t}"
    if not in_range(metric, value):
        lo, hi = PHYSICAL_RANGE[metric]
        return "OutOfRange", f"{metric.value}={value} outside [{lo}, {hi}]"
    if round(value * 1000) / 1000 != value:
        return "TooPrecise", f"{value} has more than 3 fractional digits"
    return None


def validate_dataset(dataset: BuildingDataset) -> None:
    """Raise DataError unless every series satisfies the sample invariants."""
    for key, s in dataset.series.items():
        if key != s.sensor_id:
            raise DataError("SensorMismatch", f"{key} != {s.sensor_id}")
        if len(s.timestamps) != len(s.values):
            raise DataError("Malformed", f"{s.sensor_id}: length mismatch")
        prev = None
        for t, v in zip(s.timestamps, s.values):
            problem = _check_sample(s.metric, prev, t, v)
            if problem:
                raise DataError(problem[0], f"{s.sensor_id}: {problem[1]}")
            prev = t


def load_csv(path: str | Path, building_id: Optional[str] = None, cumulative_energy: bool = False) -> BuildingDataset:
    """Parse and validate a sensor CSV.

    With ``cumulative_energy`` the energy columns are meter readings and are
    converted to per-tick consumption (the first reading of each meter only
    anchors the difference and is dropped).
    """
    path = Path(path)
    rows: dict[str, tuple[Metric, list[int], list[float], list[int]]] = {}
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != CSV_HEADER:
            raise DataError("BadHeader", f"expected {','.join(CSV_HEADER)}", line=1)
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 4:
                raise DataError("Malformed", f"expected 4 fields, got {len(row)}", lineno)
            ts_s, sensor, metric_s, value_s = (c.strip() for c in row)
            try:
                ts = int(ts_s)
            except ValueError:
                raise DataError("Malformed", f"bad timestamp {ts_s!r}", lineno) from None
            try:
                metric = Metric(metric_s)
            except ValueError:
                raise DataError("UnknownMetric", metric_s, lineno) from None
            if not sensor:
                raise DataError("Malformed", "empty sensor_id", lineno)
            if not _VALUE_RE.fullmatch(value_s):
                raise DataError("Malformed", f"bad value {value_s!r}", lineno)
            value = float(value_s)
            if sensor not in rows:
                rows[sensor] = (metric, [], [], [])
            s_metric, ts_list, vals, lines = rows[sensor]
            if s_metric is not metric:
                raise DataError("MetricMismatch", f"{sensor} is {s_metric.value}, not {metric.value}", lineno)
            problem = _check_sample(metric, ts_list[-1] if ts_list else None, ts, value)
            if problem:
                raise DataError(problem[0], f"{sensor}: {problem[1]}", lineno)
            ts_list.append(ts)
            vals.append(value)
            lines.append(lineno)

    series = {}
    for sensor, (metric, ts_list, vals, lines) in rows.items():
        if cumulative_energy and metric is Metric.ENERGY:
            diffs = []
            for i in range(1, len(vals)):
                d = round(vals[i] * 1000) - round(vals[i - 1] * 1000)
                if d < 0:
                    raise DataError("MeterReset", f"{sensor}: reading decreased", lines[i])
                diffs.append(d / 1000)
            ts_list, vals = ts_list[1:], diffs
        series[sensor] = SensorSeries(sensor, metric, tuple(ts_list), tuple(vals))
    dataset = BuildingDataset(building_id or path.stem, series)
    validate_dataset(dataset)
    return dataset


def load_dir(directory: str | Path, building_id: Optional[str] = None) -> BuildingDataset:
    """Merge every ``*.csv`` in a directory into one dataset."""
    directory = Path(directory)
    files = sorted(directory.glob("*.csv"))
    if not files:
        raise DataError("NoFiles", f"no CSV files in {directory}")
    dataset = load_csv(files[0], building_id or directory.name)
    for f in files[1:]:
        dataset = dataset.merged(load_csv(f))
    return dataset


def write_csv(dataset: BuildingDataset, path: str | Path) -> None:
    rows = [
        (t, s.sensor_id, s.metric.value, v)
        for s in dataset.series.values()
        for t, v in zip(s.timestamps, s.values)
    ]
    rows.sort(key=lambda r: (r[0], r[1]))
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for t, sensor, metric, v in rows:
            w.writerow([t, sensor, metric, format_value(v)])


def format_value(v: float) -> str:
    text = f"{v:.3f}".rstrip("0").rstrip(".")
    return "0" if text in ("", "-0") else text


def sample_at(series: SensorSeries, t: int) -> float:
    """Latest value at or before ``t``."""
    i = bisect.bisect_right(series.timestamps, t)
    if i == 0:
        raise NoData(f"{series.sensor_id} has no sample at or before {t}")
    return series.values[i - 1]


# -- synthetic data -----------------------------------------------------------


@dataclass(frozen=True)
class MetricProfile:
    base: float
    amplitude: float = 0.0
    noise_sd: float = 0.0
    sensors: int = 1
    tick: Optional[int] = None  # falls back to SyntheticSpec.tick


@dataclass(frozen=True)
class SyntheticSpec:
    building_id: str
    profiles: dict[Metric, MetricProfile]
    duration: int
    tick: int = 300
    start: int = 0
    seed: int = 0

    def to_dict(self) -> dict:
        return {
            "building_id": self.building_id,
            "profiles": {
                m.value: {
                    "base": p.base,
                    "amplitude": p.amplitude,
                    "noise_sd": p.noise_sd,
                    "sensors": p.sensors,
                    "tick": p.tick,
                }
                for m, p in self.profiles.items()
            },
            "duration": self.duration,
            "tick": self.tick,
            "start": self.start,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> SyntheticSpec:
        return cls(
            building_id=d["building_id"],
            profiles={Metric(m): MetricProfile(**p) for m, p in d["profiles"].items()},
            duration=int(d["duration"]),
            tick=int(d.get("tick", 300)),
            start=int(d.get("start", 0)),
            seed=int(d.get("seed", 0)),
        )


def sensor_id(building_id: str, metric: Metric, n: int) -> str:
    return f"{building_id}/analog-input:{(_METRIC_ORDER[metric] + 1) * 1000 + n + 1}"


def generate_synthetic(spec: SyntheticSpec, seed: Optional[int] = None) -> BuildingDataset:
    """Daily sinusoid plus Gaussian noise per sensor, clipped to physical range.

    Each (metric, sensor) pair draws from its own stream derived from the
    seed, so adding sensors never perturbs existing ones.
    """
    seed = spec.seed if seed is None else seed
    series = {}
    for metric, prof in spec.profiles.items():
        if prof.noise_sd < 0:
            raise ValueError("noise_sd must be >= 0")
        tick = prof.tick or spec.tick
        ts = np.arange(spec.start, spec.start + spec.duration + 1, tick, dtype=np.int64)
        lo, hi = PHYSICAL_RANGE[metric]
        for n in range(prof.sensors):
            rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(_METRIC_ORDER[metric], n)))
            noise = rng.normal(0.0, prof.noise_sd, size=ts.size) if prof.noise_sd > 0 else np.zeros(ts.size)
            raw = prof.base + prof.amplitude * np.sin(2 * math.pi * ts / 86_400) + noise
            vals = np.round(np.clip(raw, lo, hi), 3)
            sid = sensor_id(spec.building_id, metric, n)
            series[sid] = SensorSeries(
                sid, metric, tuple(int(t) for t in ts), tuple(float(v) + 0.0 for v in vals)
            )
    dataset = BuildingDataset(spec.building_id, series)
    validate_dataset(dataset)
    return dataset

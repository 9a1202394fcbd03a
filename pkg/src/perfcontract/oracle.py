"""Back-end oracle: randomized sampling plan and measurement submission.

Poll times are jittered per metric (each gap uniform on [m/2, 3m/2] around
the mean interval m) and every poll reads one sensor picked uniformly from
the contract's registry. Each metric kind gets its own pair of random
streams (timing, sensor choice) derived from the master seed.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .client import ContractClient
from .contract import Measurement
from .data import BuildingDataset, NoData, sample_at, validate_dataset
from .ledger import Address, LedgerError
from .metrics import Metric, to_milli

DAY = 86_400
_STREAM = {m: i for i, m in enumerate(Metric)}
_TIMING, _SENSORS = 0, 1


@dataclass(frozen=True)
class SamplingPolicy:
    mean_interval: dict[Metric, float]
    seed: int = 0

    def __post_init__(self) -> None:
        if any(not (m > 0 and math.isfinite(m)) for m in self.mean_interval.values()):
            raise ValueError("mean intervals must be positive")

    @classmethod
    def preset(cls, name: str, seed: int = 0) -> SamplingPolicy:
        thermal = {
            "daily5": DAY / 5,
            "quarter-hour": 900.0,
            "replication": DAY / 190,
        }[name]
        return cls(
            {Metric.TEMPERATURE: thermal, Metric.HUMIDITY: thermal, Metric.CO2: thermal, Metric.ENERGY: 7.0 * DAY},
            seed,
        )

    def to_dict(self) -> dict:
        return {"mean_interval": {m.value: v for m, v in self.mean_interval.items()}, "seed": self.seed}

    @classmethod
    def from_dict(cls, d: dict) -> SamplingPolicy:
        if "preset" in d:
            base = cls.preset(d["preset"], int(d.get("seed", 0)))
            overrides = {Metric(m): float(v) for m, v in d.get("mean_interval", {}).items()}
            return cls({**base.mean_interval, **overrides}, base.seed)
        return cls({Metric(m): float(v) for m, v in d["mean_interval"].items()}, int(d.get("seed", 0)))


def stream(seed: int, metric: Metric, purpose: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(_STREAM[metric], purpose)))


@dataclass(frozen=True, order=True)
class ScheduleEvent:
    time: int
    order: int
    metric: Metric = field(compare=False)


Schedule = list[ScheduleEvent]


def plan_metric_times(mean_interval: float, start: int, duration: int, rng: np.random.Generator) -> list[int]:
    """Integer poll times in [start, start + duration) with jittered gaps."""
    if duration <= 0:
        raise ValueError("duration must be positive")
    lo, hi = 0.5 * mean_interval, 1.5 * mean_interval
    horizon = float(duration)
    times: list[int] = []
    offset = 0.0
    chunk = max(16, int(horizon / mean_interval * 1.1) + 8)
    while True:
        for gap in rng.uniform(lo, hi, size=chunk):
            offset += gap
            if offset >= horizon:
                return times
            t = start + math.floor(offset)
            if not times or t > times[-1]:
                times.append(t)


def plan_schedule(policy: SamplingPolicy, start: int, duration: int) -> Schedule:
    events = [
        ScheduleEvent(t, _STREAM[metric], metric)
        for metric, m in policy.mean_interval.items()
        for t in plan_metric_times(m, start, duration, stream(policy.seed, metric, _TIMING))
    ]
    events.sort()
    return events


def select_sensor(registered: list[str] | tuple[str, ...], rng: np.random.Generator) -> str:
    if not registered:
        raise ValueError("no registered sensors")
    return registered[int(rng.integers(len(registered)))]


@dataclass
class SubmissionReport:
    submitted: int = 0
    accepted: int = 0
    rejected: int = 0
    skipped: int = 0
    stale: int = 0
    per_metric: dict[str, int] = field(default_factory=lambda: {m.value: 0 for m in Metric})
    rejection_reasons: Counter = field(default_factory=Counter)
    aborted: Optional[str] = None

    @property
    def rejection_rate(self) -> float:
        return self.rejected / self.submitted if self.submitted else 0.0

    def to_dict(self) -> dict:
        return {
            "submitted": self.submitted,
            "accepted": self.accepted,
            "rejected": self.rejected,
            "skipped": self.skipped,
            "stale": self.stale,
            "per_metric": dict(self.per_metric),
            "rejection_reasons": dict(sorted(self.rejection_reasons.items())),
            "aborted": self.aborted,
        }


def run_oracle(
    schedule: Schedule,
    dataset: BuildingDataset,
    client: ContractClient,
    oracle: Address,
    seed: int = 0,
    until: Optional[int] = None,
) -> SubmissionReport:
    """Walk the schedule in time order, submitting one measurement per event.

    The oracle owns the logical clock: the ledger is advanced to each event
    time before the submission, and to ``until`` (exclusive bound) at the
    end. Events earlier than the clock at entry were handled by a previous
    run and are only replayed through the sensor picker, so running in
    chunks submits exactly what one run would. Events with no sample at or
    before their time are skipped and counted; rejections are recorded,
    never retried.
    """
    validate_dataset(dataset)
    report = SubmissionReport()
    ledger = client.ledger
    if schedule:
        case = client.contract.case
        if case is None:
            raise ValueError("contract has no case; nothing to sample")
        pickers = {m: stream(seed, m, _SENSORS) for m in Metric}
        resume_at = ledger.clock
        for event in schedule:
            if until is not None and event.time >= until:
                break
            registered = case.sensors.get(event.metric, ())
            sensor = select_sensor(registered, pickers[event.metric]) if registered else None
            if event.time < resume_at:
                report.stale += 1
                continue
            series = dataset.series.get(sensor) if sensor else None
            try:
                if series is None:
                    raise NoData(str(sensor))
                value = sample_at(series, event.time)
            except NoData:
                report.skipped += 1
                continue
            ledger.advance_clock(event.time)
            m = Measurement(client.contract.case_count, event.metric, sensor, event.time, to_milli(value))
            try:
                receipt = client.submit_measurement(oracle, m)
            except LedgerError as exc:
                report.aborted = f"{type(exc).__name__}: {exc}"
                return report
            report.submitted += 1
            if receipt.accepted:
                report.accepted += 1
                report.per_metric[event.metric.value] += 1
            else:
                report.rejected += 1
                report.rejection_reasons[receipt.reason] += 1
        if until is None and report.submitted:
            # past the last processed event so a later run does not repeat it
            ledger.advance_clock(ledger.clock + 1)
    if until is not None and until > ledger.clock:
        ledger.advance_clock(until)
    return report

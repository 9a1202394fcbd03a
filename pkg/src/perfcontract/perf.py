"""Performance ratios, comfort bands and reward tiers.

Everything here is a pure function of its arguments. Ratios are plain
actual/baseline quotients; ``None`` stands for "no samples in the window"
and always classifies as a failure.
"""

from __future__ import annotations

import math
import re
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Optional

INF = math.inf


class Tier(str, Enum):
    FULL = "full"
    REDUCED = "reduced"
    FAIL = "fail"


class ComfortMetric(str, Enum):
    TEMPERATURE = "temperature"
    HUMIDITY = "humidity"
    CO2 = "co2"


@dataclass(frozen=True)
class Interval:
    """Real interval with independently open/closed ends."""

    lo: float
    hi: float
    lo_closed: bool = True
    hi_closed: bool = True

    def __contains__(self, x: float) -> bool:
        if x < self.lo or x > self.hi:
            return False
        if x == self.lo and not self.lo_closed:
            return False
        if x == self.hi and not self.hi_closed:
            return False
        return True

    def __str__(self) -> str:
        left = "[" if self.lo_closed else "("
        right = "]" if self.hi_closed else ")"
        return f"{left}{_fmt_bound(self.lo)}, {_fmt_bound(self.hi)}{right}"

    @classmethod
    def parse(cls, text: str) -> Interval:
        """Parse the ``str()`` form, e.g. ``"[0.9, 1.1]"`` or ``"(-inf, 1]"``."""
        m = _INTERVAL_RE.fullmatch(text.strip())
        if m is None:
            raise ValueError(f"bad interval: {text!r}")
        left, lo, hi, right = m.groups()
        return cls(float(lo), float(hi), left == "[", right == "]")


_INTERVAL_RE = re.compile(r"([\[(])\s*([^,\s]+)\s*,\s*([^,\s\])]+)\s*([\])])")


def _fmt_bound(x: float) -> str:
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(x)


@dataclass(frozen=True)
class MetricBands:
    full: tuple[Interval, ...]
    reduced: tuple[Interval, ...]

    def classify(self, ratio: float) -> Tier:
        if any(ratio in iv for iv in self.full):
            return Tier.FULL
        if any(ratio in iv for iv in self.reduced):
            return Tier.REDUCED
        return Tier.FAIL


@dataclass(frozen=True)
class ComfortBands:
    """Full/Reduced bands per comfort metric; anything outside both fails."""

    temperature: MetricBands = MetricBands(
        full=(Interval(0.9, 1.1),),
        reduced=(Interval(0.8, 0.9, True, False), Interval(1.1, 1.2, False, True)),
    )
    humidity: MetricBands = MetricBands(
        full=(Interval(0.75, 1.5),),
        reduced=(Interval(0.4, 0.75, True, False), Interval(1.5, 1.8, False, True)),
    )
    co2: MetricBands = MetricBands(
        full=(Interval(-INF, 1.0),),
        reduced=(Interval(1.0, 1.1, False, True),),
    )

    def for_metric(self, metric: ComfortMetric | str) -> MetricBands:
        return getattr(self, ComfortMetric(metric).value)

    def to_dict(self) -> dict:
        return {
            m.value: {
                "full": [str(iv) for iv in self.for_metric(m).full],
                "reduced": [str(iv) for iv in self.for_metric(m).reduced],
            }
            for m in ComfortMetric
        }

    @classmethod
    def from_dict(cls, data: dict) -> ComfortBands:
        default = cls()
        kwargs = {}
        for m in ComfortMetric:
            if m.value not in data:
                kwargs[m.value] = default.for_metric(m)
                continue
            entry = data[m.value]
            kwargs[m.value] = MetricBands(
                full=tuple(Interval.parse(s) for s in entry["full"]),
                reduced=tuple(Interval.parse(s) for s in entry["reduced"]),
            )
        return cls(**kwargs)


@dataclass(frozen=True)
class Baselines:
    """Targets the measured window averages are compared against."""

    energy_kwh: float
    temperature_c: float
    humidity_pct: float
    co2_ppm: float

    def invalid_fields(self) -> list[str]:
        return [
            name
            for name in ("energy_kwh", "temperature_c", "humidity_pct", "co2_ppm")
            if not (math.isfinite(getattr(self, name)) and getattr(self, name) > 0)
        ]

    def for_metric(self, metric: ComfortMetric | str) -> float:
        return {
            ComfortMetric.TEMPERATURE: self.temperature_c,
            ComfortMetric.HUMIDITY: self.humidity_pct,
            ComfortMetric.CO2: self.co2_ppm,
        }[ComfortMetric(metric)]


@dataclass(frozen=True)
class Ratios:
    ep: Optional[float] = None
    tc_t: Optional[float] = None
    tc_rh: Optional[float] = None
    tc_co2: Optional[float] = None

    def comfort(self, metric: ComfortMetric | str) -> Optional[float]:
        return {
            ComfortMetric.TEMPERATURE: self.tc_t,
            ComfortMetric.HUMIDITY: self.tc_rh,
            ComfortMetric.CO2: self.tc_co2,
        }[ComfortMetric(metric)]


@dataclass(frozen=True)
class PmvCoefficients:
    a: float
    b: float
    c: float


@dataclass(frozen=True)
class PolicyRule:
    ep: Interval
    tc_t: Interval
    tier: Tier


def _default_rules() -> tuple[PolicyRule, ...]:
    ep_met = Interval(-INF, 1.0)
    ep_over = Interval(1.0, 1.5, False, True)
    ep_far = Interval(1.5, INF, False, True)
    any_tc = Interval(-INF, INF)
    return (
        PolicyRule(ep_met, Interval(0.8, INF), Tier.FULL),
        PolicyRule(ep_met, Interval(-INF, 0.8, True, False), Tier.REDUCED),
        PolicyRule(ep_over, any_tc, Tier.REDUCED),
        PolicyRule(ep_far, Interval(1.2, INF, False, True), Tier.REDUCED),
        PolicyRule(ep_far, Interval(-INF, 1.2), Tier.FAIL),
    )


@dataclass(frozen=True)
class ContractorPolicy:
    """First-matching rule over (EP, TC_T) decides the contractor's tier.

    The default pays in full only when energy is on target without the
    temperature dropping out of the acceptable range, and never fails the
    contractor when overconsumption comes with an overheated building.
    """

    rules: tuple[PolicyRule, ...] = field(default_factory=_default_rules)
    fallback: Tier = Tier.FAIL

    def tier(self, ep: float, tc_t: float) -> Tier:
        for rule in self.rules:
            if ep in rule.ep and tc_t in rule.tc_t:
                return rule.tier
        return self.fallback

    def to_dict(self) -> dict:
        return {
            "rules": [
                {"ep": str(r.ep), "tc_t": str(r.tc_t), "tier": r.tier.value}
                for r in self.rules
            ],
            "fallback": self.fallback.value,
        }

    @classmethod
    def from_dict(cls, data: dict) -> ContractorPolicy:
        rules = tuple(
            PolicyRule(Interval.parse(r["ep"]), Interval.parse(r["tc_t"]), Tier(r["tier"]))
            for r in data["rules"]
        )
        return cls(rules=rules, fallback=Tier(data.get("fallback", "fail")))


def energy_performance(e_avg: float, e_0: float) -> float:
    return e_avg / e_0


def comfort_ratio(actual_avg: float, baseline: float) -> float:
    return actual_avg / baseline


def vapor_pressure(t_c: float, rh_pct: float) -> float:
    """Water vapour partial pressure in hPa (Magnus saturation curve)."""
    return (rh_pct / 100.0) * 6.1094 * math.exp(17.625 * t_c / (t_c + 243.04))


def pmv(t_c: float, p_v: float, coeffs: PmvCoefficients) -> float:
    return coeffs.a * t_c + coeffs.b * p_v - coeffs.c


def interval_average(samples: Sequence[float]) -> Optional[float]:
    if not samples:
        return None
    return sum(samples) / len(samples)


def classify_metric(
    ratio: Optional[float],
    bands: ComfortBands,
    metric: ComfortMetric | str,
) -> Tier:
    if ratio is None:
        return Tier.FAIL
    return bands.for_metric(metric).classify(ratio)


def tier_fraction(tier: Tier, reduced_fraction: Fraction) -> Fraction:
    if tier is Tier.FULL:
        return Fraction(1)
    if tier is Tier.REDUCED:
        return Fraction(reduced_fraction)
    return Fraction(0)


def fm_tier(tiers: Iterable[Tier]) -> Tier:
    # Greens are counted first, so (full, full, fail) still pays in full.
    tiers = list(tiers)
    if len(tiers) != 3:
        raise ValueError("expected exactly three comfort tiers")
    if sum(t is Tier.FULL for t in tiers) >= 2:
        return Tier.FULL
    if sum(t is Tier.FAIL for t in tiers) >= 2:
        return Tier.FAIL
    return Tier.REDUCED


def fm_reward(tiers: Iterable[Tier], reduced_fraction: Fraction = Fraction(1, 2)) -> Fraction:
    return tier_fraction(fm_tier(tiers), reduced_fraction)


def contractor_tier(
    ep: Optional[float],
    tc_t: Optional[float],
    policy: ContractorPolicy = ContractorPolicy(),
) -> Tier:
    """Contractor tier for one window.

    No temperature data means nothing can be verified: Fail. Temperature
    without a closed energy window yet: Reduced.
    """
    if tc_t is None:
        return Tier.FAIL
    if ep is None:
        return Tier.REDUCED
    return policy.tier(ep, tc_t)


def contractor_reward(
    ep: Optional[float],
    tc_t: Optional[float],
    policy: ContractorPolicy = ContractorPolicy(),
    reduced_fraction: Fraction = Fraction(1, 2),
) -> Fraction:
    return tier_fraction(contractor_tier(ep, tc_t, policy), reduced_fraction)

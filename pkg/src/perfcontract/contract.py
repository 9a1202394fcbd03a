"""Performance-based contract state machine.

One contract instance carries one case. Lifecycle::

    Deployed -> CaseCreated -> Funded -> Active -> Completed -> Deactivated

and the contract owner may deactivate from any state. Measurements are
aggregated into thermal windows (temperature, humidity, CO2) and energy
windows as they arrive; a window is evaluated the first time an accepted
transaction is processed at or after its end. Rewards accrue to the facility
manager and the contractor out of the escrow and are paid out on
redemption, release or deactivation.

Every handler validates fully before it mutates anything, so a rejected call
leaves the contract exactly as it was.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Any, Optional

from . import perf
from .ledger import Address, CallContext, Rejected, TxKind, digest_of
from .metrics import THERMAL_METRICS, Metric, in_range
from .perf import Baselines, ComfortBands, ContractorPolicy, Ratios, Tier


class Role(str, Enum):
    CONTRACT_OWNER = "contract_owner"
    BUILDING_OWNER = "building_owner"
    CONTRACTOR = "contractor"
    FACILITY_MANAGER = "facility_manager"
    BACKEND_ORACLE = "backend_oracle"


PAYEE_ROLES = (Role.FACILITY_MANAGER, Role.CONTRACTOR)
GRANTABLE_ROLES = (Role.BUILDING_OWNER, Role.CONTRACTOR, Role.FACILITY_MANAGER)


class LifecycleState(str, Enum):
    DEPLOYED = "Deployed"
    CASE_CREATED = "CaseCreated"
    FUNDED = "Funded"
    ACTIVE = "Active"
    COMPLETED = "Completed"
    DEACTIVATED = "Deactivated"


class UnknownCase(LookupError):
    pass


DAY = 86_400
WEEK = 7 * DAY


@dataclass(frozen=True)
class CaseConfig:
    """Construction parameters of a case; round-trips through JSON."""

    building_id: str
    sensors: dict[Metric, tuple[str, ...]]
    baselines: Baselines
    fm_fee_per_interval: int
    contractor_fee_per_interval: int
    duration: int
    start_time: int = 0
    reduced_fraction: Fraction = Fraction(1, 2)
    thermal_interval: int = DAY
    energy_interval: int = WEEK
    redemption_interval: int = 182 * DAY
    setpoint_sensors: tuple[str, ...] = ()
    bands: ComfortBands = field(default_factory=ComfortBands)
    contractor_policy: ContractorPolicy = field(default_factory=ContractorPolicy)

    @property
    def end_time(self) -> int:
        return self.start_time + self.duration

    @property
    def thermal_windows(self) -> int:
        return -(-self.duration // self.thermal_interval)

    @property
    def energy_windows(self) -> int:
        return -(-self.duration // self.energy_interval)

    def thermal_window(self, k: int) -> tuple[int, int]:
        return _window(self.start_time, self.end_time, self.thermal_interval, k)

    def energy_window(self, k: int) -> tuple[int, int]:
        return _window(self.start_time, self.end_time, self.energy_interval, k)

    def window_index(self, metric: Metric, t: int) -> int:
        step = self.thermal_interval if metric.is_thermal else self.energy_interval
        return (t - self.start_time) // step

    def required_escrow(self) -> int:
        """Escrow that covers a full payout to both payees in every window."""
        return self.thermal_windows * (self.fm_fee_per_interval + self.contractor_fee_per_interval)

    def to_dict(self) -> dict:
        return {
            "building_id": self.building_id,
            "sensors": {m.value: list(ids) for m, ids in self.sensors.items()},
            "setpoint_sensors": list(self.setpoint_sensors),
            "baselines": {
                "E0_kwh": self.baselines.energy_kwh,
                "T0_c": self.baselines.temperature_c,
                "RH0_pct": self.baselines.humidity_pct,
                "CO2_0_ppm": self.baselines.co2_ppm,
            },
            "fees": {
                "fm_fee_per_interval": str(self.fm_fee_per_interval),
                "contractor_fee_per_interval": str(self.contractor_fee_per_interval),
            },
            "reduced_fraction": str(self.reduced_fraction),
            "intervals": {
                "thermal": self.thermal_interval,
                "energy": self.energy_interval,
                "redemption": self.redemption_interval,
            },
            "duration": self.duration,
            "start_time": self.start_time,
            "bands": self.bands.to_dict(),
            "contractor_policy": self.contractor_policy.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> CaseConfig:
        b = d["baselines"]
        intervals = d.get("intervals", {})
        fees = d["fees"]
        return cls(
            building_id=str(d["building_id"]),
            sensors={Metric(m): tuple(str(s) for s in ids) for m, ids in d["sensors"].items()},
            setpoint_sensors=tuple(str(s) for s in d.get("setpoint_sensors", ())),
            baselines=Baselines(
                energy_kwh=float(b["E0_kwh"]),
                temperature_c=float(b["T0_c"]),
                humidity_pct=float(b["RH0_pct"]),
                co2_ppm=float(b["CO2_0_ppm"]),
            ),
            fm_fee_per_interval=int(fees["fm_fee_per_interval"]),
            contractor_fee_per_interval=int(fees["contractor_fee_per_interval"]),
            reduced_fraction=Fraction(str(d.get("reduced_fraction", "1/2"))),
            thermal_interval=int(intervals.get("thermal", DAY)),
            energy_interval=int(intervals.get("energy", WEEK)),
            redemption_interval=int(intervals.get("redemption", 182 * DAY)),
            duration=int(d["duration"]),
            start_time=int(d.get("start_time", 0)),
            bands=ComfortBands.from_dict(d.get("bands", {})),
            contractor_policy=(
                ContractorPolicy.from_dict(d["contractor_policy"])
                if "contractor_policy" in d
                else ContractorPolicy()
            ),
        )

    def validation_errors(self) -> list[tuple[str, str]]:
        errors = [("InvalidBaseline", name) for name in self.baselines.invalid_fields()]
        for metric in Metric:
            if not self.sensors.get(metric):
                errors.append(("EmptySensorList", metric.value))
        if self.duration <= 0:
            errors.append(("InvalidDuration", "duration"))
        for name in ("thermal_interval", "energy_interval", "redemption_interval"):
            if getattr(self, name) <= 0:
                errors.append(("InvalidInterval", name))
        if self.redemption_interval < self.thermal_interval:
            errors.append(("InvalidInterval", "redemption_interval"))
        if self.start_time < 0:
            errors.append(("InvalidStartTime", "start_time"))
        for name in ("fm_fee_per_interval", "contractor_fee_per_interval"):
            if getattr(self, name) < 0:
                errors.append(("InvalidFee", name))
        if not 0 < self.reduced_fraction < 1:
            errors.append(("InvalidFraction", "reduced_fraction"))
        return errors


def _window(start: int, end: int, step: int, k: int) -> tuple[int, int]:
    return start + k * step, min(start + (k + 1) * step, end)


@dataclass(frozen=True)
class Measurement:
    case_id: int
    metric: Metric
    sensor_id: str
    timestamp: int
    value_milli: int

    @property
    def value(self) -> float:
        return self.value_milli / 1000

    def to_payload(self) -> dict:
        return {
            "case_id": self.case_id,
            "metric": self.metric.value,
            "sensor_id": self.sensor_id,
            "timestamp": self.timestamp,
            "value_milli": self.value_milli,
        }

    @classmethod
    def from_payload(cls, p: dict) -> Measurement:
        try:
            m = cls(
                case_id=int(p["case_id"]),
                metric=Metric(p["metric"]),
                sensor_id=str(p["sensor_id"]),
                timestamp=int(p["timestamp"]),
                value_milli=int(p["value_milli"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise Rejected("MalformedPayload", str(exc)) from None
        return m


@dataclass(frozen=True)
class EnergyResult:
    index: int
    window: tuple[int, int]
    mean_kwh: Optional[float]
    ep: Optional[float]
    samples: int


@dataclass(frozen=True)
class IntervalResult:
    case_id: int
    index: int
    window: tuple[int, int]
    ratios: Ratios
    tiers: dict[str, Tier]
    fm_fraction: Fraction
    contractor_fraction: Fraction
    fm_reward: int
    contractor_reward: int
    sample_counts: dict[str, int]
    energy_window: Optional[int]

    def to_record(self) -> dict:
        def r6(x: Optional[float]) -> Optional[str]:
            return None if x is None else f"{x:.6f}"

        return {
            "case_id": self.case_id,
            "index": self.index,
            "t_begin": self.window[0],
            "t_end": self.window[1],
            "ep": r6(self.ratios.ep),
            "tc_t": r6(self.ratios.tc_t),
            "tc_rh": r6(self.ratios.tc_rh),
            "tc_co2": r6(self.ratios.tc_co2),
            "tiers": {k: v.value for k, v in self.tiers.items()},
            "fm_fraction": str(self.fm_fraction),
            "contractor_fraction": str(self.contractor_fraction),
            "fm_reward": str(self.fm_reward),
            "contractor_reward": str(self.contractor_reward),
            "sample_counts": dict(self.sample_counts),
            "energy_window": self.energy_window,
        }


def evaluate_window(
    case: CaseConfig,
    index: int,
    sums: dict[Metric, tuple[int, int]],
    ep: Optional[float],
    energy_window: Optional[int],
    case_id: int = 1,
) -> IntervalResult:
    """Score one thermal window from per-metric (sum of thousandths, count)."""
    comfort: dict[Metric, Optional[float]] = {}
    counts: dict[str, int] = {}
    for metric in THERMAL_METRICS:
        total, n = sums.get(metric, (0, 0))
        counts[metric.value] = n
        comfort[metric] = (
            perf.comfort_ratio(total / (1000 * n), case.baselines.for_metric(metric)) if n else None
        )
    ratios = Ratios(
        ep=ep,
        tc_t=comfort[Metric.TEMPERATURE],
        tc_rh=comfort[Metric.HUMIDITY],
        tc_co2=comfort[Metric.CO2],
    )
    tiers = {m.value: perf.classify_metric(comfort[m], case.bands, m) for m in THERMAL_METRICS}
    fm = perf.fm_tier(tiers[m.value] for m in THERMAL_METRICS)
    contractor = perf.contractor_tier(ep, ratios.tc_t, case.contractor_policy)
    tiers["facility_manager"] = fm
    tiers["contractor"] = contractor
    fm_frac = perf.tier_fraction(fm, case.reduced_fraction)
    co_frac = perf.tier_fraction(contractor, case.reduced_fraction)
    return IntervalResult(
        case_id=case_id,
        index=index,
        window=case.thermal_window(index),
        ratios=ratios,
        tiers=tiers,
        fm_fraction=fm_frac,
        contractor_fraction=co_frac,
        fm_reward=_floor_mul(fm_frac, case.fm_fee_per_interval),
        contractor_reward=_floor_mul(co_frac, case.contractor_fee_per_interval),
        sample_counts=counts,
        energy_window=energy_window,
    )


def _floor_mul(frac: Fraction, amount: int) -> int:
    return frac.numerator * amount // frac.denominator


class PerformanceContract:
    """Ledger-hosted contract; see module docstring for the lifecycle."""

    def __init__(self, address: Address, deployer: Address):
        self.address = address
        self.owner = deployer
        self.state = LifecycleState.DEPLOYED
        self.roles: dict[Role, Address] = {Role.CONTRACT_OWNER: deployer}
        self.case: Optional[CaseConfig] = None
        self.case_count = 0
        self.funded = 0
        self.escrow = 0
        self.refunded = 0
        self.accruals = {r: 0 for r in PAYEE_ROLES}
        self.redeemed = {r: 0 for r in PAYEE_ROLES}
        self.last_redemption: dict[Role, Optional[int]] = {r: None for r in PAYEE_ROLES}
        self.measurements: list[Measurement] = []
        self._measurement_chain = hashlib.sha256(b"measurements").hexdigest()
        self._last_ts: dict[Metric, int] = {}
        self._thermal_sums: dict[int, dict[Metric, list[int]]] = {}
        self._energy_sums: dict[int, list[int]] = {}
        self.results: list[IntervalResult] = []
        self.energy_results: list[EnergyResult] = []

    # -- dispatch ------------------------------------------------------------

    def handle(self, ctx: CallContext, kind: TxKind, payload: dict) -> Any:
        handler = self._HANDLERS.get(kind)
        if handler is None:
            raise Rejected("UnsupportedCall", kind.value)
        return handler(self, ctx, payload)

    # -- role helpers --------------------------------------------------------

    def holds(self, address: Address, role: Role) -> bool:
        return self.roles.get(role) == address

    def roles_of(self, address: Address) -> list[Role]:
        return [r for r, a in self.roles.items() if a == address]

    def _require(self, ctx: CallContext, *roles: Role) -> None:
        if not any(self.holds(ctx.sender, r) for r in roles):
            raise Rejected("Unauthorized", f"requires {'/'.join(r.value for r in roles)}")

    def _require_state(self, *states: LifecycleState) -> None:
        if self.state not in states:
            raise Rejected("WrongState", self.state.value)

    # -- operations ----------------------------------------------------------

    def _add_role(self, ctx: CallContext, payload: dict) -> None:
        self._require(ctx, Role.CONTRACT_OWNER)
        try:
            role = Role(payload["role"])
            grantee = Address.parse(payload["grantee"])
        except (KeyError, TypeError, ValueError) as exc:
            raise Rejected("MalformedPayload", str(exc)) from None
        self._require_state(
            LifecycleState.DEPLOYED, LifecycleState.CASE_CREATED, LifecycleState.FUNDED, LifecycleState.ACTIVE
        )
        if role not in GRANTABLE_ROLES:
            raise Rejected("InvalidRole", role.value)
        if role in self.roles:
            raise Rejected("AlreadyAssigned", role.value)
        if not ctx.account_exists(grantee):
            raise Rejected("UnknownAddress", grantee.hex)
        self.roles[role] = grantee

    def _create_case(self, ctx: CallContext, payload: dict) -> int:
        self._require(ctx, Role.CONTRACT_OWNER)
        self._require_state(LifecycleState.DEPLOYED)
        try:
            case = CaseConfig.from_dict(payload)
        except (KeyError, TypeError, ValueError, ZeroDivisionError) as exc:
            raise Rejected("MalformedPayload", str(exc)) from None
        errors = case.validation_errors()
        if errors:
            reason, detail = errors[0]
            raise Rejected(reason, detail)
        self.case = case
        self.case_count += 1
        self.state = LifecycleState.CASE_CREATED
        return self.case_count

    def _fund_escrow(self, ctx: CallContext, payload: dict) -> int:
        self._require(ctx, Role.BUILDING_OWNER)
        self._require_state(LifecycleState.CASE_CREATED)
        assert self.case is not None
        required = self.case.required_escrow()
        if ctx.value < required:
            raise Rejected("InsufficientEscrow", f"{ctx.value} < {required}")
        if ctx.sender_balance() < ctx.value:
            raise Rejected("InsufficientBalance", str(ctx.value))
        ctx.collect_value()
        self.funded = self.escrow = ctx.value
        self.state = LifecycleState.FUNDED
        return ctx.value

    def _register_backend(self, ctx: CallContext, payload: dict) -> None:
        self._require(ctx, Role.CONTRACT_OWNER)
        if Role.BACKEND_ORACLE in self.roles:
            raise Rejected("AlreadyAssigned", Role.BACKEND_ORACLE.value)
        self._require_state(LifecycleState.FUNDED)
        for role in GRANTABLE_ROLES:
            if role not in self.roles:
                raise Rejected("MissingRole", role.value)
        try:
            backend = Address.parse(payload["backend"])
        except (KeyError, TypeError, ValueError) as exc:
            raise Rejected("MalformedPayload", str(exc)) from None
        if not ctx.account_exists(backend):
            raise Rejected("UnknownAddress", backend.hex)
        self.roles[Role.BACKEND_ORACLE] = backend
        self.state = LifecycleState.ACTIVE

    def _submit_measurement(self, ctx: CallContext, payload: dict) -> int:
        self._require(ctx, Role.BACKEND_ORACLE)
        self._require_state(LifecycleState.ACTIVE)
        m = Measurement.from_payload(payload)
        case = self.case
        assert case is not None
        if m.case_id != self.case_count:
            raise Rejected("UnknownCase", str(m.case_id))
        if m.sensor_id not in case.sensors.get(m.metric, ()):
            raise Rejected("UnknownSensor", f"{m.metric.value}:{m.sensor_id}")
        if not in_range(m.metric, m.value):
            raise Rejected("OutOfRange", f"{m.metric.value}={m.value}")
        if not case.start_time <= m.timestamp < case.end_time:
            raise Rejected("OutsideContractPeriod", str(m.timestamp))
        if m.timestamp > ctx.now:
            raise Rejected("FutureTimestamp", str(m.timestamp))
        if m.timestamp < self._last_ts.get(m.metric, case.start_time):
            raise Rejected("TimestampRegression", f"{m.metric.value}@{m.timestamp}")
        k = case.window_index(m.metric, m.timestamp)
        evaluated = len(self.results) if m.metric.is_thermal else len(self.energy_results)
        if k < evaluated:
            raise Rejected("WindowClosed", f"{m.metric.value} window {k}")

        self._settle(m.timestamp)
        self.measurements.append(m)
        self._chain(m)
        self._last_ts[m.metric] = m.timestamp
        if m.metric.is_thermal:
            agg = self._thermal_sums.setdefault(k, {}).setdefault(m.metric, [0, 0])
        else:
            agg = self._energy_sums.setdefault(k, [0, 0])
        agg[0] += m.value_milli
        agg[1] += 1
        return len(self.measurements)

    def _evaluate(self, ctx: CallContext, payload: dict) -> int:
        self._require(ctx, Role.BACKEND_ORACLE, Role.CONTRACT_OWNER)
        self._require_state(LifecycleState.ACTIVE)
        before = len(self.results)
        self._settle(ctx.now)
        return len(self.results) - before

    def _redeem(self, ctx: CallContext, payload: dict) -> int:
        held = [r for r in PAYEE_ROLES if self.holds(ctx.sender, r)]
        if not held:
            raise Rejected("Unauthorized", "requires facility_manager/contractor")
        self._require_state(LifecycleState.ACTIVE)
        boundary = self.vesting_boundary(ctx.now)
        if boundary is None:
            raise Rejected("RedemptionLocked", f"until {self.case.start_time + self.case.redemption_interval}")
        self._settle(ctx.now)
        payout = 0
        for role in held:
            vested = self.vested(role, boundary) - self.redeemed[role]
            payout += self._pay_accrual(ctx, role, vested)
            self.last_redemption[role] = ctx.now
        return payout

    def vesting_boundary(self, now: int) -> Optional[int]:
        """Latest redemption date at or before ``now``; None before the first."""
        assert self.case is not None
        elapsed = now - self.case.start_time
        k = elapsed // self.case.redemption_interval if elapsed >= 0 else 0
        return self.case.start_time + k * self.case.redemption_interval if k >= 1 else None

    def vested(self, role: Role, boundary: int) -> int:
        """Total reward earned by ``role`` in windows ending by ``boundary``."""
        attr = "fm_reward" if role is Role.FACILITY_MANAGER else "contractor_reward"
        return sum(getattr(r, attr) for r in self.results if r.window[1] <= boundary)

    def _release_escrow(self, ctx: CallContext, payload: dict) -> int:
        self._require(ctx, Role.BUILDING_OWNER)
        self._require_state(LifecycleState.ACTIVE)
        assert self.case is not None
        if ctx.now < self.case.end_time:
            raise Rejected("WrongState", f"running until {self.case.end_time}")
        self._settle(ctx.now)
        for role in PAYEE_ROLES:
            self._pay_accrual(ctx, role)
        refund = self._refund(ctx)
        self.state = LifecycleState.COMPLETED
        return refund

    def _deactivate(self, ctx: CallContext, payload: dict) -> int:
        self._require(ctx, Role.CONTRACT_OWNER)
        if self.state is LifecycleState.DEACTIVATED:
            raise Rejected("WrongState", self.state.value)
        if self.state is LifecycleState.ACTIVE:
            self._settle(ctx.now)
        for role in PAYEE_ROLES:
            if self.accruals[role]:
                self._pay_accrual(ctx, role)
        refund = self._refund(ctx)
        self.state = LifecycleState.DEACTIVATED
        return refund

    _HANDLERS = {
        TxKind.ADD_ROLE: _add_role,
        TxKind.CREATE_CASE: _create_case,
        TxKind.FUND_ESCROW: _fund_escrow,
        TxKind.REGISTER_BACKEND: _register_backend,
        TxKind.SUBMIT_MEASUREMENT: _submit_measurement,
        TxKind.EVALUATE_INTERVAL: _evaluate,
        TxKind.REDEEM: _redeem,
        TxKind.RELEASE_ESCROW: _release_escrow,
        TxKind.DEACTIVATE: _deactivate,
    }

    # -- money ---------------------------------------------------------------

    def _pay_accrual(self, ctx: CallContext, role: Role, amount: Optional[int] = None) -> int:
        amount = self.accruals[role] if amount is None else amount
        assert 0 <= amount <= self.accruals[role]
        if amount:
            ctx.pay(self.roles[role], amount)
        self.accruals[role] -= amount
        self.redeemed[role] += amount
        return amount

    def _refund(self, ctx: CallContext) -> int:
        amount = self.escrow
        if amount:
            ctx.pay(self.roles[Role.BUILDING_OWNER], amount)
        self.escrow = 0
        self.refunded += amount
        return amount

    # -- evaluation ----------------------------------------------------------

    def _settle(self, now: int) -> None:
        """Evaluate every window whose end is at or before ``now``."""
        case = self.case
        assert case is not None
        while len(self.energy_results) < case.energy_windows:
            k = len(self.energy_results)
            window = case.energy_window(k)
            if window[1] > now:
                break
            total, n = self._energy_sums.pop(k, (0, 0))
            mean = total / (1000 * n) if n else None
            ep = perf.energy_performance(mean, case.baselines.energy_kwh) if n else None
            self.energy_results.append(EnergyResult(k, window, mean, ep, n))
        while len(self.results) < case.thermal_windows:
            k = len(self.results)
            window = case.thermal_window(k)
            if window[1] > now:
                break
            ep, ew = None, None
            for er in reversed(self.energy_results):
                if er.window[1] <= window[1]:
                    ep, ew = er.ep, er.index
                    break
            sums = {m: tuple(v) for m, v in self._thermal_sums.pop(k, {}).items()}
            result = evaluate_window(case, k, sums, ep, ew, self.case_count)
            owed = result.fm_reward + result.contractor_reward
            assert owed <= self.escrow, "escrow under-covered"
            self.escrow -= owed
            self.accruals[Role.FACILITY_MANAGER] += result.fm_reward
            self.accruals[Role.CONTRACTOR] += result.contractor_reward
            self.results.append(result)

    def _chain(self, m: Measurement) -> None:
        blob = json.dumps(m.to_payload(), sort_keys=True, separators=(",", ":"))
        self._measurement_chain = hashlib.sha256((self._measurement_chain + blob).encode()).hexdigest()

    # -- queries -------------------------------------------------------------

    @property
    def holdings(self) -> int:
        """What the contract's ledger account should hold."""
        return self.escrow + sum(self.accruals.values())

    def conservation_gap(self) -> int:
        """funded - (escrow + accruals + redeemed + refunded); zero when sound."""
        return self.funded - (
            self.escrow + sum(self.accruals.values()) + sum(self.redeemed.values()) + self.refunded
        )

    def status(self, case_id: int = 1) -> dict:
        if self.case is None or case_id != self.case_count:
            raise UnknownCase(case_id)
        counts = {m.value: 0 for m in Metric}
        for m in self.measurements:
            counts[m.metric.value] += 1
        last = self.results[-1].tiers if self.results else {}
        return {
            "case_id": case_id,
            "building_id": self.case.building_id,
            "state": self.state.value,
            "funded": str(self.funded),
            "escrow": str(self.escrow),
            "refunded": str(self.refunded),
            "accruals": {r.value: str(v) for r, v in self.accruals.items()},
            "redeemed": {r.value: str(v) for r, v in self.redeemed.items()},
            "measurement_count": len(self.measurements),
            "measurement_counts": counts,
            "windows_evaluated": len(self.results),
            "energy_windows_evaluated": len(self.energy_results),
            "last_window_tiers": {k: v.value for k, v in last.items()},
        }

    def state_dict(self) -> dict:
        return {
            "address": self.address.hex,
            "state": self.state.value,
            "roles": {r.value: a.hex for r, a in sorted(self.roles.items())},
            "case": self.case.to_dict() if self.case else None,
            "case_count": self.case_count,
            "funded": str(self.funded),
            "escrow": str(self.escrow),
            "refunded": str(self.refunded),
            "accruals": {r.value: str(v) for r, v in self.accruals.items()},
            "redeemed": {r.value: str(v) for r, v in self.redeemed.items()},
            "last_redemption": {r.value: v for r, v in self.last_redemption.items()},
            "measurements": len(self.measurements),
            "measurement_chain": self._measurement_chain,
            "open_thermal": {str(k): {m.value: list(v) for m, v in d.items()} for k, d in sorted(self._thermal_sums.items())},
            "open_energy": {str(k): list(v) for k, v in sorted(self._energy_sums.items())},
            "results": [r.to_record() for r in self.results],
            "energy_results": [
                [e.index, e.samples, None if e.ep is None else repr(e.ep)] for e in self.energy_results
            ],
        }

    def state_digest(self) -> str:
        return digest_of(self.state_dict())

"""Sessions over a persisted workspace, and the end-to-end scenario driver.

A workspace directory holds the ledger (genesis + transaction log, replayed
on load), actor aliases and the deployed contract address, plus derived
snapshots written for inspection. The granular CLI commands and
``run_scenario`` both go through :class:`Session`, so a scripted scenario is
the same sequence of transactions as the equivalent manual commands.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from decimal import Decimal
from pathlib import Path
from typing import Any, Callable, Optional, Sequence

from .client import ContractClient
from .contract import CaseConfig, LifecycleState, Role
from .costs import CostReport, cost_report
from .data import BuildingDataset, SyntheticSpec, generate_synthetic, load_csv, load_dir, sensor_id
from .ledger import COIN, GIGA, Address, Ledger, Receipt, Transaction, gas_schedule_from_mapping
from .metrics import Metric
from .perf import Baselines
from .oracle import SamplingPolicy, SubmissionReport, plan_schedule, run_oracle

LEDGER_FILE = "ledger.json"
LOCK_FILE = ".lock"

ACTORS = ("contract_owner", "building_owner", "contractor", "facility_manager", "backend_oracle")

# six-month averages after the test deployment (gwei, fiat per coin)
REFERENCE_GAS_PRICE_GWEI = "89.8"
REFERENCE_FIAT_RATE = "322.5"


class StepFailed(RuntimeError):
    def __init__(self, step: str, reason: str, detail: str = ""):
        super().__init__(f"{step} rejected: {reason}" + (f" ({detail})" if detail else ""))
        self.step = step
        self.reason = reason
        self.detail = detail


class WorkspaceBusy(RuntimeError):
    pass


class Session:
    def __init__(self, ledger: Ledger, aliases: Optional[dict[str, Address]] = None, contract: Optional[Address] = None):
        self.ledger = ledger
        self.aliases: dict[str, Address] = dict(aliases or {})
        self.contract_address = contract

    # -- addressing ----------------------------------------------------------

    def resolve(self, who: str | Address) -> Address:
        if isinstance(who, Address):
            return who
        if who in self.aliases:
            return self.aliases[who]
        try:
            return Address.parse(who)
        except ValueError:
            raise KeyError(f"unknown actor or address: {who}") from None

    @property
    def client(self) -> ContractClient:
        if self.contract_address is None:
            raise StepFailed("lookup", "NoContract", "deploy first")
        return ContractClient(self.ledger, self.contract_address)

    def at(self, t: Optional[int]) -> None:
        if t is not None:
            self.ledger.advance_clock(t)

    @staticmethod
    def _check(step: str, receipt: Receipt) -> Receipt:
        if not receipt.accepted:
            raise StepFailed(step, receipt.reason, receipt.detail)
        return receipt

    # -- commands (one ledger transaction each, except oracle_run) ----------

    def create_account(self, name: str, balance: int) -> Address:
        if name in self.aliases:
            raise KeyError(f"actor {name} already exists")
        address = self.ledger.create_account(balance)
        self.aliases[name] = address
        return address

    def deploy(self, who: str) -> Address:
        client, receipt = ContractClient.deploy(self.ledger, self.resolve(who))
        self.contract_address = client.address
        return client.address

    def add_role(self, who: str, grantee: str, role: str) -> None:
        self._check("role add", self.client.add_role(self.resolve(who), self.resolve(grantee), Role(role)))

    def create_case(self, who: str, case: CaseConfig | dict) -> int:
        return self._check("case create", self.client.create_case(self.resolve(who), case)).result

    def fund(self, who: str, amount: Optional[int] = None) -> int:
        if amount is None:
            case = self.client.contract.case
            amount = case.required_escrow() if case else 0
        return self._check("fund", self.client.fund_escrow(self.resolve(who), amount)).result

    def register_backend(self, who: str, backend: str) -> None:
        self._check("backend register", self.client.register_backend(self.resolve(who), self.resolve(backend)))

    def oracle_run(
        self,
        dataset: BuildingDataset,
        policy: SamplingPolicy,
        until: Optional[int] = None,
        who: Optional[str] = None,
    ) -> SubmissionReport:
        contract = self.client.contract
        case = contract.case
        if case is None:
            raise StepFailed("oracle run", "NoCase")
        if who is None:
            backend = contract.roles.get(Role.BACKEND_ORACLE)
            if backend is None:
                raise StepFailed("oracle run", "NoBackend", "register a backend first")
        else:
            backend = self.resolve(who)
        schedule = plan_schedule(policy, case.start_time, case.duration)
        return run_oracle(schedule, dataset, self.client, backend, seed=policy.seed, until=until)

    def redeem(self, who: str) -> int:
        return self._check("redeem", self.client.redeem(self.resolve(who))).result

    def release(self, who: str) -> int:
        return self._check("release", self.client.release_escrow(self.resolve(who))).result

    def deactivate(self, who: str) -> int:
        return self._check("deactivate", self.client.deactivate(self.resolve(who))).result

    def status(self) -> dict:
        contract = self.client.contract
        snap = contract.status(contract.case_count) if contract.case else {"state": contract.state.value}
        snap["clock"] = self.ledger.clock
        snap["contract_digest"] = contract.state_digest()
        snap["ledger_digest"] = self.ledger.state_digest()
        return snap

    def report(self, gas_price_gwei: str | Decimal, fiat_rate: str | Decimal) -> CostReport:
        return cost_report(self.ledger, gas_price_gwei, fiat_rate)

    # -- persistence ---------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "ledger": self.ledger.to_dict(),
            "aliases": {k: v.hex for k, v in self.aliases.items()},
            "contract": self.contract_address.hex if self.contract_address else None,
        }

    @classmethod
    def from_dict(cls, d: dict) -> Session:
        return cls(
            Ledger.from_dict(d["ledger"]),
            {k: Address.parse(v) for k, v in d["aliases"].items()},
            Address.parse(d["contract"]) if d.get("contract") else None,
        )

    def save(self, workspace: str | Path) -> None:
        ws = Path(workspace)
        ws.mkdir(parents=True, exist_ok=True)
        _write_json(ws / LEDGER_FILE, self.to_dict())
        (ws / "log.csv").write_text(self.ledger.export_log())
        if self.contract_address is not None:
            contract = self.client.contract
            _write_json(ws / "state.json", self.status())
            _write_json(ws / "results.json", [r.to_record() for r in contract.results])

    @classmethod
    def load(cls, workspace: str | Path) -> Session:
        path = Path(workspace) / LEDGER_FILE
        if not path.exists():
            raise FileNotFoundError(f"no workspace at {workspace}; run `account create` or `scenario run` first")
        return cls.from_dict(json.loads(path.read_text()))

    @classmethod
    def new(cls, gas_schedule: Optional[dict] = None, gas_price: int = 20 * GIGA) -> Session:
        return cls(Ledger(gas_schedule_from_mapping(gas_schedule), gas_price))


class WorkspaceLock:
    """Exclusive lock file; a second concurrent command fails immediately."""

    def __init__(self, workspace: str | Path):
        self.path = Path(workspace) / LOCK_FILE

    def __enter__(self) -> WorkspaceLock:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        try:
            fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise WorkspaceBusy(f"workspace locked: {self.path}") from None
        with os.fdopen(fd, "w") as fh:
            fh.write(str(os.getpid()))
        return self

    def __exit__(self, *exc: Any) -> None:
        self.path.unlink(missing_ok=True)


def _write_json(path: Path, obj: Any) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


# -- scenario -----------------------------------------------------------------


@dataclass
class ScenarioConfig:
    seed: int
    case: CaseConfig
    dataset: dict  # {"synthetic": {...}} | {"csv": path} | {"dir": path}
    sampling: dict
    balances: dict[str, int]
    gas_price: int = 20 * GIGA
    gas_schedule: dict = field(default_factory=dict)
    fund_amount: Optional[int] = None
    skip_steps: tuple[str, ...] = ()
    deactivate_at: Optional[int] = None
    report_gas_price_gwei: str = REFERENCE_GAS_PRICE_GWEI
    report_fiat_rate: str = REFERENCE_FIAT_RATE
    base_dir: Optional[Path] = None

    @classmethod
    def from_dict(cls, d: dict, base_dir: Optional[Path] = None) -> ScenarioConfig:
        if "seed" not in d:
            raise ValueError("scenario config needs an explicit seed")
        if "case" in d:
            case = CaseConfig.from_dict(d["case"])
        else:
            case_path = _resolve(d["case_file"], base_dir)
            case = CaseConfig.from_dict(json.loads(case_path.read_text()))
        gas = d.get("gas", {})
        report = d.get("report", {})
        return cls(
            seed=int(d["seed"]),
            case=case,
            dataset=d["dataset"],
            sampling=d.get("sampling", {"preset": "daily5"}),
            balances={k: int(v) for k, v in d["actors"].items()},
            gas_price=int(Decimal(str(gas.get("price_gwei", 20))) * GIGA),
            gas_schedule=gas.get("schedule", {}),
            fund_amount=int(d["fund_amount"]) if d.get("fund_amount") is not None else None,
            skip_steps=tuple(d.get("skip_steps", ())),
            deactivate_at=d.get("deactivate_at"),
            report_gas_price_gwei=str(report.get("gas_price_gwei", REFERENCE_GAS_PRICE_GWEI)),
            report_fiat_rate=str(report.get("fiat_rate", REFERENCE_FIAT_RATE)),
            base_dir=base_dir,
        )

    def load_dataset(self) -> BuildingDataset:
        src = self.dataset
        if "synthetic" in src:
            spec = dict(src["synthetic"])
            spec.setdefault("seed", self.seed)
            return generate_synthetic(SyntheticSpec.from_dict(spec))
        if "csv" in src:
            return load_csv(_resolve(src["csv"], self.base_dir), cumulative_energy=src.get("cumulative_energy", False))
        if "dir" in src:
            return load_dir(_resolve(src["dir"], self.base_dir))
        raise ValueError("dataset needs one of: synthetic, csv, dir")

    def sampling_policy(self) -> SamplingPolicy:
        return SamplingPolicy.from_dict({**self.sampling, "seed": self.seed})


def _resolve(p: str, base: Optional[Path]) -> Path:
    path = Path(p)
    return path if path.is_absolute() or base is None else base / path


@dataclass
class ScenarioSummary:
    completed: bool
    ledger_digest: str
    contract_digest: str
    measurement_count: int
    windows_evaluated: int
    payouts: dict[str, int]
    payout_events: int
    refund: int
    funded: int
    submissions: SubmissionReport
    costs: CostReport
    final_state: str
    session: Session = field(repr=False)

    def to_dict(self) -> dict:
        return {
            "completed": self.completed,
            "final_state": self.final_state,
            "ledger_digest": self.ledger_digest,
            "contract_digest": self.contract_digest,
            "measurement_count": self.measurement_count,
            "windows_evaluated": self.windows_evaluated,
            "payouts": {k: str(v) for k, v in self.payouts.items()},
            "payout_events": self.payout_events,
            "funded": str(self.funded),
            "refund": str(self.refund),
            "submissions": self.submissions.to_dict(),
            "costs": self.costs.to_dict(),
        }


def run_scenario(
    config: ScenarioConfig,
    workspace: Optional[str | Path] = None,
    listeners: Sequence[Callable[[Ledger, Transaction], None]] = (),
) -> ScenarioSummary:
    """Deploy, set up roles and case, fund, activate, feed data, pay out, release.

    Redemption rounds happen every ``redemption_interval`` after the start
    (FM then contractor); the oracle feeds the events in between. Any
    rejected step raises :class:`StepFailed` naming the step. ``listeners``
    are called after every logged transaction.
    """
    session = Session.new(config.gas_schedule, config.gas_price)
    session.ledger.listeners.extend(listeners)
    case = config.case
    for name in ACTORS:
        session.create_account(name, config.balances.get(name, 0))
    skip = set(config.skip_steps)
    dataset = config.load_dataset()
    policy = config.sampling_policy()

    session.at(max(0, case.start_time - 3600))
    session.deploy("contract_owner")
    for role in ("building_owner", "contractor", "facility_manager"):
        if f"role:{role}" not in skip:
            session.add_role("contract_owner", role, role)
    session.create_case("contract_owner", case)
    if "fund" not in skip:
        session.fund("building_owner", config.fund_amount)
    session.register_backend("contract_owner", "backend_oracle")

    payout_times = list(range(case.start_time + case.redemption_interval, case.end_time + 1, case.redemption_interval))
    stops = sorted(set(payout_times + [case.end_time]))
    submissions = SubmissionReport()
    payout_events = 0
    deactivated = False
    for stop in stops:
        limit = stop if config.deactivate_at is None else min(stop, config.deactivate_at)
        if limit > session.ledger.clock:
            _merge(submissions, session.oracle_run(dataset, policy, until=limit))
        if config.deactivate_at is not None and config.deactivate_at <= stop:
            session.at(max(session.ledger.clock, config.deactivate_at))
            session.deactivate("contract_owner")
            deactivated = True
            break
        session.at(stop)
        if stop in payout_times and "redeem" not in skip:
            session.redeem("facility_manager")
            session.redeem("contractor")
            payout_events += 1

    if not deactivated:
        session.at(max(session.ledger.clock, case.end_time))
        session.release("building_owner")

    contract = session.client.contract
    summary = ScenarioSummary(
        completed=contract.state is LifecycleState.COMPLETED,
        ledger_digest=session.ledger.state_digest(),
        contract_digest=contract.state_digest(),
        measurement_count=len(contract.measurements),
        windows_evaluated=len(contract.results),
        payouts={r.value: v for r, v in contract.redeemed.items()},
        payout_events=payout_events,
        refund=contract.refunded,
        funded=contract.funded,
        submissions=submissions,
        costs=session.report(config.report_gas_price_gwei, config.report_fiat_rate),
        final_state=contract.state.value,
        session=session,
    )
    if workspace is not None:
        session.save(workspace)
        ws = Path(workspace)
        _write_json(ws / "summary.json", summary.to_dict())
        _write_json(ws / "report.json", summary.costs.to_dict())
        _write_json(ws / "submissions.json", submissions.to_dict())
    return summary


def _merge(total: SubmissionReport, part: SubmissionReport) -> None:
    total.submitted += part.submitted
    total.accepted += part.accepted
    total.rejected += part.rejected
    total.skipped += part.skipped
    total.stale += part.stale
    for k, v in part.per_metric.items():
        total.per_metric[k] += v
    total.rejection_reasons.update(part.rejection_reasons)
    total.aborted = total.aborted or part.aborted


# -- presets ------------------------------------------------------------------

REPLICATION_START = 1_589_414_400  # 2020-05-14T00:00:00Z
DAY = 86_400


def replication_config_dict(seed: int = 2020) -> dict:
    """Two accelerated days, ~190 thermal polls/day/metric, weekly energy."""
    building = "TZ2"
    sensors = {Metric.TEMPERATURE: 6, Metric.HUMIDITY: 6, Metric.CO2: 3, Metric.ENERGY: 1}
    case = CaseConfig(
        building_id=building,
        sensors={m: tuple(sensor_id(building, m, i) for i in range(n)) for m, n in sensors.items()},
        baselines=Baselines(energy_kwh=45.0, temperature_c=21.0, humidity_pct=40.0, co2_ppm=1000.0),
        fm_fee_per_interval=COIN // 2,
        contractor_fee_per_interval=COIN // 2,
        duration=2 * DAY,
        start_time=REPLICATION_START,
        thermal_interval=DAY,
        energy_interval=7 * DAY,
        redemption_interval=2 * DAY,
    )
    synthetic = {
        "building_id": building,
        "profiles": {
            "temperature": {"base": 21.4, "amplitude": 1.2, "noise_sd": 0.5, "sensors": 6},
            "humidity": {"base": 37.0, "amplitude": 5.0, "noise_sd": 4.0, "sensors": 6},
            "co2": {"base": 900.0, "amplitude": 250.0, "noise_sd": 90.0, "sensors": 3},
            "energy": {"base": 46.0, "noise_sd": 3.0, "sensors": 1, "tick": 7 * DAY},
        },
        "duration": 2 * DAY,
        "tick": 300,
        "start": REPLICATION_START,
    }
    return {
        "seed": seed,
        "case": case.to_dict(),
        "dataset": {"synthetic": synthetic},
        "sampling": {"preset": "replication"},
        "actors": {
            "contract_owner": str(10 * COIN),
            "building_owner": str(100 * COIN),
            "contractor": str(COIN),
            "facility_manager": str(COIN),
            "backend_oracle": str(50 * COIN),
        },
        "gas": {"price_gwei": 20},
        "report": {"gas_price_gwei": REFERENCE_GAS_PRICE_GWEI, "fiat_rate": REFERENCE_FIAT_RATE},
    }


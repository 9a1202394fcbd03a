from __future__ import annotations

from dataclasses import dataclass, replace

import pytest

from perfcontract import COIN, Baselines, CaseConfig, ContractClient, Ledger, Metric, Role
from perfcontract.contract import DAY, Measurement

START = 1_000_000


def make_case(**overrides) -> CaseConfig:
    case = CaseConfig(
        building_id="B1",
        sensors={
            Metric.TEMPERATURE: ("t-1", "t-2"),
            Metric.HUMIDITY: ("rh-1",),
            Metric.CO2: ("co2-1",),
            Metric.ENERGY: ("e-1",),
        },
        baselines=Baselines(energy_kwh=45.0, temperature_c=21.0, humidity_pct=40.0, co2_ppm=1000.0),
        fm_fee_per_interval=1_000,
        contractor_fee_per_interval=600,
        duration=4 * DAY,
        start_time=START,
        thermal_interval=DAY,
        energy_interval=2 * DAY,
        redemption_interval=2 * DAY,
    )
    return replace(case, **overrides)


@dataclass
class World:
    ledger: Ledger
    client: ContractClient
    owner: object
    bo: object
    contractor: object
    fm: object
    oracle: object
    outsider: object

    @property
    def contract(self):
        return self.client.contract

    def actors(self) -> dict:
        return {
            "owner": self.owner,
            "bo": self.bo,
            "contractor": self.contractor,
            "fm": self.fm,
            "oracle": self.oracle,
            "outsider": self.outsider,
        }

    def measure(self, metric: Metric, t: int, value: float, sensor: str | None = None):
        sensor = sensor or self.contract.case.sensors[metric][0]
        self.ledger.advance_clock(max(self.ledger.clock, t))
        return self.client.submit_measurement(
            self.oracle, Measurement(1, metric, sensor, t, round(value * 1000))
        )


def build_world(stage: str = "active", case: CaseConfig | None = None) -> World:
    """Ledger + contract advanced to ``stage``: deployed, roles, case, funded, active."""
    ledger = Ledger()
    accounts = [ledger.create_account(1_000 * COIN) for _ in range(6)]
    owner, bo, contractor, fm, oracle, outsider = accounts
    ledger.advance_clock(START - 100)
    client, _ = ContractClient.deploy(ledger, owner)
    w = World(ledger, client, owner, bo, contractor, fm, oracle, outsider)
    if stage == "deployed":
        return w
    for who, role in ((bo, Role.BUILDING_OWNER), (contractor, Role.CONTRACTOR), (fm, Role.FACILITY_MANAGER)):
        assert client.add_role(owner, who, role).accepted
    if stage == "roles":
        return w
    case = case or make_case()
    assert client.create_case(owner, case).accepted
    if stage == "case":
        return w
    assert client.fund_escrow(bo, case.required_escrow()).accepted
    if stage == "funded":
        return w
    assert client.register_backend(owner, oracle).accepted
    return w


@pytest.fixture
def world() -> World:
    return build_world("active")


# -- acceptance reporting -----------------------------------------------------

_CRITERIA: dict[int, tuple[str, bool, float]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    number, title = marker.args
    if report.when == "call" or (report.failed and report.when == "setup"):
        _CRITERIA[number] = (title, report.passed, report.duration)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for number in sorted(_CRITERIA):
        title, passed, duration = _CRITERIA[number]
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {number}. {title} ({duration:.2f} s)")

from decimal import Decimal

from perfcontract import COIN, ContractClient, Ledger, TxKind, cost_report
from perfcontract.ledger import gas_schedule_from_mapping
from perfcontract.scenario import REFERENCE_FIAT_RATE, REFERENCE_GAS_PRICE_GWEI

from conftest import make_case

REFERENCE_TOTAL_GAS = 460_217_196


def reference_sized_ledger() -> Ledger:
    """Deploy + case + 1241 submissions summing to the reported total gas."""
    schedule = gas_schedule_from_mapping({"CreateCase": 9_579_699, "SubmitMeasurement": 359_700})
    ledger = Ledger(schedule)
    owner = ledger.create_account(100 * COIN)
    client, _ = ContractClient.deploy(ledger, owner)
    assert client.create_case(owner, make_case()).accepted
    for _ in range(1241):
        ledger.submit_transaction(owner, TxKind.SUBMIT_MEASUREMENT, {}, to=client.address)
    return ledger


class TestCostReport:
    def test_reference_figures(self):
        ledger = reference_sized_ledger()
        report = cost_report(ledger, REFERENCE_GAS_PRICE_GWEI, REFERENCE_FIAT_RATE)
        assert report.total_gas == REFERENCE_TOTAL_GAS
        assert abs(report.coin_cost - Decimal("41.33")) <= Decimal("0.01")
        assert abs(report.fiat_cost - 13_327) <= 5
        assert report.coin_cost == Decimal("41.3275")
        assert report.fiat_cost == Decimal("13328.12")

    def test_empty(self):
        report = cost_report(Ledger(), "89.8", "322.5")
        assert report.total_gas == 0
        assert report.coin_cost == 0 and report.fiat_cost == 0
        assert set(report.by_kind.values()) == {0}
        assert report.share(TxKind.DEPLOY) == 0.0

    def test_shares_sum_to_one(self, world):
        report = cost_report(world.ledger, 20, 100)
        assert abs(sum(report.share(k) for k in TxKind) - 1) < 1e-12

    def test_matches_ledger_fees_at_ledger_price(self, world):
        report = cost_report(world.ledger, 20, 1)
        fees = sum(tx.fee for tx in world.ledger.log)
        assert report.coin_cost == (Decimal(fees) / COIN).quantize(Decimal("0.0001"))

    def test_replay_invariant(self, world):
        a = cost_report(world.ledger, "89.8", "322.5")
        b = cost_report(world.ledger.replayed(), "89.8", "322.5")
        assert a == b

    def test_float_prices_go_through_str(self):
        report = cost_report(reference_sized_ledger(), 89.8, 322.5)
        assert report.coin_cost == Decimal("41.3275")

    def test_serialisation(self, world):
        report = cost_report(world.ledger, "20", "1")
        d = report.to_dict()
        assert d["total_gas"] == report.total_gas
        assert set(d["by_kind"]) == {k.value for k in TxKind}
        assert "total" in report.to_text()

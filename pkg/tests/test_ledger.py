import pytest

from perfcontract import COIN, GIGA, ContractClient, Ledger, Role, TxKind
from perfcontract.ledger import (
    DEFAULT_GAS_SCHEDULE,
    LOG_HEADER,
    Address,
    InsufficientFunds,
    SetupClosed,
    UnknownAccount,
    gas_schedule_from_mapping,
)

from conftest import build_world


class TestAccounts:
    def test_zero_and_one_coin(self):
        ledger = Ledger()
        a = ledger.create_account(0)
        b = ledger.create_account(10**18)
        assert ledger.balance(a) == 0
        assert ledger.balance(b) == COIN
        assert a.raw != b.raw
        assert len(a.hex) == 66 and a.hex == a.hex.lower()

    def test_funded_accounts_only_during_setup(self):
        ledger = Ledger()
        owner = ledger.create_account(COIN)
        ContractClient.deploy(ledger, owner)
        with pytest.raises(SetupClosed):
            ledger.create_account(1)
        assert ledger.balance(ledger.create_account(0)) == 0

    def test_address_parse_round_trip(self):
        a = Address.derive("x")
        assert Address.parse(a.hex) == a
        assert Address.parse(a.hex[2:]) == a


class TestGasSchedule:
    def test_default_covers_every_kind(self):
        assert set(DEFAULT_GAS_SCHEDULE) == set(TxKind)
        assert all(g > 0 for g in DEFAULT_GAS_SCHEDULE.values())
        assert DEFAULT_GAS_SCHEDULE[TxKind.DEPLOY] == 4_249_797
        assert DEFAULT_GAS_SCHEDULE[TxKind.SUBMIT_MEASUREMENT] == 360_000

    def test_incomplete_or_nonpositive_schedule_rejected(self):
        with pytest.raises(ValueError):
            Ledger(gas_schedule={TxKind.DEPLOY: 1})
        with pytest.raises(ValueError):
            gas_schedule_from_mapping({"Redeem": 0})


class TestTransactions:
    def test_fee_arithmetic(self):
        schedule = gas_schedule_from_mapping({"Deploy": 21_000})
        ledger = Ledger(schedule, gas_price=20 * GIGA)
        owner = ledger.create_account(COIN)
        receipt = ledger.submit_transaction(owner, TxKind.DEPLOY)
        assert receipt.fee == 420_000 * 10**9
        assert ledger.balance(owner) == COIN - 420_000 * 10**9
        assert ledger.balance(ledger.fee_sink) == receipt.fee

    def test_rejected_call_pays_fee_and_changes_nothing_else(self):
        w = build_world("case")
        digest = w.contract.state_digest()
        before = w.ledger.balance(w.outsider)
        receipt = w.client.add_role(w.outsider, w.outsider, Role.FACILITY_MANAGER)
        assert receipt.status == "rejected" and receipt.reason == "Unauthorized"
        assert w.ledger.balance(w.outsider) == before - receipt.fee
        assert w.contract.state_digest() == digest
        assert w.ledger.log[-1].status == "rejected"

    def test_insufficient_fee_balance_not_logged(self):
        ledger = Ledger()
        poor = ledger.create_account(10)
        with pytest.raises(InsufficientFunds):
            ledger.submit_transaction(poor, TxKind.DEPLOY)
        assert ledger.log == []
        assert ledger.balance(poor) == 10

    def test_unknown_sender(self):
        ledger = Ledger()
        with pytest.raises(UnknownAccount):
            ledger.submit_transaction(Address.derive("ghost"), TxKind.DEPLOY)
        with pytest.raises(UnknownAccount):
            ledger.submit_transaction(ledger.fee_sink, TxKind.DEPLOY)

    def test_call_to_missing_contract_rejected(self):
        ledger = Ledger()
        a = ledger.create_account(COIN)
        r = ledger.submit_transaction(a, TxKind.REDEEM, to=Address.derive("nowhere"))
        assert r.reason == "UnknownContract"

    def test_clock_is_monotone(self):
        ledger = Ledger()
        ledger.advance_clock(5)
        with pytest.raises(ValueError):
            ledger.advance_clock(4)


class TestGasTotals:
    def test_empty_log(self):
        total, by_kind = Ledger().gas_totals()
        assert total == 0 and set(by_kind.values()) == {0}

    def test_single_deploy(self):
        ledger = Ledger()
        ContractClient.deploy(ledger, ledger.create_account(COIN))
        total, by_kind = ledger.gas_totals()
        assert total == 4_249_797 == by_kind[TxKind.DEPLOY]

    def test_partition(self, world):
        total, by_kind = world.ledger.gas_totals()
        assert sum(by_kind.values()) == total == sum(tx.gas_used for tx in world.ledger.log)


class TestLogAndReplay:
    def test_seq_and_timestamps(self, world):
        log = world.ledger.log
        assert [tx.seq for tx in log] == list(range(len(log)))
        assert all(a.timestamp <= b.timestamp for a, b in zip(log, log[1:]))
        assert all(tx.fee == world.ledger.gas_schedule[tx.kind] * world.ledger.gas_price for tx in log)

    def test_replay_reproduces_digest(self, world):
        world.client.add_role(world.outsider, world.outsider, Role.CONTRACTOR)  # rejected one too
        fresh = world.ledger.replayed()
        assert fresh.state_digest() == world.ledger.state_digest()

    def test_dict_round_trip(self, world):
        again = Ledger.from_dict(world.ledger.to_dict())
        assert again.state_digest() == world.ledger.state_digest()

    def test_export(self, world):
        lines = world.ledger.export_log().splitlines()
        assert lines[0] == LOG_HEADER
        assert len(lines) == len(world.ledger.log) + 1
        seq, kind, sender, gas, fee, status, ts = lines[1].split(",")
        assert kind == "Deploy" and int(gas) * world.ledger.gas_price == int(fee) and status == "accepted"

    def test_conservation(self, world):
        assert world.ledger.total_supply() == world.ledger.genesis_supply()

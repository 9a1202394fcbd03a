import json

import pytest

from perfcontract import COIN
from perfcontract.cli import build_parser, defaults_document, main, parse_amount
from perfcontract.contract import DAY
from perfcontract.data import write_csv
from perfcontract.ledger import DEFAULT_GAS_SCHEDULE
from perfcontract.oracle import SamplingPolicy
from perfcontract.scenario import LOCK_FILE, Session, replication_config_dict

from conftest import START, make_case
from test_oracle import constant_dataset

ACTORS = {
    "contract_owner": "10coin",
    "building_owner": "100coin",
    "contractor": "1coin",
    "facility_manager": "1coin",
    "backend_oracle": "50coin",
}


def run(*argv):
    return main([str(a) for a in argv])


def out(ws, name):
    return json.loads((ws / "out" / f"{name}.json").read_text())


@pytest.fixture
def files(tmp_path):
    case = make_case()
    case_path = tmp_path / "case.json"
    case_path.write_text(json.dumps(case.to_dict()))
    data = tmp_path / "data"
    data.mkdir()
    write_csv(constant_dataset(case), data / "B1.csv")
    return case, case_path, data


def granular_flow(ws, case_path, data):
    for name, bal in ACTORS.items():
        assert run("account", "create", "--state", ws, "--name", name, "--balance", bal) == 0
    s = ["--state", ws]
    assert run("deploy", *s, "--as", "contract_owner", "--at", START - 100) == 0
    for role in ("building_owner", "contractor", "facility_manager"):
        assert run("role", "add", *s, "--as", "contract_owner", "--grantee", role, "--role", role) == 0
    assert run("case", "create", *s, "--as", "contract_owner", "--case", case_path) == 0
    assert run("fund", *s, "--as", "building_owner") == 0
    assert run("backend", "register", *s, "--as", "contract_owner", "--backend", "backend_oracle") == 0
    assert run("oracle", "run", *s, "--data", data, "--seed", 4, "--preset", "quarter-hour", "--until", START + 2 * DAY) == 0
    assert run("redeem", *s, "--as", "facility_manager") == 0
    assert run("oracle", "run", *s, "--data", data, "--seed", 4, "--preset", "quarter-hour") == 0
    assert run("release", *s, "--as", "building_owner", "--at", START + 4 * DAY) == 0


class TestGranularCommands:
    def test_full_flow(self, tmp_path, files, capsys):
        case, case_path, data = files
        ws = tmp_path / "ws"
        granular_flow(ws, case_path, data)
        status = out(ws, "release")
        assert status["status"] == "accepted"
        assert run("status", "--state", ws) == 0
        snap = out(ws, "status")
        assert snap["state"] == "Completed"
        assert snap["windows_evaluated"] == 4
        assert snap["measurement_count"] == sum(snap["measurement_counts"].values()) > 0
        assert out(ws, "oracle-run")["result"]["rejected"] == 0
        assert (ws / "log.csv").read_text().startswith("seq,kind")

    def test_matches_scripted_session(self, tmp_path, files):
        case, case_path, data = files
        ws = tmp_path / "ws"
        granular_flow(ws, case_path, data)

        s = Session.new()
        for name, bal in ACTORS.items():
            s.create_account(name, parse_amount(bal))
        s.at(START - 100)
        s.deploy("contract_owner")
        for role in ("building_owner", "contractor", "facility_manager"):
            s.add_role("contract_owner", role, role)
        s.create_case("contract_owner", case)
        s.fund("building_owner")
        s.register_backend("contract_owner", "backend_oracle")
        dataset = constant_dataset(case)
        policy = SamplingPolicy.preset("quarter-hour", 4)
        s.oracle_run(dataset, policy, until=START + 2 * DAY)
        s.redeem("facility_manager")
        s.oracle_run(dataset, policy, until=case.end_time)
        s.at(START + 4 * DAY)
        s.release("building_owner")

        assert Session.load(ws).ledger.state_digest() == s.ledger.state_digest()

    def test_status_and_report_do_not_transact(self, tmp_path, files, capsys):
        case, case_path, data = files
        ws = tmp_path / "ws"
        granular_flow(ws, case_path, data)
        before = Session.load(ws).ledger.state_digest()
        assert run("status", "--state", ws) == 0
        assert run("report", "--state", ws, "--gas-price", "89.8", "--fiat-rate", "322.5") == 0
        assert "coin cost" in capsys.readouterr().out
        assert Session.load(ws).ledger.state_digest() == before
        assert out(ws, "report")["gas_price_gwei"] == "89.8"

    def test_rejection_exit_code(self, tmp_path, files, capsys):
        case, case_path, data = files
        ws = tmp_path / "ws"
        for name, bal in ACTORS.items():
            run("account", "create", "--state", ws, "--name", name, "--balance", bal)
        assert run("deploy", "--state", ws, "--as", "contract_owner") == 0
        code = run("role", "add", "--state", ws, "--as", "contractor", "--grantee", "contractor", "--role", "contractor")
        assert code == 1
        assert out(ws, "role-add")["reason"] == "Unauthorized"
        assert "Unauthorized" in capsys.readouterr().err
        # the rejected call is still on the ledger, fee and all
        assert Session.load(ws).ledger.log[-1].status == "rejected"

    def test_env_state(self, tmp_path, monkeypatch):
        monkeypatch.setenv("PERFCONTRACT_STATE", str(tmp_path / "env-ws"))
        args = build_parser().parse_args(["status"])
        assert args.state == str(tmp_path / "env-ws")

    def test_unknown_actor_is_usage_error(self, tmp_path):
        ws = tmp_path / "ws"
        run("account", "create", "--state", ws, "--name", "a", "--balance", "1coin")
        assert run("deploy", "--state", ws, "--as", "nobody") == 2

    def test_missing_workspace(self, tmp_path):
        assert run("status", "--state", tmp_path / "none") == 2


class TestLock:
    def test_concurrent_command_refused(self, tmp_path, capsys):
        ws = tmp_path / "ws"
        run("account", "create", "--state", ws, "--name", "a", "--balance", "1coin")
        (ws / LOCK_FILE).write_text("999")
        assert run("deploy", "--state", ws, "--as", "a") == 3
        assert "locked" in capsys.readouterr().err
        (ws / LOCK_FILE).unlink()
        assert run("deploy", "--state", ws, "--as", "a") == 0
        assert not (ws / LOCK_FILE).exists()


class TestScenario:
    def test_default_replication(self, tmp_path, capsys):
        ws = tmp_path / "ws"
        assert run("scenario", "run", "--state", ws) == 0
        summary = json.loads((ws / "summary.json").read_text())
        assert summary["completed"] and summary["payout_events"] == 1
        assert run("scenario", "run", "--state", ws) == 2
        assert run("scenario", "run", "--state", ws, "--force", "--seed", 2020) == 0
        assert json.loads((ws / "summary.json").read_text())["ledger_digest"] == summary["ledger_digest"]

    def test_skipped_funding_aborts_at_backend(self, tmp_path, capsys):
        doc = replication_config_dict(seed=1)
        doc["skip_steps"] = ["fund"]
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps(doc))
        ws = tmp_path / "ws"
        assert run("scenario", "run", "--state", ws, "--config", cfg) == 1
        result = out(ws, "scenario")
        assert result["step"] == "backend register" and result["reason"] == "WrongState"
        assert "backend register" in capsys.readouterr().err

    def test_seedless_config_refused(self, tmp_path):
        doc = replication_config_dict()
        del doc["seed"]
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps(doc))
        assert run("scenario", "run", "--state", tmp_path / "ws", "--config", cfg) == 2


class TestMisc:
    def test_print_defaults(self, capsys):
        assert run("config", "print-defaults") == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["gas_schedule"]["Deploy"] == 4_249_797
        assert doc == json.loads(json.dumps(defaults_document()))
        assert set(doc["gas_schedule"]) == {k.value for k in DEFAULT_GAS_SCHEDULE}

    def test_synth_gen(self, tmp_path, capsys):
        assert run("synth-gen", "--out", tmp_path / "a", "--seed", 3) == 0
        assert run("synth-gen", "--out", tmp_path / "b", "--seed", 3) == 0
        a = (tmp_path / "a" / "TZ2.csv").read_text()
        assert a == (tmp_path / "b" / "TZ2.csv").read_text()
        assert a.startswith("timestamp,sensor_id,metric,value\n")

    @pytest.mark.parametrize(
        "text, value", [("5", 5), ("1coin", COIN), ("0.5coin", COIN // 2), ("20gwei", 20 * 10**9)]
    )
    def test_parse_amount(self, text, value):
        assert parse_amount(text) == value

    def test_usage_errors(self):
        with pytest.raises(SystemExit) as exc:
            main(["deploy"])
        assert exc.value.code == 2

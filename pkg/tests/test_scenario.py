import json

import pytest

from perfcontract import Metric
from perfcontract.contract import DAY
from perfcontract.data import SyntheticSpec, generate_synthetic, write_csv
from perfcontract.scenario import (
    REPLICATION_START,
    ScenarioConfig,
    Session,
    StepFailed,
    WorkspaceBusy,
    WorkspaceLock,
    replication_config_dict,
    run_scenario,
)


def config(**changes):
    doc = replication_config_dict(seed=11)
    doc.update(changes)
    return ScenarioConfig.from_dict(doc)


class TestRunScenario:
    def test_replication_defaults(self):
        summary = run_scenario(config())
        assert summary.completed
        assert summary.windows_evaluated == 2
        assert summary.submissions.rejected == 0
        assert sum(summary.payouts.values()) + summary.refund == summary.funded

    def test_missing_role_stops_at_backend(self):
        with pytest.raises(StepFailed) as exc:
            run_scenario(config(skip_steps=["role:contractor"]))
        assert exc.value.step == "backend register" and exc.value.reason == "MissingRole"

    def test_underfunded(self):
        with pytest.raises(StepFailed) as exc:
            run_scenario(config(fund_amount="1"))
        assert exc.value.step == "fund" and exc.value.reason == "InsufficientEscrow"

    def test_deactivation_mid_run(self):
        summary = run_scenario(config(deactivate_at=REPLICATION_START + DAY + 7))
        assert summary.final_state == "Deactivated" and not summary.completed
        assert summary.windows_evaluated == 1
        assert summary.payout_events == 0
        assert sum(summary.payouts.values()) + summary.refund == summary.funded

    def test_workspace_outputs(self, tmp_path):
        summary = run_scenario(config(), tmp_path)
        for name in ("ledger.json", "log.csv", "state.json", "results.json", "summary.json", "report.json"):
            assert (tmp_path / name).exists(), name
        again = Session.load(tmp_path)
        assert again.ledger.state_digest() == summary.ledger_digest
        assert json.loads((tmp_path / "summary.json").read_text())["measurement_count"] == summary.measurement_count

    def test_csv_dataset(self, tmp_path):
        doc = replication_config_dict(seed=3)
        spec = SyntheticSpec.from_dict({**doc["dataset"]["synthetic"], "seed": 3})
        write_csv(generate_synthetic(spec), tmp_path / "TZ2.csv")
        from_csv = ScenarioConfig.from_dict({**doc, "dataset": {"csv": "TZ2.csv"}}, tmp_path)
        synthetic = ScenarioConfig.from_dict(doc)
        assert run_scenario(from_csv).ledger_digest == run_scenario(synthetic).ledger_digest

    def test_case_file(self, tmp_path):
        doc = replication_config_dict(seed=3)
        (tmp_path / "case.json").write_text(json.dumps(doc.pop("case")))
        cfg = ScenarioConfig.from_dict({**doc, "case_file": "case.json"}, tmp_path)
        assert cfg.case.sensors[Metric.TEMPERATURE][0] == "TZ2/analog-input:1001"

    def test_seed_required(self):
        doc = replication_config_dict()
        del doc["seed"]
        with pytest.raises(ValueError):
            ScenarioConfig.from_dict(doc)


class TestSession:
    def test_duplicate_actor(self):
        s = Session.new()
        s.create_account("a", 0)
        with pytest.raises(KeyError):
            s.create_account("a", 0)

    def test_no_contract(self):
        with pytest.raises(StepFailed):
            Session.new().client

    def test_lock(self, tmp_path):
        with WorkspaceLock(tmp_path):
            with pytest.raises(WorkspaceBusy):
                with WorkspaceLock(tmp_path):
                    pass
        with WorkspaceLock(tmp_path):
            pass

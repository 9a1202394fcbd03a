"""Command-line front end.

Every command works on a workspace directory (``--state``, or the
``PERFCONTRACT_STATE`` environment variable, default ``./workspace``).
Mutating commands append exactly one ledger transaction, except
``oracle run`` (one per submission) and ``scenario run``. Results are
printed as JSON and also written under ``<state>/out/``.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from decimal import Decimal
from pathlib import Path
from typing import Any, Callable, Optional

from .contract import Role
from .data import SyntheticSpec, generate_synthetic, load_dir, write_csv
from .ledger import COIN, GIGA, DEFAULT_GAS_SCHEDULE, LedgerError
from .oracle import SamplingPolicy
from .perf import ComfortBands, ContractorPolicy
from .scenario import (
    REFERENCE_FIAT_RATE,
    REFERENCE_GAS_PRICE_GWEI,
    ScenarioConfig,
    Session,
    StepFailed,
    WorkspaceBusy,
    WorkspaceLock,
    replication_config_dict,
    run_scenario,
)

ENV_STATE = "PERFCONTRACT_STATE"

EXIT_OK, EXIT_REJECTED, EXIT_USAGE, EXIT_BUSY = 0, 1, 2, 3


def parse_amount(text: str) -> int:
    """Base units, or a decimal with a ``coin``/``gwei`` suffix."""
    t = text.strip().lower()
    for suffix, unit in (("coin", COIN), ("gwei", GIGA)):
        if t.endswith(suffix):
            value = Decimal(t[: -len(suffix)]) * unit
            if value != value.to_integral_value():
                raise argparse.ArgumentTypeError(f"{text} is not a whole number of base units")
            return int(value)
    return int(t)


def _emit(args: argparse.Namespace, name: str, obj: Any) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True, default=str)
    print(text)
    out = Path(args.state) / "out"
    out.mkdir(parents=True, exist_ok=True)
    (out / f"{name}.json").write_text(text + "\n")


def _mutate(args: argparse.Namespace, name: str, fn: Callable[[Session], Any], create: bool = False) -> int:
    with WorkspaceLock(args.state):
        ws = Path(args.state)
        if create and not (ws / "ledger.json").exists():
            schedule = json.loads(Path(args.gas_schedule).read_text()) if args.gas_schedule else None
            session = Session.new(schedule, parse_amount(f"{args.gas_price}gwei"))
        else:
            session = Session.load(ws)
        session.at(getattr(args, "at", None))
        try:
            result = fn(session)
        except StepFailed as exc:
            session.save(ws)
            _emit(args, name, {"status": "rejected", "step": exc.step, "reason": exc.reason, "detail": exc.detail})
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_REJECTED
        session.save(ws)
        _emit(args, name, {"status": "accepted", "result": result, "clock": session.ledger.clock})
        return EXIT_OK


# -- command handlers ---------------------------------------------------------


def cmd_account_create(args: argparse.Namespace) -> int:
    return _mutate(
        args,
        "account-create",
        lambda s: s.create_account(args.name, args.balance).hex,
        create=True,
    )


def cmd_deploy(args):
    return _mutate(args, "deploy", lambda s: s.deploy(args.as_).hex)


def cmd_role_add(args):
    return _mutate(args, "role-add", lambda s: s.add_role(args.as_, args.grantee, args.role))


def cmd_case_create(args):
    case = json.loads(Path(args.case).read_text())
    case.pop("sampling", None)
    return _mutate(args, "case-create", lambda s: s.create_case(args.as_, case))


def cmd_fund(args):
    return _mutate(args, "fund", lambda s: str(s.fund(args.as_, args.amount)))


def cmd_backend_register(args):
    return _mutate(args, "backend-register", lambda s: s.register_backend(args.as_, args.backend))


def cmd_oracle_run(args):
    case_doc = json.loads(Path(args.case).read_text()) if args.case else {}
    sampling = case_doc.get("sampling", {"preset": args.preset})
    policy = SamplingPolicy.from_dict({**sampling, "seed": args.seed})
    dataset = load_dir(args.data)

    def run(s: Session) -> dict:
        until = args.until
        if until is None and s.client.contract.case is not None:
            until = s.client.contract.case.end_time
        return s.oracle_run(dataset, policy, until=until, who=args.as_).to_dict()

    return _mutate(args, "oracle-run", run)


def cmd_redeem(args):
    return _mutate(args, "redeem", lambda s: str(s.redeem(args.as_)))


def cmd_release(args):
    return _mutate(args, "release", lambda s: str(s.release(args.as_)))


def cmd_deactivate(args):
    return _mutate(args, "deactivate", lambda s: str(s.deactivate(args.as_)))


def cmd_status(args):
    session = Session.load(args.state)
    _emit(args, "status", session.status())
    return EXIT_OK


def cmd_report(args):
    session = Session.load(args.state)
    report = session.report(args.gas_price, args.fiat_rate)
    print(report.to_text())
    out = Path(args.state) / "out"
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def cmd_synth_gen(args):
    if args.spec:
        spec_doc = json.loads(Path(args.spec).read_text())
    else:
        spec_doc = replication_config_dict()["dataset"]["synthetic"]
    if args.seed is not None:
        spec_doc["seed"] = args.seed
    spec_doc.setdefault("seed", 0)
    spec = SyntheticSpec.from_dict(spec_doc)
    dataset = generate_synthetic(spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(dataset, out / f"{spec.building_id}.csv")
    (out / "synth-spec.json").write_text(json.dumps(spec.to_dict(), indent=2, sort_keys=True) + "\n")
    print(json.dumps({"sensors": len(dataset.series), "seed": spec.seed, "out": str(out)}))
    return EXIT_OK


def cmd_scenario_run(args):
    if args.config:
        path = Path(args.config)
        doc = json.loads(path.read_text())
        base = path.parent
    else:
        doc = replication_config_dict()
        base = None
    if args.seed is not None:
        doc["seed"] = args.seed
    config = ScenarioConfig.from_dict(doc, base)
    ws = Path(args.state)
    if (ws / "ledger.json").exists() and not args.force:
        print(f"error: workspace {ws} already holds a ledger (use --force)", file=sys.stderr)
        return EXIT_USAGE
    with WorkspaceLock(ws):
        try:
            summary = run_scenario(config, ws)
        except StepFailed as exc:
            _emit(args, "scenario", {"completed": False, "step": exc.step, "reason": exc.reason, "detail": exc.detail})
            print(f"error: scenario aborted at {exc.step}: {exc.reason}", file=sys.stderr)
            return EXIT_REJECTED
    _emit(args, "scenario", summary.to_dict())
    if not summary.completed:
        print(f"error: scenario ended in state {summary.final_state}", file=sys.stderr)
        return EXIT_REJECTED
    return EXIT_OK


def defaults_document() -> dict:
    return {
        "gas_schedule": {k.value: v for k, v in DEFAULT_GAS_SCHEDULE.items()},
        "gas_price_gwei": 20,
        "bands": ComfortBands().to_dict(),
        "contractor_policy": ContractorPolicy().to_dict(),
        "reduced_fraction": "1/2",
        "sampling_presets": {
            name: SamplingPolicy.preset(name).to_dict()["mean_interval"]
            for name in ("daily5", "quarter-hour", "replication")
        },
        "report": {"gas_price_gwei": REFERENCE_GAS_PRICE_GWEI, "fiat_rate": REFERENCE_FIAT_RATE},
        "replication_scenario": replication_config_dict(),
    }


def cmd_print_defaults(args):
    print(json.dumps(defaults_document(), indent=2, sort_keys=True))
    return EXIT_OK


# -- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--state", default=os.environ.get(ENV_STATE, "workspace"), help="workspace directory")

    sender = argparse.ArgumentParser(add_help=False)
    sender.add_argument("--as", dest="as_", required=True, help="actor alias or 0x address")
    sender.add_argument("--at", type=int, help="advance the logical clock to this time first")

    parser = argparse.ArgumentParser(prog="perfcontract", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def group(name: str, help: str) -> argparse._SubParsersAction:
        p = sub.add_parser(name, help=help)
        return p.add_subparsers(dest="action", required=True)

    acc = group("account", "ledger accounts").add_parser("create", parents=[common])
    acc.add_argument("--name", required=True)
    acc.add_argument("--balance", type=parse_amount, default=0)
    acc.add_argument("--gas-price", default="20", help="gwei; only used when the workspace is new")
    acc.add_argument("--gas-schedule", help="JSON kind->gas overrides; only used when the workspace is new")
    acc.set_defaults(func=cmd_account_create)

    p = sub.add_parser("deploy", parents=[common, sender])
    p.set_defaults(func=cmd_deploy)

    p = group("role", "role management").add_parser("add", parents=[common, sender])
    p.add_argument("--grantee", required=True)
    p.add_argument("--role", required=True, choices=[r.value for r in Role])
    p.set_defaults(func=cmd_role_add)

    p = group("case", "case management").add_parser("create", parents=[common, sender])
    p.add_argument("--case", required=True, help="case configuration JSON")
    p.set_defaults(func=cmd_case_create)

    p = sub.add_parser("fund", parents=[common, sender])
    p.add_argument("--amount", type=parse_amount, help="defaults to the worst-case payout")
    p.set_defaults(func=cmd_fund)

    p = group("backend", "back-end oracle").add_parser("register", parents=[common, sender])
    p.add_argument("--backend", required=True)
    p.set_defaults(func=cmd_backend_register)

    p = group("oracle", "run the back-end oracle").add_parser("run", parents=[common])
    p.add_argument("--case", help="case file; its 'sampling' entry sets the policy")
    p.add_argument("--data", required=True, help="directory of sensor CSV files")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--until", type=int, help="exclusive end of this run (default: contract end)")
    p.add_argument("--preset", default="daily5", choices=["daily5", "quarter-hour", "replication"])
    p.add_argument("--as", dest="as_", help="submit as this address instead of the registered backend")
    p.set_defaults(func=cmd_oracle_run)

    for name, func in (("redeem", cmd_redeem), ("release", cmd_release), ("deactivate", cmd_deactivate)):
        p = sub.add_parser(name, parents=[common, sender])
        p.set_defaults(func=func)

    p = sub.add_parser("status", parents=[common])
    p.set_defaults(func=cmd_status)

    p = sub.add_parser("report", parents=[common])
    p.add_argument("--gas-price", default=REFERENCE_GAS_PRICE_GWEI, help="gwei per gas")
    p.add_argument("--fiat-rate", default=REFERENCE_FIAT_RATE, help="fiat units per coin")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("synth-gen", help="write a synthetic sensor dataset")
    p.add_argument("--spec", help="synthetic spec JSON (default: replication profile)")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth_gen)

    p = group("scenario", "scripted end-to-end runs").add_parser("run", parents=[common])
    p.add_argument("--config", help="scenario JSON (default: two-day replication preset)")
    p.add_argument("--seed", type=int)
    p.add_argument("--force", action="store_true", help="overwrite an existing workspace ledger")
    p.set_defaults(func=cmd_scenario_run)

    p = group("config", "configuration").add_parser("print-defaults")
    p.set_defaults(func=cmd_print_defaults)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except WorkspaceBusy as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BUSY
    except (FileNotFoundError, KeyError, ValueError, LedgerError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

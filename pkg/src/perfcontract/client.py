"""Convenience wrapper that turns method calls into ledger transactions."""

from __future__ import annotations

from .contract import CaseConfig, Measurement, PerformanceContract, Role
from .ledger import Address, Ledger, Receipt, TxKind


class ContractClient:
    def __init__(self, ledger: Ledger, address: Address):
        self.ledger = ledger
        self.address = address

    @classmethod
    def deploy(cls, ledger: Ledger, deployer: Address) -> tuple[ContractClient, Receipt]:
        receipt = ledger.submit_transaction(deployer, TxKind.DEPLOY)
        return cls(ledger, receipt.result), receipt

    @property
    def contract(self) -> PerformanceContract:
        return self.ledger.contracts[self.address]

    def _call(self, sender: Address, kind: TxKind, payload: dict | None = None, value: int = 0) -> Receipt:
        return self.ledger.submit_transaction(sender, kind, payload, to=self.address, value=value)

    def add_role(self, caller: Address, grantee: Address, role: Role | str) -> Receipt:
        return self._call(caller, TxKind.ADD_ROLE, {"grantee": grantee.hex, "role": Role(role).value})

    def create_case(self, caller: Address, case: CaseConfig | dict) -> Receipt:
        payload = case.to_dict() if isinstance(case, CaseConfig) else case
        return self._call(caller, TxKind.CREATE_CASE, payload)

    def fund_escrow(self, caller: Address, amount: int) -> Receipt:
        return self._call(caller, TxKind.FUND_ESCROW, value=amount)

    def register_backend(self, caller: Address, backend: Address) -> Receipt:
        return self._call(caller, TxKind.REGISTER_BACKEND, {"backend": backend.hex})

    def submit_measurement(self, caller: Address, m: Measurement) -> Receipt:
        return self._call(caller, TxKind.SUBMIT_MEASUREMENT, m.to_payload())

    def evaluate(self, caller: Address) -> Receipt:
        return self._call(caller, TxKind.EVALUATE_INTERVAL)

    def redeem(self, caller: Address) -> Receipt:
        return self._call(caller, TxKind.REDEEM)

    def release_escrow(self, caller: Address) -> Receipt:
        return self._call(caller, TxKind.RELEASE_ESCROW)

    def deactivate(self, caller: Address) -> Receipt:
        return self._call(caller, TxKind.DEACTIVATE)

    def status(self, case_id: int = 1) -> dict:
        return self.contract.status(case_id)

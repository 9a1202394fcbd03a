"""Simulated performance-based contracts for buildings on a gas-metered ledger."""

from .client import ContractClient
from .contract import CaseConfig, IntervalResult, LifecycleState, Measurement, PerformanceContract, Role
from .costs import CostReport, cost_report
from .ledger import COIN, GIGA, Address, Ledger, Receipt, Rejected, Transaction, TxKind
from .metrics import Metric
from .perf import Baselines, ComfortBands, ContractorPolicy, Ratios, Tier

__all__ = [
    "Address",
    "Baselines",
    "COIN",
    "CaseConfig",
    "ComfortBands",
    "ContractClient",
    "ContractorPolicy",
    "CostReport",
    "GIGA",
    "IntervalResult",
    "Ledger",
    "LifecycleState",
    "Measurement",
    "Metric",
    "PerformanceContract",
    "Ratios",
    "Receipt",
    "Rejected",
    "Role",
    "Tier",
    "Transaction",
    "TxKind",
    "cost_report",
]

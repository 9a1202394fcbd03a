"""Gas and currency cost reporting over a transaction log."""

from __future__ import annotations

from collections.abc import Iterable
from dataclasses import dataclass
from decimal import ROUND_HALF_EVEN, Decimal
from fractions import Fraction

from .ledger import Ledger, Transaction, TxKind


@dataclass(frozen=True)
class CostReport:
    total_gas: int
    by_kind: dict[TxKind, int]
    gas_price_gwei: Decimal
    fiat_rate: Decimal
    coin_cost: Decimal  # 4 dp
    fiat_cost: Decimal  # 2 dp

    def share(self, kind: TxKind) -> float:
        return self.by_kind[kind] / self.total_gas if self.total_gas else 0.0

    def to_dict(self) -> dict:
        return {
            "total_gas": self.total_gas,
            "by_kind": {
                k.value: {"gas": g, "share": f"{self.share(k):.6f}"} for k, g in self.by_kind.items()
            },
            "gas_price_gwei": str(self.gas_price_gwei),
            "fiat_rate": str(self.fiat_rate),
            "coin_cost": str(self.coin_cost),
            "fiat_cost": str(self.fiat_cost),
        }

    def to_text(self) -> str:
        lines = [f"{'kind':<18} {'gas':>14} {'share':>9}"]
        for k, g in sorted(self.by_kind.items(), key=lambda kv: -kv[1]):
            lines.append(f"{k.value:<18} {g:>14,} {self.share(k):>9.2%}")
        lines += [
            f"{'total':<18} {self.total_gas:>14,}",
            f"gas price   {self.gas_price_gwei} gwei",
            f"coin cost   {self.coin_cost}",
            f"fiat rate   {self.fiat_rate}",
            f"fiat cost   {self.fiat_cost}",
        ]
        return "\n".join(lines)


def _quantize(x: Fraction, places: int) -> Decimal:
    exact = Decimal(x.numerator) / Decimal(x.denominator)
    return exact.quantize(Decimal(1).scaleb(-places), rounding=ROUND_HALF_EVEN)


def cost_report(
    log: Ledger | Iterable[Transaction],
    gas_price_gwei: Decimal | str | float,
    fiat_rate: Decimal | str | float,
) -> CostReport:
    """Price the log's total gas at a scalar gas price and coin rate.

    Prices are taken as decimals (floats go through ``str`` first) and the
    money is computed exactly, rounding only at the end.
    """
    txs = log.log if isinstance(log, Ledger) else log
    by_kind = {k: 0 for k in TxKind}
    for tx in txs:
        by_kind[tx.kind] += tx.gas_used
    total = sum(by_kind.values())
    price = Decimal(str(gas_price_gwei))
    rate = Decimal(str(fiat_rate))
    coin = Fraction(total) * Fraction(price) / 10**9
    return CostReport(
        total_gas=total,
        by_kind=by_kind,
        gas_price_gwei=price,
        fiat_rate=rate,
        coin_cost=_quantize(coin, 4),
        fiat_cost=_quantize(coin * Fraction(rate), 2),
    )

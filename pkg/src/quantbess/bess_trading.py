"""Quantile-based battery trading, the price-taker benchmark, and settlement.

The battery is a three-level block store (0 = empty, 1 = half, 2 = full).
Each trade moves one level: a buy purchases 1/0.9 MWh to charge one block, a
sell discharges one block and delivers 0.9 MWh.  Daily orders: a limit bid at
the lowest-median hour h1 priced at the upper PI bound, a limit offer at the
highest-median hour h2 priced at the lower PI bound, plus a forced unlimited
order when the day starts empty (buy) or full (sell).
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import StateInvariantError
from .eval_metrics import TradingHours, alpha_quantiles
from .prob_models import QuantileForecast, quantile_index

SELL_FACTOR = 0.9
BUY_FACTOR = 1.0 / 0.9

FORCED_SELL_MODES = ("before_h2", "before_h1")


@dataclass(frozen=True)
class StrategyConfig:
    """Strategy constants; defaults match the block-battery formulation."""

    alpha: float = 0.8
    sell_factor: float = SELL_FACTOR
    buy_factor: float = BUY_FACTOR
    capacity_mwh: float = 2.5
    transaction_limit_mwh: float = 1.0
    forced_sell_mode: str = "before_h2"

    def __post_init__(self):
        if self.forced_sell_mode not in FORCED_SELL_MODES:
            raise ValueError(f"forced_sell_mode must be one of {FORCED_SELL_MODES}")


@dataclass(frozen=True)
class BatteryState:
    level: int = 1

    def __post_init__(self):
        if self.level not in (0, 1, 2):
            raise StateInvariantError(f"battery level {self.level} outside {{0,1,2}}")


@dataclass(frozen=True)
class DailyOrders:
    """Orders submitted for one delivery day."""

    h1: int
    h2: int
    bid_price: float = np.inf      # buy limit at h1; +inf = unlimited
    offer_price: float = -np.inf   # sell limit at h2; -inf = unlimited
    bid_unlimited: bool = False
    offer_unlimited: bool = False
    bid_withdrawn: bool = False    # full battery, no forced sell placeable
    offer_withdrawn: bool = False  # empty battery, no forced buy placeable
    forced_buy_hour: int | None = None
    forced_sell_hour: int | None = None
    degenerate: bool = False       # flat-forecast day or unplaceable forced order


@dataclass(frozen=True)
class LedgerEntry:
    day: int
    orders: DailyOrders
    bid_accepted: bool
    offer_accepted: bool
    cash_flow: float
    volume_bought: float
    volume_sold: float
    start_level: int
    end_level: int


@dataclass
class TradeLedger:
    """Sequential per-day trade records for one strategy instance."""

    entries: list = field(default_factory=list)

    def append(self, entry: LedgerEntry) -> None:
        self.entries.append(entry)

    @property
    def total_cash(self) -> float:
        return sum(e.cash_flow for e in self.entries)

    @property
    def total_volume(self) -> float:
        return sum(e.volume_bought + e.volume_sold for e in self.entries)


def profit_per_mwh(ledger: TradeLedger) -> float:
    """Total cash flow divided by total traded volume (bought + sold)."""
    volume = ledger.total_volume
    if volume <= 0:
        raise ValueError("no traded volume; profit per MWh undefined")
    return ledger.total_cash / volume


def choose_hours(median_forecast) -> TradingHours:
    """h1 = earliest argmin, h2 = earliest argmax of the median forecast.

    On a flat forecast (argmin == argmax) h2 moves to the best hour distinct
    from h1.
    """
    values = np.asarray(median_forecast, dtype=float)
    if values.shape != (24,) or not np.isfinite(values).all():
        raise ValueError("median forecast must hold 24 finite values")
    h1 = int(np.argmin(values)) + 1
    h2 = int(np.argmax(values)) + 1
    if h1 == h2:
        rest = [h for h in range(1, 25) if h != h1]
        h2 = max(rest, key=lambda h: (values[h - 1], -h))
    return TradingHours(h1=h1, h2=h2)


def _best_forced_hour(values, before_hour, exclude, maximize):
    candidates = [h for h in range(1, before_hour) if h not in exclude]
    if not candidates:
        return None
    key = (lambda h: (values[h - 1], -h)) if maximize else (lambda h: (-values[h - 1], -h))
    return max(candidates, key=key)


def build_orders(
    qf_h1: QuantileForecast,
    qf_h2: QuantileForecast,
    state: BatteryState,
    median_forecast,
    alpha: float,
    config: StrategyConfig | None = None,
) -> DailyOrders:
    """Daily bid/offer from the PI bounds, plus forced orders at empty/full."""
    config = config or StrategyConfig(alpha=alpha)
    hours = TradingHours(h1=qf_h1.hour, h2=qf_h2.hour)
    lo, up = alpha_quantiles(alpha)
    bid = qf_h1.q_values[quantile_index(up)]
    offer = qf_h2.q_values[quantile_index(lo)]
    values = np.asarray(median_forecast, dtype=float)

    forced_buy = forced_sell = None
    bid_withdrawn = offer_withdrawn = False
    degenerate = False
    if state.level == 0:
        forced_buy = _best_forced_hour(values, hours.h2, {hours.h1}, maximize=False)
        if forced_buy is None:
            # Nothing to deliver at h2 without the forced charge.
            degenerate = offer_withdrawn = True
    elif state.level == 2:
        before = hours.h2 if config.forced_sell_mode == "before_h2" else hours.h1
        forced_sell = _best_forced_hour(values, before, {hours.h1, hours.h2}, maximize=True)
        if forced_sell is None:
            # No room to store the h1 purchase without the forced discharge.
            degenerate = bid_withdrawn = True
    return DailyOrders(
        h1=hours.h1, h2=hours.h2, bid_price=bid, offer_price=offer,
        bid_withdrawn=bid_withdrawn, offer_withdrawn=offer_withdrawn,
        forced_buy_hour=forced_buy, forced_sell_hour=forced_sell,
        degenerate=degenerate,
    )


def benchmark_orders(point_forecast) -> DailyOrders:
    """Price-taker benchmark: unlimited buy at the cheapest predicted hour,
    unlimited sell at the dearest; both always accepted."""
    hours = choose_hours(point_forecast)
    return DailyOrders(h1=hours.h1, h2=hours.h2, bid_unlimited=True, offer_unlimited=True)


def settle(
    orders: DailyOrders,
    prices,
    state: BatteryState,
    day: int = 0,
    config: StrategyConfig | None = None,
) -> LedgerEntry:
    """Settle one day against realized prices and return the ledger entry.

    A bid fills when the clearing price is at or below its limit; an offer
    fills at or above its limit.  Forced orders always fill (price takers).
    """
    config = config or StrategyConfig()
    prices = np.asarray(prices, dtype=float)
    if prices.shape != (24,):
        raise ValueError("prices must hold 24 hours")
    p_h1, p_h2 = prices[orders.h1 - 1], prices[orders.h2 - 1]
    bid_accepted = not orders.bid_withdrawn and (
        orders.bid_unlimited or p_h1 <= orders.bid_price
    )
    offer_accepted = not orders.offer_withdrawn and (
        orders.offer_unlimited or p_h2 >= orders.offer_price
    )

    cash = 0.0
    bought = sold = 0.0
    level = state.level
    if orders.forced_buy_hour is not None:
        cash -= config.buy_factor * prices[orders.forced_buy_hour - 1]
        bought += config.buy_factor
        level += 1
    if orders.forced_sell_hour is not None:
        cash += config.sell_factor * prices[orders.forced_sell_hour - 1]
        sold += config.sell_factor
        level -= 1
    if bid_accepted:
        cash -= config.buy_factor * p_h1
        bought += config.buy_factor
        level += 1
    if offer_accepted:
        cash += config.sell_factor * p_h2
        sold += config.sell_factor
        level -= 1
    if level not in (0, 1, 2):
        raise StateInvariantError(
            f"day {day}: battery level {level} outside {{0,1,2}} "
            f"(start {state.level}, orders {orders})"
        )
    return LedgerEntry(
        day=day, orders=orders,
        bid_accepted=bool(bid_accepted), offer_accepted=bool(offer_accepted),
        cash_flow=cash, volume_bought=bought, volume_sold=sold,
        start_level=state.level, end_level=level,
    )


LEDGER_COLUMNS = (
    "day", "h1", "h2", "bid_price", "offer_price", "bid_accepted",
    "offer_accepted", "forced_buy_hour", "forced_sell_hour", "cash_flow",
    "volume_bought", "volume_sold", "start_level", "end_level",
)


def ledger_rows(ledger: TradeLedger):
    for e in ledger.entries:
        o = e.orders
        yield (
            e.day, o.h1, o.h2, o.bid_price, o.offer_price,
            int(e.bid_accepted), int(e.offer_accepted),
            "" if o.forced_buy_hour is None else o.forced_buy_hour,
            "" if o.forced_sell_hour is None else o.forced_sell_hour,
            repr(float(e.cash_flow)), repr(float(e.volume_bought)), repr(float(e.volume_sold)),
            e.start_level, e.end_level,
        )


def export_ledger(ledger: TradeLedger, path, extra=None) -> None:
    """CSV dump of a single ledger; `extra` prepends constant columns."""
    extra = extra or {}
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([*extra.keys(), *LEDGER_COLUMNS])
        for row in ledger_rows(ledger):
            writer.writerow([*extra.values(), *row])

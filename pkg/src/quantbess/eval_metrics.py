"""Pinball loss, coverage indicators and the six daily model-ranking scores.

Ranking scores per (day, model, alpha):

* pinball_all      -- mean pinball over all 24 hours and 99 quantiles
* pinball_buysell  -- mean of pinball_buy and pinball_sell
* pinball_sell     -- pinball at quantile (1-alpha)/2, highest-price hour h2
* pinball_buy      -- pinball at quantile (1+alpha)/2, lowest-price hour h1
* coverage_all     -- mean interval hit rate over the 24 hours (closed bounds)
* coverage_hours   -- joint hit of the two trading quantiles, with strict
  inequalities (deliberately asymmetric with coverage_all)
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .prob_models import QUANTILE_GRID, QuantileForecast, quantile_index

METRICS = (
    "pinball_all",
    "pinball_buysell",
    "pinball_sell",
    "pinball_buy",
    "coverage_all",
    "coverage_hours",
)

#: Even alpha grid keeping (1 +/- alpha)/2 on the 1% quantile grid.
DEFAULT_ALPHAS = tuple(np.round(np.arange(50, 99, 2) / 100.0, 2))


@dataclass(frozen=True)
class TradingHours:
    """Lowest- (h1) and highest- (h2) median-forecast hours of a day."""

    h1: int
    h2: int

    def __post_init__(self):
        if not (1 <= self.h1 <= 24 and 1 <= self.h2 <= 24):
            raise ValueError("hours must be in 1..24")
        if self.h1 == self.h2:
            raise ValueError("h1 and h2 must differ")


@dataclass(frozen=True)
class DailySpScores:
    """All six ranking scores for one (day, model, alpha)."""

    day: int
    model_id: str
    alpha: float
    pinball_all: float
    pinball_buysell: float
    pinball_sell: float
    pinball_buy: float
    coverage_all: float
    coverage_hours: float

    def __post_init__(self):
        if not 0.0 <= self.coverage_all <= 1.0:
            raise ValueError("coverage_all must lie in [0, 1]")
        if self.coverage_hours not in (0.0, 1.0):
            raise ValueError("coverage_hours must be 0 or 1")
        for name in ("pinball_all", "pinball_buysell", "pinball_sell", "pinball_buy"):
            if getattr(self, name) < -1e-12:
                raise ValueError(f"{name} must be non-negative")

    def get(self, metric: str) -> float:
        return getattr(self, metric)


def alpha_quantiles(alpha: float) -> tuple[float, float]:
    """The (lower, upper) PI quantiles (1-alpha)/2 and (1+alpha)/2, grid-checked."""
    lo, up = (1.0 - alpha) / 2.0, (1.0 + alpha) / 2.0
    lo_r, up_r = round(lo, 2), round(up, 2)
    if abs(lo - lo_r) > 1e-9 or abs(up - up_r) > 1e-9:
        raise ValueError(f"alpha {alpha} puts a PI bound off the 1% quantile grid")
    quantile_index(lo_r)
    quantile_index(up_r)
    return lo_r, up_r


def pinball(q: float, price, forecast_q):
    """Asymmetric quantile score; zero iff forecast equals the price."""
    if not 0.0 < q < 1.0:
        raise ValueError(f"q must be in (0, 1), got {q}")
    price = np.asarray(price, dtype=float)
    forecast_q = np.asarray(forecast_q, dtype=float)
    diff = price - forecast_q
    out = np.where(diff < 0, (q - 1.0) * diff, q * diff)
    return float(out) if out.ndim == 0 else out


def pi_hit(price: float, lower: float, upper: float) -> int:
    """1 iff the price falls inside the closed interval [lower, upper]."""
    if lower > upper:
        raise ValueError(f"lower bound {lower} exceeds upper bound {upper}")
    return int(lower <= price <= upper)


def forecast_matrix(forecasts) -> np.ndarray:
    """Stack a day's forecasts into (24, 99); accepts an array or 24 QuantileForecast."""
    if isinstance(forecasts, np.ndarray):
        if forecasts.shape != (24, 99):
            raise ValueError("forecast matrix must have shape (24, 99)")
        return forecasts
    forecasts = list(forecasts)
    if len(forecasts) != 24:
        raise ValueError(f"need all 24 hourly forecasts, got {len(forecasts)}")
    return np.vstack([
        fc.q_values if isinstance(fc, QuantileForecast) else np.asarray(fc)
        for fc in forecasts
    ])


def sp_pinball_all(forecasts, prices) -> float:
    """Mean pinball over the full 24 x 99 grid of one day."""
    qf = forecast_matrix(forecasts)
    prices = np.asarray(prices, dtype=float)
    if prices.shape != (24,):
        raise ValueError("prices must hold all 24 hours")
    diff = prices[:, None] - qf
    losses = np.where(diff < 0, (QUANTILE_GRID - 1.0) * diff, QUANTILE_GRID * diff)
    return float(losses.mean())


def sp_pinball_buy(fc_h1: QuantileForecast, price_h1: float, alpha: float) -> float:
    _, up = alpha_quantiles(alpha)
    return pinball(up, price_h1, fc_h1.value(up))


def sp_pinball_sell(fc_h2: QuantileForecast, price_h2: float, alpha: float) -> float:
    lo, _ = alpha_quantiles(alpha)
    return pinball(lo, price_h2, fc_h2.value(lo))


def sp_pinball_buysell(fc_h1, fc_h2, price_h1, price_h2, alpha) -> float:
    return 0.5 * (
        sp_pinball_buy(fc_h1, price_h1, alpha) + sp_pinball_sell(fc_h2, price_h2, alpha)
    )


def sp_coverage_all(forecasts, prices, alpha: float) -> float:
    """Mean closed-interval hit rate of the day's 24 prediction intervals."""
    qf = forecast_matrix(forecasts)
    prices = np.asarray(prices, dtype=float)
    lo, up = alpha_quantiles(alpha)
    lower = qf[:, quantile_index(lo)]
    upper = qf[:, quantile_index(up)]
    return float(np.mean((lower <= prices) & (prices <= upper)))


def sp_coverage_hours(fc_h1, fc_h2, price_h1, price_h2, alpha) -> int:
    """Joint strict hit of the bid and offer quantiles (1 or 0)."""
    lo, up = alpha_quantiles(alpha)
    return int(price_h1 < fc_h1.value(up) and price_h2 > fc_h2.value(lo))


def daily_scores(day, model_id, forecasts, prices, hours: TradingHours, alpha) -> DailySpScores:
    """All six scores for one model-day at one alpha."""
    qf = forecast_matrix(forecasts)
    prices = np.asarray(prices, dtype=float)
    fc1 = QuantileForecast(day=day, hour=hours.h1, q_values=qf[hours.h1 - 1])
    fc2 = QuantileForecast(day=day, hour=hours.h2, q_values=qf[hours.h2 - 1])
    p1, p2 = prices[hours.h1 - 1], prices[hours.h2 - 1]
    buy = sp_pinball_buy(fc1, p1, alpha)
    sell = sp_pinball_sell(fc2, p2, alpha)
    return DailySpScores(
        day=day,
        model_id=model_id,
        alpha=alpha,
        pinball_all=sp_pinball_all(qf, prices),
        pinball_buysell=0.5 * (buy + sell),
        pinball_sell=sell,
        pinball_buy=buy,
        coverage_all=sp_coverage_all(qf, prices, alpha),
        coverage_hours=float(sp_coverage_hours(fc1, fc2, p1, p2, alpha)),
    )

"""Per-hour autoregressive expert model for point price forecasts.

Each hour gets its own linear regression on lagged prices, previous-day
extremes, the end-of-day price, the load forecast and seven weekday dummies
(14 coefficients; the dummies span the intercept).  A pool of variants is
produced by calibrating the same model on several window lengths.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import CalibrationError, InsufficientDataError
from .market_data import MarketSeries, WindowView, window

#: Days of history needed before features exist (one-week lag).
FEATURE_LAG = 7

#: Minimum usable days in a calibration window after lag trimming.
MIN_CALIBRATION_DAYS = 30

N_COEFFICIENTS = 14

FEATURE_NAMES = (
    "y_lag1", "y_lag2", "y_lag7", "y_eod", "y_max_prev", "y_min_prev", "load",
    "wd1", "wd2", "wd3", "wd4", "wd5", "wd6", "wd7",
)

#: Window lengths for the default forecast-pool committee.
DEFAULT_POOL_WINDOWS = (56, 84, 112, 182, 364)

_RIDGE_EPS = 1e-8


@dataclass(frozen=True)
class ExpertFeatures:
    """Regressor values for one (day, hour)."""

    y_lag1: float
    y_lag2: float
    y_lag7: float
    y_eod: float
    y_max_prev: float
    y_min_prev: float
    load: float
    weekday: np.ndarray  # seven 0/1 indicators

    def __post_init__(self):
        weekday = np.asarray(self.weekday, dtype=float)
        if weekday.shape != (7,) or int(weekday.sum()) != 1 or not np.isin(weekday, (0.0, 1.0)).all():
            raise ValueError("weekday must be a one-hot vector of length 7")
        if self.y_max_prev < self.y_min_prev:
            raise ValueError("y_max_prev must be >= y_min_prev")
        object.__setattr__(self, "weekday", weekday)

    def vector(self) -> np.ndarray:
        return np.concatenate((
            [self.y_lag1, self.y_lag2, self.y_lag7, self.y_eod,
             self.y_max_prev, self.y_min_prev, self.load],
            self.weekday,
        ))


@dataclass(frozen=True)
class ExpertModelParams:
    """Fitted coefficients of the hourly expert model."""

    hour: int
    coefficients: np.ndarray  # (14,)
    calibration_window_length: int

    def __post_init__(self):
        coefficients = np.asarray(self.coefficients, dtype=float)
        if coefficients.shape != (N_COEFFICIENTS,):
            raise ValueError(f"expected {N_COEFFICIENTS} coefficients")
        if not np.isfinite(coefficients).all():
            raise ValueError("coefficients must be finite")
        if not 1 <= self.hour <= 24:
            raise ValueError("hour must be in 1..24")
        object.__setattr__(self, "coefficients", coefficients)


@dataclass(frozen=True)
class PointForecastSet:
    """Point forecasts for one day from every pool variant (n_variants x 24)."""

    day: int
    window_lengths: tuple
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (len(self.window_lengths), 24):
            raise ValueError("values must have shape (n_variants, 24)")
        if not np.isfinite(values).all():
            raise ValueError("forecasts must be finite")
        object.__setattr__(self, "values", values)

    def variant(self, window_length: int) -> np.ndarray:
        idx = self.window_lengths.index(window_length)
        return self.values[idx]


def build_features(series: MarketSeries, d: int, h: int) -> ExpertFeatures:
    """Assemble the regressors for forecasting day d, hour h."""
    if d < FEATURE_LAG:
        raise InsufficientDataError(
            f"day {d} lacks one-week history (need d >= {FEATURE_LAG})"
        )
    if d >= series.n_days:
        raise IndexError(f"day {d} outside series of {series.n_days} days")
    p = series.prices
    return ExpertFeatures(
        y_lag1=p[d - 1, h - 1],
        y_lag2=p[d - 2, h - 1],
        y_lag7=p[d - 7, h - 1],
        y_eod=p[d - 1, 23],
        y_max_prev=p[d - 1].max(),
        y_min_prev=p[d - 1].min(),
        load=series.loads[d, h - 1],
        weekday=series.weekday_dummies(d),
    )


def _design(series: MarketSeries, days: np.ndarray, h: int) -> np.ndarray:
    """Vectorized feature matrix for an array of days (all must be >= 7)."""
    p = series.prices
    X = np.empty((days.size, N_COEFFICIENTS))
    X[:, 0] = p[days - 1, h - 1]
    X[:, 1] = p[days - 2, h - 1]
    X[:, 2] = p[days - 7, h - 1]
    X[:, 3] = p[days - 1, 23]
    X[:, 4] = p[days - 1].max(axis=1)
    X[:, 5] = p[days - 1].min(axis=1)
    X[:, 6] = series.loads[days, h - 1]
    X[:, 7:] = 0.0
    wd = np.asarray(series.weekday(days)) - 1
    X[np.arange(days.size), 7 + wd] = 1.0
    return X


def calibrate(win: WindowView, h: int) -> ExpertModelParams:
    """Least-squares fit of the 14 coefficients over the window, for hour h.

    Days without full lag history are trimmed from the window.  On a
    rank-deficient design a trace-scaled ridge term keeps the fit defined.
    """
    days = win.days()
    days = days[days >= FEATURE_LAG]
    if days.size < MIN_CALIBRATION_DAYS:
        raise InsufficientDataError(
            f"{days.size} usable days in window; need >= {MIN_CALIBRATION_DAYS}"
        )
    X = _design(win.series, days, h)
    y = win.series.prices[days, h - 1]
    beta, _, rank, _ = np.linalg.lstsq(X, y, rcond=None)
    if rank < N_COEFFICIENTS:
        # Column-proportional ridge keeps the bias at ~1e-8 relative per
        # column regardless of scale differences (load vs dummies).
        gram = X.T @ X
        col_sq = np.diag(gram).copy()
        if not (col_sq > 0).any() or not np.isfinite(col_sq).all():
            raise CalibrationError(f"hour {h}: design matrix degenerate beyond repair")
        col_sq[col_sq <= 0] = col_sq[col_sq > 0].min()
        try:
            beta = np.linalg.solve(gram + _RIDGE_EPS * np.diag(col_sq), X.T @ y)
        except np.linalg.LinAlgError as exc:
            raise CalibrationError(f"hour {h}: ridge fallback failed") from exc
    if not np.isfinite(beta).all():
        raise CalibrationError(f"hour {h}: non-finite coefficients")
    return ExpertModelParams(hour=h, coefficients=beta, calibration_window_length=win.length)


def predict(params: ExpertModelParams, features: ExpertFeatures) -> float:
    return float(params.coefficients @ features.vector())


def predict_day(series: MarketSeries, d: int, params_by_hour) -> np.ndarray:
    """Forecast all 24 hours of day d given per-hour fitted parameters."""
    out = np.empty(24)
    for h in range(1, 25):
        X = _design(series, np.array([d]), h)
        out[h - 1] = X[0] @ params_by_hour[h - 1].coefficients
    return out


def forecast_pool(series: MarketSeries, d: int, window_lengths=DEFAULT_POOL_WINDOWS):
    """Point forecasts for day d from the model calibrated on each window length.

    Returns (PointForecastSet, failures) where failures maps a dropped window
    length to the error that removed it.
    """
    window_lengths = tuple(window_lengths)
    if not window_lengths:
        raise ValueError("window_lengths must be non-empty")
    if d < max(window_lengths):
        raise InsufficientDataError(
            f"day {d} precedes the longest calibration window ({max(window_lengths)})"
        )
    rows, kept, failures = [], [], {}
    for length in window_lengths:
        try:
            win = window(series, d - 1, length)
            params = [calibrate(win, h) for h in range(1, 25)]
            rows.append(predict_day(series, d, params))
            kept.append(length)
        except (CalibrationError, InsufficientDataError) as exc:
            failures[length] = exc
    if not rows:
        raise CalibrationError(f"day {d}: every pool variant failed: {failures}")
    return (
        PointForecastSet(day=d, window_lengths=tuple(kept), values=np.vstack(rows)),
        failures,
    )


def dump_coefficients(path, fitted, delimiter: str = ",") -> None:
    """Diagnostic CSV of fitted coefficients.

    `fitted` is an iterable of ExpertModelParams.
    """
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, delimiter=delimiter)
        writer.writerow(["hour", "window_length", *FEATURE_NAMES])
        for params in fitted:
            writer.writerow(
                [params.hour, params.calibration_window_length, *params.coefficients]
            )

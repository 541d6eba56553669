"""Rolling score histories and best-model selection per ranking metric.

Pinball metrics rank by lowest average.  Coverage metrics rank by proximity
to a nominal target: alpha for coverage_all, ((1+alpha)/2)^2 for
coverage_hours (joint probability of the two trading-quantile conditions
under independence).  A "maximize" mode for coverage_hours is available as
well.  Ties break by registry order.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InsufficientDataError
from .eval_metrics import METRICS, DailySpScores

DEFAULT_METRIC_WINDOW = 30

COVERAGE_MODES = ("target", "maximize")


@dataclass
class MetricSeries:
    """Daily score history for one (model, metric, alpha)."""

    model_id: str
    metric: str
    alpha: float
    scores: dict = field(default_factory=dict)  # day -> value

    def add(self, day: int, value: float) -> None:
        if day in self.scores:
            raise ValueError(f"duplicate score for day {day}")
        self.scores[day] = float(value)


@dataclass(frozen=True)
class SelectionOutcome:
    """Result of one selection: the chosen model plus the full score table."""

    day: int
    metric: str
    alpha: float
    chosen_model: str
    score_table: dict  # model -> rolling average


def rolling_average(series: MetricSeries, end_day: int, window: int = DEFAULT_METRIC_WINDOW) -> float:
    """Mean of the `window` daily scores ending at `end_day` (inclusive)."""
    days = range(end_day - window + 1, end_day + 1)
    try:
        values = [series.scores[d] for d in days]
    except KeyError as exc:
        raise InsufficientDataError(
            f"{series.model_id}/{series.metric}: missing score for day {exc.args[0]} "
            f"in window ending {end_day}"
        ) from None
    return float(np.mean(values))


def coverage_hours_target(alpha: float) -> float:
    return ((1.0 + alpha) / 2.0) ** 2


def select_best(
    averages: dict,
    metric: str,
    alpha: float,
    registry_order=None,
    coverage_mode: str = "target",
) -> str:
    """Best model under the metric's ordering; ties break by registry order."""
    if metric not in METRICS:
        raise ValueError(f"unknown metric {metric!r}")
    if coverage_mode not in COVERAGE_MODES:
        raise ValueError(f"unknown coverage mode {coverage_mode!r}")
    if not averages:
        raise ValueError("empty score table")
    order = list(registry_order) if registry_order is not None else list(averages)
    candidates = [m for m in order if m in averages]
    if not candidates:
        raise ValueError("no model in the registry has a valid average")

    if metric.startswith("pinball"):
        key = lambda m: averages[m]
    elif metric == "coverage_all":
        key = lambda m: abs(averages[m] - alpha)
    elif coverage_mode == "target":
        target = coverage_hours_target(alpha)
        key = lambda m: abs(averages[m] - target)
    else:  # maximize coverage_hours
        key = lambda m: -averages[m]
    best = candidates[0]
    for m in candidates[1:]:
        if key(m) < key(best):
            best = m
    return best


class ScoreStore:
    """Append-only store of daily scores for all (model, metric, alpha) triples.

    Single writer (the backtest loop); reads are pure.
    """

    def __init__(self, registry_order, alphas):
        self.registry_order = tuple(registry_order)
        self.alphas = tuple(alphas)
        self._series = {
            (model, metric, alpha): MetricSeries(model, metric, alpha)
            for model in self.registry_order
            for metric in METRICS
            for alpha in self.alphas
        }

    def add_scores(self, scores: DailySpScores) -> None:
        for metric in METRICS:
            self._series[(scores.model_id, metric, scores.alpha)].add(
                scores.day, scores.get(metric)
            )

    def series(self, model: str, metric: str, alpha: float) -> MetricSeries:
        return self._series[(model, metric, alpha)]

    def averages(self, metric: str, alpha: float, end_day: int, window: int = DEFAULT_METRIC_WINDOW) -> dict:
        return {
            model: rolling_average(self._series[(model, metric, alpha)], end_day, window)
            for model in self.registry_order
        }

    def select(
        self,
        metric: str,
        alpha: float,
        end_day: int,
        window: int = DEFAULT_METRIC_WINDOW,
        coverage_mode: str = "target",
    ) -> SelectionOutcome:
        averages = self.averages(metric, alpha, end_day, window)
        chosen = select_best(averages, metric, alpha, self.registry_order, coverage_mode)
        return SelectionOutcome(
            day=end_day, metric=metric, alpha=alpha,
            chosen_model=chosen, score_table=averages,
        )

"""Threshold portfolios on social-media features.

A strategy buys a fixed dollar amount of every topic whose feature value is at
least the threshold, one month after the topic's creation, and sells after a
fixed holding time.  With equal positions the portfolio return is the plain
mean of the trade returns.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import date, timedelta
from typing import Iterable, Mapping, Optional, Sequence

from engage.analytics import MONTH_DAYS, PriceSeries, percent_change, reference_date
from engage.features import FEATURE_NAMES, FeatureTable

QUANTILES = (25, 50, 75, 100)


class ThresholdUnavailable(ValueError):
    pass


def nearest_rank(values: Sequence[float], q: float) -> float:
    """Value at 1-based rank ``ceil(q * n / 100)`` of the sorted sample."""
    xs = sorted(values)
    if not xs:
        raise ValueError("empty sample")
    if q <= 0:
        return xs[0]
    rank = math.ceil(q * len(xs) / 100)
    return xs[min(rank, len(xs)) - 1]


def quartile_thresholds(values: Sequence[float]) -> list[float]:
    """Baseline 0 followed by the 25/50/75/100th nearest-rank percentiles."""
    if len(values) < 4:
        raise ValueError(f"need at least 4 values for quartile thresholds, got {len(values)}")
    return [0.0] + [nearest_rank(values, q) for q in QUANTILES]


@dataclass(frozen=True)
class StrategySpec:
    feature_name: str
    threshold: float
    holding_months: int = 1
    investment_date: Optional[date] = None
    direction: str = "minimum"

    def __post_init__(self):
        if self.feature_name not in FEATURE_NAMES:
            raise ValueError(f"unknown feature {self.feature_name!r}")
        if self.holding_months < 1:
            raise ValueError("holding_months must be >= 1")
        if not self.threshold >= 0:
            raise ValueError("threshold must be >= 0")
        if self.direction != "minimum":
            raise ValueError("only minimum-threshold strategies are supported")


@dataclass(frozen=True)
class Trade:
    topic_id: str
    buy_date: date
    sell_date: date
    percent_return: float


@dataclass
class BacktestResult:
    spec: StrategySpec
    trades: list[Trade] = field(default_factory=list)
    skipped: list[tuple[str, str]] = field(default_factory=list)

    @property
    def portfolio_return(self) -> Optional[float]:
        """Mean trade return; None for an empty portfolio."""
        if not self.trades:
            return None
        return math.fsum(t.percent_return for t in self.trades) / len(self.trades)

    @property
    def empty(self) -> bool:
        return not self.trades


def run_threshold_backtest(features: FeatureTable, prices: Mapping[str, PriceSeries],
                           spec: StrategySpec,
                           universe: Iterable[str] | None = None) -> BacktestResult:
    """Trade every topic with ``feature >= spec.threshold``.

    ``universe`` restricts the candidate topics (all topics by default).
    """
    values = features.values(spec.feature_name)
    created = features.creation_dates()
    candidates = sorted(values if universe is None else set(universe) & set(values))
    result = BacktestResult(spec)
    hold = timedelta(days=MONTH_DAYS * spec.holding_months)
    for t in candidates:
        v = values[t]
        if v is None:
            result.skipped.append((t, "no feature value"))
            continue
        if v < spec.threshold:
            continue
        buy = reference_date(created[t])
        sell = buy + hold
        series = prices.get(t)
        p_buy = series.price_at(buy) if series else None
        if p_buy is None:
            result.skipped.append((t, "no buy price"))
            continue
        p_sell = series.price_at(sell)
        if p_sell is None:
            result.skipped.append((t, "no sell price"))
            continue
        result.trades.append(Trade(t, buy, sell, percent_change(p_buy, p_sell)))
    return result


def run_historical_backtest(features: FeatureTable, prices: Mapping[str, PriceSeries],
                            feature_name: str, quantile: int, holding_months: int,
                            investment_date: date) -> BacktestResult:
    """Threshold from topics created before ``investment_date``, traded on the rest.

    Topics created on or after the investment date form the portfolio
    universe.
    """
    values = features.values(feature_name)
    created = features.creation_dates()
    prior = [v for t, v in values.items() if created[t] < investment_date and v is not None]
    if len(prior) < 4:
        raise ThresholdUnavailable(
            f"{len(prior)} topics with {feature_name} created before {investment_date}; need 4")
    threshold = nearest_rank(prior, quantile)
    spec = StrategySpec(feature_name, threshold, holding_months, investment_date)
    after = [t for t in values if created[t] >= investment_date]
    return run_threshold_backtest(features, prices, spec, universe=after)


def threshold_grid(features: FeatureTable, prices: Mapping[str, PriceSeries],
                   holding_months: Sequence[int],
                   feature_names: Sequence[str] = FEATURE_NAMES) -> list[BacktestResult]:
    """Every feature x quartile threshold x holding time; features with fewer
    than four defined values are left out."""
    out = []
    for name in feature_names:
        defined = [v for v in features.values(name).values() if v is not None]
        if len(defined) < 4:
            continue
        for threshold in quartile_thresholds(defined):
            for h in holding_months:
                out.append(run_threshold_backtest(
                    features, prices, StrategySpec(name, threshold, h)))
    return out

"""Returns, rank-based dependence metrics and per-cluster return curves."""
from __future__ import annotations

import bisect
import statistics
from dataclasses import dataclass
from datetime import date, timedelta
from typing import TYPE_CHECKING, Iterable, Mapping, Optional, Sequence

import numpy as np
from scipy.stats import rankdata

if TYPE_CHECKING:
    from engage.features import BotClustering, FeatureTable

MONTH_DAYS = 30
LOOKBACK_DAYS = 7
DEFAULT_HORIZONS = tuple(range(1, 13))


class UndefinedStatistic(ValueError):
    """Correlation or AUC requested on degenerate input."""


@dataclass(frozen=True)
class PriceSeries:
    topic_id: str
    dates: tuple[date, ...]
    prices: tuple[float, ...]

    def __post_init__(self):
        if len(self.dates) != len(self.prices):
            raise ValueError("dates and prices differ in length")
        if any(b <= a for a, b in zip(self.dates, self.dates[1:])):
            raise ValueError(f"{self.topic_id}: dates must be strictly increasing")
        if any(not p > 0 for p in self.prices):
            raise ValueError(f"{self.topic_id}: prices must be positive")

    @classmethod
    def from_pairs(cls, topic_id: str, pairs: Iterable[tuple[date, float]]):
        pairs = sorted(pairs)
        return cls(topic_id, tuple(d for d, _ in pairs), tuple(float(p) for _, p in pairs))

    def price_at(self, day: date, lookback_days: int = LOOKBACK_DAYS) -> Optional[float]:
        """Last observed price on or before ``day``, at most ``lookback_days`` old."""
        i = bisect.bisect_right(self.dates, day) - 1
        if i < 0 or (day - self.dates[i]).days > lookback_days:
            return None
        return self.prices[i]

    def scaled(self, factor: float) -> "PriceSeries":
        return PriceSeries(self.topic_id, self.dates, tuple(p * factor for p in self.prices))


def reference_date(creation_date: date) -> date:
    """End of the observation month: returns are measured from here."""
    return creation_date + timedelta(days=MONTH_DAYS)


def horizon_date(creation_date: date, horizon_months: int) -> date:
    return reference_date(creation_date) + timedelta(days=MONTH_DAYS * horizon_months)


def percent_change(p_from: float, p_to: float) -> float:
    # difference first: exact for nearby prices, so +x% and -x% cancel
    return 100.0 * ((p_to - p_from) / p_from)


def compute_return(series: PriceSeries | None, creation_date: date,
                   horizon_months: int) -> Optional[float]:
    """Percent return from one month after creation to ``horizon_months`` later.

    Returns None when either price cannot be resolved within the lookback.
    """
    if horizon_months < 1:
        raise ValueError("horizon_months must be >= 1")
    if series is None or not series.dates:
        return None
    p_ref = series.price_at(reference_date(creation_date))
    p_tgt = series.price_at(horizon_date(creation_date, horizon_months))
    if p_ref is None or p_tgt is None:
        return None
    return percent_change(p_ref, p_tgt)


@dataclass(frozen=True)
class ReturnMatrix:
    """Percent return per topic and horizon; missing cells are None."""

    cells: Mapping[str, Mapping[int, Optional[float]]]
    horizons: tuple[int, ...] = DEFAULT_HORIZONS

    def get(self, topic_id: str, horizon: int) -> Optional[float]:
        return self.cells.get(topic_id, {}).get(horizon)

    def column(self, horizon: int) -> dict[str, Optional[float]]:
        return {t: row.get(horizon) for t, row in self.cells.items()}


def build_return_matrix(creation_dates: Mapping[str, date],
                        prices: Mapping[str, PriceSeries],
                        horizons: Sequence[int] = DEFAULT_HORIZONS) -> ReturnMatrix:
    cells = {
        t: {h: compute_return(prices.get(t), created, h) for h in horizons}
        for t, created in sorted(creation_dates.items())
    }
    return ReturnMatrix(cells, tuple(horizons))


# -- rank statistics ---------------------------------------------------------

def spearman(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Spearman's rho: Pearson correlation of average ranks."""
    if len(xs) != len(ys):
        raise ValueError("xs and ys differ in length")
    if len(xs) < 2:
        raise UndefinedStatistic("need at least two observations")
    rx = rankdata(xs, method="average")
    ry = rankdata(ys, method="average")
    dx = rx - rx.mean()
    dy = ry - ry.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        raise UndefinedStatistic("correlation undefined for constant input")
    rho = float(dx @ dy) / np.sqrt(sxx * syy)
    return float(min(1.0, max(-1.0, rho)))


def roc_auc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """Area under the ROC curve, ties counted as one half.

    Uses the Mann-Whitney rank-sum identity with average ranks, so the
    result equals exhaustive pair counting.
    """
    if len(scores) != len(labels):
        raise ValueError("scores and labels differ in length")
    y = np.asarray(labels)
    if not np.isin(y, (0, 1)).all():
        raise ValueError("labels must be 0 or 1")
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedStatistic("AUC undefined with a single class")
    ranks = rankdata(scores, method="average")
    u = float(ranks[y == 1].sum()) - n_pos * (n_pos + 1) / 2
    return u / (n_pos * n_neg)


# -- dependence curves -----------------------------------------------------

@dataclass(frozen=True)
class DependenceCell:
    feature: str
    horizon_months: int
    abs_spearman: Optional[float]
    auc: Optional[float]
    n_topics: int


def _paired(feature: Mapping[str, Optional[float]], ret: Mapping[str, Optional[float]]):
    topics = sorted(t for t in feature if feature[t] is not None and ret.get(t) is not None)
    return [float(feature[t]) for t in topics], [ret[t] for t in topics]


def dependence_curves(features: "FeatureTable", returns: ReturnMatrix,
                      feature_names: Sequence[str] | None = None) -> list[DependenceCell]:
    """|Spearman| and sign-of-return AUC per feature and horizon.

    A topic enters a cell only if both its feature value and its return are
    defined.  Label 1 means a strictly positive return.
    """
    from engage.features import FEATURE_NAMES

    out = []
    for name in feature_names or FEATURE_NAMES:
        values = features.values(name)
        for h in returns.horizons:
            xs, rs = _paired(values, returns.column(h))
            rho = auc = None
            if len(xs) >= 2:
                try:
                    rho = abs(spearman(xs, rs))
                except UndefinedStatistic:
                    pass
                try:
                    auc = roc_auc(xs, [int(r > 0) for r in rs])
                except UndefinedStatistic:
                    pass
            out.append(DependenceCell(name, h, rho, auc, len(xs)))
    return out


@dataclass(frozen=True)
class ClusterReturn:
    cluster: int
    center: float
    horizon_months: int
    median_return: Optional[float]
    n_topics: int


def median_cluster_returns(clustering: "BotClustering",
                           returns: ReturnMatrix) -> list[ClusterReturn]:
    out = []
    for c, center in enumerate(clustering.centers):
        members = sorted(t for t, a in clustering.assignment.items() if a == c)
        for h in returns.horizons:
            vals = [r for r in (returns.get(t, h) for t in members) if r is not None]
            med = statistics.median(vals) if vals else None
            out.append(ClusterReturn(c, center, h, med, len(vals)))
    return out

"""Per-topic social-media features and bot-probability clustering."""
from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass
from datetime import date, datetime
from typing import Mapping, Optional, Sequence

import numpy as np

from engage.corpus import Corpus, InteractionKindSet, build_dataset, first_month_window
from engage.engagement import FitError, FitReport, fit_closed_form

log = logging.getLogger(__name__)

IN_SAMPLE = "in_sample"
PRIOR_DATA = "prior_data"
MODES = (IN_SAMPLE, PRIOR_DATA)

FEATURE_NAMES = ("engagement", "volume", "bot_probability")
_FEATURE_ATTR = {
    "engagement": "engagement_coefficient",
    "volume": "tweet_volume",
    "bot_probability": "mean_bot_probability",
}
MANIPULATION_THRESHOLD = 1e-3


@dataclass(frozen=True)
class FeatureRow:
    topic_id: str
    creation_date: date
    engagement_coefficient: Optional[float]
    tweet_volume: int
    mean_bot_probability: Optional[float]
    estimation_mode: str
    note: str = ""

    @property
    def manipulation_flag(self) -> bool:
        """Informational: engagement above 1e-3 suggests artificial interactions."""
        e = self.engagement_coefficient
        return e is not None and e > MANIPULATION_THRESHOLD


@dataclass(frozen=True)
class FeatureTable:
    rows: Mapping[str, FeatureRow]
    estimation_mode: str

    def values(self, feature_name: str) -> dict[str, Optional[float]]:
        attr = _FEATURE_ATTR[feature_name]
        return {t: getattr(r, attr) for t, r in sorted(self.rows.items())}

    def creation_dates(self) -> dict[str, date]:
        return {t: r.creation_date for t, r in sorted(self.rows.items())}

    def records(self) -> list[dict]:
        return [
            {
                "topic_id": r.topic_id,
                "creation_date": r.creation_date.isoformat(),
                "engagement_coefficient": r.engagement_coefficient,
                "tweet_volume": r.tweet_volume,
                "mean_bot_probability": r.mean_bot_probability,
                "estimation_mode": r.estimation_mode,
                "manipulation_flag": int(r.manipulation_flag),
            }
            for _, r in sorted(self.rows.items())
        ]


FEATURE_COLUMNS = ("topic_id", "creation_date", "engagement_coefficient", "tweet_volume",
                   "mean_bot_probability", "estimation_mode", "manipulation_flag")


class EngagementEstimator:
    """Fits the engagement model once per distinct cutoff and caches the result."""

    def __init__(self, corpus: Corpus, kinds: InteractionKindSet | None = None,
                 strict_users: bool = True):
        self.corpus = corpus
        self.kinds = kinds or InteractionKindSet()
        self.strict_users = strict_users
        self._fits: dict[Optional[datetime], FitReport | FitError] = {}

    def fit(self, cutoff: Optional[datetime] = None) -> FitReport | FitError:
        if cutoff not in self._fits:
            topic_ids = None
            if cutoff is not None:
                topic_ids = [t for t, m in self.corpus.topics.items()
                             if first_month_window(m)[0] < cutoff]
            ds = build_dataset(self.corpus, self.kinds, cutoff, self.strict_users, topic_ids)
            try:
                self._fits[cutoff] = fit_closed_form(ds)
            except FitError as exc:
                self._fits[cutoff] = exc
        return self._fits[cutoff]

    def cutoff(self, topic_id: str, mode: str) -> Optional[datetime]:
        if mode == IN_SAMPLE:
            return None
        if mode == PRIOR_DATA:
            return first_month_window(self.corpus.topics[topic_id])[1]
        raise ValueError(f"unknown estimation mode {mode!r}")

    def estimate(self, topic_id: str, mode: str) -> tuple[Optional[float], str]:
        """Engagement coefficient of one topic, or None with the reason it has none."""
        if topic_id not in self.corpus.topics:
            raise KeyError(f"unknown topic {topic_id!r}")
        result = self.fit(self.cutoff(topic_id, mode))
        if isinstance(result, FitError):
            return None, f"no estimate: {result}"
        if topic_id not in result.model.alpha:
            reason = dict(result.excluded_topics).get(topic_id, "not in fit")
            return None, f"no estimate: {reason}"
        return result.model.alpha[topic_id], ""


def engagement_feature(corpus: Corpus, topic_id: str, mode: str = IN_SAMPLE,
                       kinds: InteractionKindSet | None = None) -> Optional[float]:
    """Fitted engagement coefficient; None (not 0) when the fit has no estimate.

    ``prior_data`` fits only posts up to the end of this topic's first month,
    from topics whose windows opened before then.
    """
    return EngagementEstimator(corpus, kinds).estimate(topic_id, mode)[0]


def _window_posts(corpus: Corpus, topic_id: str, posts=None):
    start, end = first_month_window(corpus.topics[topic_id])
    return [p for p in (corpus.posts if posts is None else posts)
            if p.topic_id == topic_id and start <= p.timestamp < end]


def tweet_volume(corpus: Corpus, topic_id: str, posts=None) -> int:
    """Posts on the topic inside its first-month window.

    ``posts`` optionally narrows the scan to a pre-filtered subset.
    """
    return len(_window_posts(corpus, topic_id, posts))


def mean_bot_probability(corpus: Corpus, topic_id: str, posts=None) -> Optional[float]:
    """Mean over distinct in-window posters with a known bot probability."""
    users = {p.user_id for p in _window_posts(corpus, topic_id, posts)}
    probs = [corpus.profiles[u].bot_probability for u in sorted(users)
             if u in corpus.profiles and corpus.profiles[u].bot_probability is not None]
    if not probs:
        return None
    return float(np.mean(probs))


def compute_features(corpus: Corpus, kinds: InteractionKindSet | None = None,
                     mode: str = PRIOR_DATA, strict_users: bool = True,
                     estimator: EngagementEstimator | None = None) -> FeatureTable:
    estimator = estimator or EngagementEstimator(corpus, kinds, strict_users)
    by_topic = defaultdict(list)
    for p in corpus.posts:
        by_topic[p.topic_id].append(p)
    rows = {}
    for t in sorted(corpus.topics):
        alpha, note = estimator.estimate(t, mode)
        rows[t] = FeatureRow(
            topic_id=t,
            creation_date=corpus.topics[t].creation_date,
            engagement_coefficient=alpha,
            tweet_volume=tweet_volume(corpus, t, by_topic[t]),
            mean_bot_probability=mean_bot_probability(corpus, t, by_topic[t]),
            estimation_mode=mode,
            note=note,
        )
    return FeatureTable(rows, mode)


def mode_discrepancy(reference: FeatureTable, other: FeatureTable) -> tuple[float, float, int]:
    """Mean and max absolute percent difference of engagement, over shared topics."""
    a, b = reference.values("engagement"), other.values("engagement")
    pct = [abs(b[t] - a[t]) / a[t] * 100.0 for t in a
           if a[t] and b.get(t) is not None]
    if not pct:
        return float("nan"), float("nan"), 0
    return float(np.mean(pct)), float(np.max(pct)), len(pct)


# -- k-means on bot probabilities -------------------------------------------

@dataclass(frozen=True)
class BotClustering:
    k: int
    centers: tuple[float, ...]
    assignment: Mapping[str, int]
    inertia: float

    def sizes(self) -> list[int]:
        counts = [0] * self.k
        for c in self.assignment.values():
            counts[c] += 1
        return counts


def _kmeanspp(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    centers = [x[rng.integers(len(x))]]
    for _ in range(1, k):
        d2 = np.min((x[:, None] - np.asarray(centers)[None, :]) ** 2, axis=1)
        centers.append(x[rng.choice(len(x), p=d2 / d2.sum())])
    return np.asarray(centers, dtype=float)


def _lloyd(x: np.ndarray, centers: np.ndarray, max_iter: int = 300):
    labels = None
    for _ in range(max_iter):
        new = np.argmin(np.abs(x[:, None] - centers[None, :]), axis=1)
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        for j in range(len(centers)):
            members = x[labels == j]
            if len(members):
                centers[j] = members.mean()
    inertia = float(((x - centers[labels]) ** 2).sum())
    return centers, labels, inertia


def kmeans_1d(x: Sequence[float], k: int, seed: int = 0, restarts: int = 32):
    """Best-of-``restarts`` Lloyd runs with k-means++ seeding.

    Restart ``r`` always draws from the ``r``-th child of ``SeedSequence(seed)``,
    so adding restarts never worsens the returned inertia.
    """
    x = np.asarray(x, dtype=float)
    if k < 1:
        raise ValueError("k must be >= 1")
    if len(np.unique(x)) < k:
        raise ValueError(f"need at least {k} distinct values, got {len(np.unique(x))}")
    best = None
    for child in np.random.SeedSequence(seed).spawn(max(1, restarts)):
        rng = np.random.default_rng(child)
        centers, labels, inertia = _lloyd(x, _kmeanspp(x, k, rng))
        if best is None or inertia < best[2]:
            best = (centers.copy(), labels.copy(), inertia)
    centers, labels, inertia = best
    order = np.argsort(centers, kind="stable")
    rank = np.empty(k, dtype=int)
    rank[order] = np.arange(k)
    return centers[order], rank[labels], inertia


def cluster_bot_probabilities(values: Mapping[str, float], k: int = 3, seed: int = 0,
                              restarts: int = 32) -> BotClustering:
    topics = sorted(values)
    centers, labels, inertia = kmeans_1d([values[t] for t in topics], k, seed, restarts)
    return BotClustering(k, tuple(float(c) for c in centers),
                         dict(zip(topics, (int(l) for l in labels))), inertia)

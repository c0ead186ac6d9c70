"""Synthetic universes: planted engagement model, users, posts and prices."""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from datetime import date, timedelta
from typing import Mapping, Optional

import numpy as np

from engage.analytics import MONTH_DAYS, PriceSeries
from engage.corpus import Corpus, TopicMeta, UserProfile
from engage.engagement import EngagementModel, sample_corpus


@dataclass
class SimulationSpec:
    """Shape of a synthetic universe.

    ``alpha`` plants one engagement coefficient per topic; when absent the
    topics get log-spaced values across ``alpha_range``.  Prices follow
    ``exp(drift_c * days / 30)`` with ``drift_c = price_drift * (log10 alpha_c
    - median)``, so with ``price_noise = 0`` every return is a strictly
    increasing function of the planted coefficient.
    """

    n_topics: int = 12
    n_users: int = 200
    alpha: Optional[list[float]] = None
    alpha_range: tuple[float, float] = (1e-5, 1e-3)
    beta: dict[str, float] = field(default_factory=lambda: {
        "like": 1.0, "retweet": 0.31, "reply": 0.19})
    reference_kind: str = "like"
    posts_per_topic: int = 500
    follower_range: tuple[int, int] = (100, 100_000)
    start_date: date = date(2021, 1, 1)
    spacing_days: int = 14
    bot_probabilities: bool = True
    price_drift: float = 0.1
    price_noise: float = 0.0
    price_days: int = 400

    def __post_init__(self):
        if isinstance(self.start_date, str):
            self.start_date = date.fromisoformat(self.start_date)
        self.alpha_range = tuple(self.alpha_range)
        self.follower_range = tuple(self.follower_range)
        if self.n_topics < 1 or self.n_users < 1:
            raise ValueError("need at least one topic and one user")
        if self.alpha is not None:
            if len(self.alpha) == 1:
                self.alpha = list(self.alpha) * self.n_topics
            if len(self.alpha) != self.n_topics:
                raise ValueError(f"{len(self.alpha)} alpha values for {self.n_topics} topics")
            if any(a < 0 for a in self.alpha):
                raise ValueError("alpha must be non-negative")
        lo, hi = self.follower_range
        if not 0 <= lo <= hi:
            raise ValueError("follower_range must satisfy 0 <= min <= max")
        if self.posts_per_topic < 0 or self.price_days < 1:
            raise ValueError("posts_per_topic must be >= 0 and price_days >= 1")
        if self.reference_kind not in self.beta or self.beta[self.reference_kind] != 1.0:
            raise ValueError("beta of the reference kind must be 1")

    @classmethod
    def from_dict(cls, data: Mapping) -> "SimulationSpec":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ValueError(f"unknown simulation parameters {sorted(unknown)}")
        return cls(**data)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["start_date"] = self.start_date.isoformat()
        d["alpha_range"] = list(self.alpha_range)
        d["follower_range"] = list(self.follower_range)
        return d

    def planted_alpha(self) -> list[float]:
        if self.alpha is not None:
            return [float(a) for a in self.alpha]
        lo, hi = self.alpha_range
        if self.n_topics == 1:
            return [float(lo)]
        return np.logspace(math.log10(lo), math.log10(hi), self.n_topics).tolist()

    def planted_model(self) -> EngagementModel:
        ids = topic_ids(self.n_topics)
        return EngagementModel(dict(zip(ids, self.planted_alpha())), dict(self.beta),
                               self.reference_kind)


def topic_ids(n: int) -> list[str]:
    width = max(2, len(str(n - 1)))
    return [f"coin{i:0{width}d}" for i in range(n)]


def user_ids(n: int) -> list[str]:
    width = len(str(n - 1))
    return [f"user{i:0{width}d}" for i in range(n)]


def log_uniform_followers(rng: np.random.Generator, n: int, lo: int, hi: int) -> np.ndarray:
    if lo == hi or hi == 0:
        return np.full(n, hi, dtype=np.int64)
    lo_ = max(lo, 1)
    return np.rint(np.exp(rng.uniform(math.log(lo_), math.log(hi), size=n))).astype(np.int64)


def build_universe(spec: SimulationSpec, seed: int = 0) -> tuple[Corpus, EngagementModel]:
    """Corpus (with prices) drawn from ``spec``; identical seeds give identical corpora."""
    users_ss, plan_ss, posts_ss, price_ss = np.random.SeedSequence(seed).spawn(4)
    model = spec.planted_model()
    ids = topic_ids(spec.n_topics)
    uids = user_ids(spec.n_users)

    rng = np.random.default_rng(users_ss)
    followers = log_uniform_followers(rng, spec.n_users, *spec.follower_range)
    bots = rng.uniform(0.0, 1.0, size=spec.n_users) if spec.bot_probabilities else None
    profiles = {
        u: UserProfile(u, int(followers[j]), None if bots is None else float(bots[j]))
        for j, u in enumerate(uids)
    }
    topics = {
        t: TopicMeta(t, spec.start_date + timedelta(days=spec.spacing_days * i))
        for i, t in enumerate(ids)
    }

    rng = np.random.default_rng(plan_ss)
    plan = {}
    for t in ids:
        per_user = np.bincount(rng.integers(0, spec.n_users, size=spec.posts_per_topic),
                               minlength=spec.n_users)
        for j, m in enumerate(per_user.tolist()):
            if m:
                plan[(t, uids[j])] = m

    corpus = sample_corpus(model, profiles, plan, posts_ss, topics)
    prices = synthetic_prices(spec, topics, model, np.random.default_rng(price_ss))
    return Corpus(corpus.topics, corpus.profiles, corpus.posts, prices), model


def synthetic_prices(spec: SimulationSpec, topics: Mapping[str, TopicMeta],
                     model: EngagementModel, rng: np.random.Generator) -> dict[str, PriceSeries]:
    logs = {t: math.log10(a) if a > 0 else -12.0 for t, a in model.alpha.items()}
    center = float(np.median(list(logs.values())))
    days = np.arange(spec.price_days + 1)
    out = {}
    for t in sorted(topics):
        drift = spec.price_drift * (logs[t] - center)
        path = drift * days / MONTH_DAYS
        if spec.price_noise > 0:
            path = path + np.cumsum(rng.normal(0.0, spec.price_noise, size=len(days)))
        created = topics[t].creation_date
        out[t] = PriceSeries(t, tuple(created + timedelta(days=int(d)) for d in days),
                             tuple(float(p) for p in np.exp(path)))
    return out

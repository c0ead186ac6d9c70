"""Independent reference computations used to check the library.

None of these share code paths with ``engage``: they work from the raw posts
or from first-principles definitions.
"""
from __future__ import annotations

import itertools
from datetime import date, datetime, timedelta, timezone
from fractions import Fraction

import numpy as np
from scipy.stats import poisson

from engage.corpus import Corpus, Post, TopicMeta, UserProfile


def brute_log_likelihood(dataset, model) -> float:
    """Sum of Poisson log-pmfs over every (post, kind) count."""
    total = 0.0
    for p in dataset.posts:
        f = dataset.profiles[p.user_id].follower_count
        for k in dataset.kinds:
            mu = model.beta[k] * model.alpha[p.topic_id] * f
            total += float(poisson.logpmf(p.count(k), mu))
    return total


def central_differences(fn, params: dict, rel_step: float = 1e-5) -> dict:
    out = {}
    for key, value in params.items():
        h = rel_step * value
        up, down = dict(params), dict(params)
        up[key] = value + h
        down[key] = value - h
        out[key] = (fn(up) - fn(down)) / (2 * h)
    return out


def pair_count_auc(scores, labels) -> float:
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    wins = Fraction(0)
    for a, b in itertools.product(pos, neg):
        if a > b:
            wins += 1
        elif a == b:
            wins += Fraction(1, 2)
    return float(wins / (len(pos) * len(neg)))


def definition_ranks(xs) -> list[float]:
    """Rank = 1 + #smaller + (#equal - 1) / 2, straight from the definition."""
    return [1 + sum(y < x for y in xs) + (sum(y == x for y in xs) - 1) / 2 for x in xs]


def naive_spearman(xs, ys) -> float:
    rx, ry = definition_ranks(xs), definition_ranks(ys)
    n = len(xs)
    mx, my = sum(rx) / n, sum(ry) / n
    cov = sum((a - mx) * (b - my) for a, b in zip(rx, ry))
    vx = sum((a - mx) ** 2 for a in rx)
    vy = sum((b - my) ** 2 for b in ry)
    return cov / (vx * vy) ** 0.5


def optimal_kmeans_1d(values, k: int) -> float:
    """Minimum within-cluster sum of squares by dynamic programming.

    Optimal 1-D clusters are contiguous in sorted order.
    """
    x = sorted(values)
    n = len(x)

    def cost(i, j):  # x[i:j]
        seg = x[i:j]
        m = sum(seg) / len(seg)
        return sum((v - m) ** 2 for v in seg)

    inf = float("inf")
    best = [[inf] * (n + 1) for _ in range(k + 1)]
    best[0][0] = 0.0
    for c in range(1, k + 1):
        for j in range(1, n + 1):
            best[c][j] = min((best[c - 1][i] + cost(i, j) for i in range(c - 1, j)), default=inf)
    return best[k][n]


def nearest_rank_by_coverage(values, q) -> float:
    """Smallest sample value v with at least q% of the sample <= v."""
    xs = sorted(values)
    for v in xs:
        if 100 * sum(x <= v for x in xs) >= q * len(xs):
            return v
    return xs[-1]


T0 = datetime(2021, 1, 2, tzinfo=timezone.utc)


def make_corpus(topics, users, posts, created=date(2021, 1, 1), prices=None) -> Corpus:
    """Corpus from compact specs.

    ``users``: {user: followers or (followers, bot)}; ``posts``: iterable of
    (topic, user, counts dict[, timestamp]).
    """
    profiles = {}
    for u, spec in users.items():
        f, bot = spec if isinstance(spec, tuple) else (spec, None)
        profiles[u] = UserProfile(u, f, bot)
    metas = {}
    for t in topics:
        if isinstance(t, TopicMeta):
            metas[t.topic_id] = t
        else:
            metas[t] = TopicMeta(t, created)
    out = []
    for entry in posts:
        t, u, counts = entry[:3]
        ts = entry[3] if len(entry) > 3 else T0
        out.append(Post(t, u, ts, dict(counts)))
    return Corpus(metas, profiles, out, prices or {})


def two_topic_corpus() -> Corpus:
    """Topic A: one user f=1000, 10 posts, 40 likes / 12 retweets.
    Topic B: one user f=500, 4 posts, 5 likes / 3 retweets."""
    posts = [("A", "ua", {"like": 4, "retweet": 2 if k < 2 else 1}) for k in range(10)]
    b_likes, b_rts = [2, 1, 1, 1], [1, 1, 1, 0]
    posts += [("B", "ub", {"like": b_likes[k], "retweet": b_rts[k]}) for k in range(4)]
    return make_corpus(["A", "B"], {"ua": 1000, "ub": 500}, posts)


def random_small_corpus(seed: int, kinds=("like", "retweet", "reply")):
    """<=5 topics, <=10 users, <=3 kinds, every follower count positive,
    reference kind observed at least once."""
    rng = np.random.default_rng(seed)
    n_topics = int(rng.integers(1, 6))
    n_users = int(rng.integers(1, 11))
    n_kinds = int(rng.integers(1, 4))
    used = kinds[:n_kinds]
    users = {f"u{j}": int(rng.integers(1, 5000)) for j in range(n_users)}
    topics = [f"t{i}" for i in range(n_topics)]
    posts = []
    for t in topics:
        rate = rng.uniform(0.2, 25.0)
        for _ in range(int(rng.integers(1, 8))):
            u = f"u{int(rng.integers(n_users))}"
            counts = {k: int(rng.poisson(rate * rng.uniform(0.1, 1.0))) for k in used}
            posts.append((t, u, counts, T0 + timedelta(hours=int(rng.integers(0, 600)))))
    if not any(p[2][used[0]] for p in posts):
        posts[0][2][used[0]] = 1
    return make_corpus(topics, users, posts), used

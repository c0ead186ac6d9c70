"""Loading, validating and aggregating the raw interaction corpus.

A corpus directory holds four UTF-8 CSV files::

    topics.csv   topic_id,creation_date[,display_name]
    users.csv    user_id,follower_count[,bot_probability]
    posts.csv    topic_id,user_id,timestamp,likes,retweets,replies[,...]
    prices.csv   topic_id,date,price

:func:`load_corpus` parses and validates them into a :class:`Corpus`;
:func:`build_dataset` reduces a corpus to an :class:`InteractionDataset`
holding the sufficient statistics of the Poisson engagement model.
"""
from __future__ import annotations

import csv
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from datetime import date, datetime, time, timedelta, timezone
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

from engage.analytics import PriceSeries

log = logging.getLogger(__name__)

DEFAULT_KINDS = ("like", "retweet", "reply")
WINDOW_DAYS = 30

CORPUS_FILES = ("topics.csv", "users.csv", "posts.csv", "prices.csv")


class CorpusError(ValueError):
    """A corpus file is missing or a row fails validation."""

    def __init__(self, message: str, *, file: str | None = None,
                 row: int | None = None, column: str | None = None):
        self.reason = message
        self.file = file
        self.row = row
        self.column = column
        where = [p for p in (
            file,
            f"row {row}" if row is not None else None,
            f"column {column!r}" if column is not None else None,
        ) if p]
        super().__init__(f"{', '.join(where)}: {message}" if where else message)

    def to_record(self) -> dict:
        return {"error": type(self).__name__, "message": self.reason,
                "file": self.file, "row": self.row, "column": self.column}


class UnresolvedUserError(CorpusError):
    pass


# -- domain types -----------------------------------------------------------

@dataclass(frozen=True)
class TopicMeta:
    topic_id: str
    creation_date: date
    display_name: Optional[str] = None


@dataclass(frozen=True)
class UserProfile:
    user_id: str
    follower_count: int
    bot_probability: Optional[float] = None


@dataclass(frozen=True)
class Post:
    topic_id: str
    user_id: str
    timestamp: datetime
    counts: Mapping[str, int]

    def count(self, kind: str) -> int:
        return self.counts.get(kind, 0)


@dataclass(frozen=True)
class InteractionKindSet:
    """Ordered interaction kinds; ``names[reference]`` has its coefficient pinned to 1."""

    names: tuple[str, ...] = DEFAULT_KINDS
    reference: int = 0

    def __post_init__(self):
        if not self.names:
            raise ValueError("at least one interaction kind is required")
        if len(set(self.names)) != len(self.names):
            raise ValueError(f"duplicate interaction kinds in {self.names}")
        if not 0 <= self.reference < len(self.names):
            raise ValueError(f"reference index {self.reference} out of range")

    @classmethod
    def from_names(cls, names: Iterable[str], reference_kind: str | None = None):
        names = tuple(names)
        if reference_kind is None:
            return cls(names, 0)
        if reference_kind not in names:
            raise ValueError(f"reference kind {reference_kind!r} not among {names}")
        return cls(names, names.index(reference_kind))

    @property
    def reference_kind(self) -> str:
        return self.names[self.reference]

    def __iter__(self):
        return iter(self.names)

    def __len__(self):
        return len(self.names)


@dataclass(frozen=True)
class Corpus:
    topics: dict[str, TopicMeta]
    profiles: dict[str, UserProfile]
    posts: list[Post]
    prices: dict[str, PriceSeries] = field(default_factory=dict)


# -- parsing helpers --------------------------------------------------------

def parse_timestamp(text: str) -> datetime:
    """ISO-8601 to an aware UTC datetime; naive values are taken as UTC."""
    s = text.strip()
    if s[-1:] in ("Z", "z"):
        s = s[:-1] + "+00:00"
    dt = datetime.fromisoformat(s)
    if dt.tzinfo is None:
        return dt.replace(tzinfo=timezone.utc)
    return dt.astimezone(timezone.utc)


def first_month_window(topic: TopicMeta) -> tuple[datetime, datetime]:
    """Half-open observation window ``[creation 00:00 UTC, +30 days)``."""
    start = datetime.combine(topic.creation_date, time(0), tzinfo=timezone.utc)
    return start, start + timedelta(days=WINDOW_DAYS)


def _kind_column(kind: str, header: Sequence[str]) -> Optional[str]:
    candidates = [kind, kind + "s"]
    if kind.endswith("y"):
        candidates.append(kind[:-1] + "ies")
    for c in candidates:
        if c in header:
            return c
    return None


class _Rows:
    """Row iterator over one CSV file that knows how to blame a cell."""

    def __init__(self, path: Path, required: Sequence[str], optional: Sequence[str] = ()):
        self.path = path
        self.name = path.name
        if not path.is_file():
            raise CorpusError("missing file", file=self.name)
        with path.open(newline="", encoding="utf-8") as fh:
            self._rows = list(csv.reader(fh))
        if not self._rows:
            raise CorpusError("missing header row", file=self.name, row=1)
        self.header = [h.strip() for h in self._rows[0]]
        for col in required:
            if col not in self.header:
                raise CorpusError("required column absent from header",
                                  file=self.name, row=1, column=col)
        self.index = {h: i for i, h in enumerate(self.header)}
        self.known = set(required) | set(optional)

    def warn_unknown(self, extra_known: Iterable[str] = ()):
        known = self.known | set(extra_known)
        unknown = [h for h in self.header if h not in known]
        if unknown:
            log.warning("%s: ignoring unknown columns %s", self.name, unknown)

    def __iter__(self):
        for row_no, row in enumerate(self._rows[1:], start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != len(self.header):
                raise CorpusError(
                    f"expected {len(self.header)} columns, found {len(row)}",
                    file=self.name, row=row_no)
            yield row_no, row

    def cell(self, row: list[str], column: str) -> Optional[str]:
        i = self.index.get(column)
        return None if i is None else row[i].strip()

    def fail(self, row_no: int, column: str, message: str):
        raise CorpusError(message, file=self.name, row=row_no, column=column)

    def integer(self, row_no, row, column, *, nonneg=True) -> int:
        raw = self.cell(row, column)
        try:
            value = int(raw)
        except (TypeError, ValueError):
            self.fail(row_no, column, f"not an integer: {raw!r}")
        if nonneg and value < 0:
            self.fail(row_no, column, f"negative value {value}")
        return value

    def real(self, row_no, row, column) -> float:
        raw = self.cell(row, column)
        try:
            value = float(raw)
        except (TypeError, ValueError):
            self.fail(row_no, column, f"not a number: {raw!r}")
        if not math.isfinite(value):
            self.fail(row_no, column, f"non-finite value {raw!r}")
        return value

    def day(self, row_no, row, column) -> date:
        raw = self.cell(row, column)
        try:
            return date.fromisoformat(raw)
        except (TypeError, ValueError):
            self.fail(row_no, column, f"not an ISO date: {raw!r}")

    def moment(self, row_no, row, column) -> datetime:
        raw = self.cell(row, column)
        try:
            return parse_timestamp(raw)
        except (TypeError, ValueError, IndexError):
            self.fail(row_no, column, f"not an ISO-8601 timestamp: {raw!r}")

    def identifier(self, row_no, row, column) -> str:
        value = self.cell(row, column)
        if not value:
            self.fail(row_no, column, "empty identifier")
        return value


# -- loading ----------------------------------------------------------------

def load_topics(path: Path) -> dict[str, TopicMeta]:
    rows = _Rows(path, ("topic_id", "creation_date"), ("display_name",))
    rows.warn_unknown()
    topics: dict[str, TopicMeta] = {}
    for row_no, row in rows:
        tid = rows.identifier(row_no, row, "topic_id")
        if tid in topics:
            rows.fail(row_no, "topic_id", f"duplicate topic_id {tid!r}")
        name = rows.cell(row, "display_name") or None
        topics[tid] = TopicMeta(tid, rows.day(row_no, row, "creation_date"), name)
    return topics


def load_users(path: Path) -> dict[str, UserProfile]:
    rows = _Rows(path, ("user_id", "follower_count"), ("bot_probability",))
    rows.warn_unknown()
    users: dict[str, UserProfile] = {}
    for row_no, row in rows:
        uid = rows.identifier(row_no, row, "user_id")
        if uid in users:
            rows.fail(row_no, "user_id", f"duplicate user_id {uid!r}")
        followers = rows.integer(row_no, row, "follower_count")
        bot = None
        if rows.cell(row, "bot_probability"):
            bot = rows.real(row_no, row, "bot_probability")
            if not 0.0 <= bot <= 1.0:
                rows.fail(row_no, "bot_probability", f"probability {bot} outside [0, 1]")
        users[uid] = UserProfile(uid, followers, bot)
    return users


def load_posts(path: Path, kinds: Sequence[str] = DEFAULT_KINDS,
               topics: Mapping[str, TopicMeta] | None = None) -> list[Post]:
    rows = _Rows(path, ("topic_id", "user_id", "timestamp"))
    columns = {k: _kind_column(k, rows.header) for k in kinds}
    for k, col in columns.items():
        if col is None:
            log.warning("%s: no column for interaction kind %r; counts taken as 0",
                        rows.name, k)
    rows.warn_unknown(c for c in columns.values() if c)
    posts = []
    for row_no, row in rows:
        tid = rows.identifier(row_no, row, "topic_id")
        if topics is not None and tid not in topics:
            rows.fail(row_no, "topic_id", f"unknown topic {tid!r}")
        counts = {k: (rows.integer(row_no, row, col) if col else 0)
                  for k, col in columns.items()}
        posts.append(Post(tid, rows.identifier(row_no, row, "user_id"),
                          rows.moment(row_no, row, "timestamp"), counts))
    return posts


def load_prices(path: Path, topics: Mapping[str, TopicMeta] | None = None
                ) -> dict[str, PriceSeries]:
    rows = _Rows(path, ("topic_id", "date", "price"))
    rows.warn_unknown()
    obs: dict[str, dict[date, float]] = defaultdict(dict)
    for row_no, row in rows:
        tid = rows.identifier(row_no, row, "topic_id")
        if topics is not None and tid not in topics:
            rows.fail(row_no, "topic_id", f"unknown topic {tid!r}")
        day = rows.day(row_no, row, "date")
        price = rows.real(row_no, row, "price")
        if price <= 0:
            rows.fail(row_no, "price", f"price must be positive, got {price}")
        if day in obs[tid]:
            rows.fail(row_no, "date", f"duplicate date {day} for {tid!r}")
        obs[tid][day] = price
    return {tid: PriceSeries.from_pairs(tid, sorted(d.items())) for tid, d in sorted(obs.items())}


def load_corpus(directory: str | Path, kinds: Sequence[str] = DEFAULT_KINDS,
                require_prices: bool = True) -> Corpus:
    """Parse and validate a corpus directory.

    Raises :class:`CorpusError` naming the file, 1-based row (the header is
    row 1) and column of the first invalid cell.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise CorpusError(f"corpus directory {str(directory)!r} does not exist")
    topics = load_topics(directory / "topics.csv")
    users = load_users(directory / "users.csv")
    posts = load_posts(directory / "posts.csv", kinds, topics)
    price_path = directory / "prices.csv"
    if price_path.is_file() or require_prices:
        prices = load_prices(price_path, topics)
    else:
        prices = {}
    return Corpus(topics, users, posts, prices)


# -- sufficient statistics --------------------------------------------------

@dataclass(frozen=True)
class InteractionDataset:
    """Retained posts plus the aggregate counts the estimator consumes.

    ``n_cu``/``m_cu`` are keyed by ``(topic, user)`` and ``n_cui`` by
    ``(topic, user, kind)``.  ``log_factorial_sum`` is the sum of
    ``log(n_cuik!)`` over every retained count and ``follower_log_sum`` the
    sum of ``n_cu * log(f_u)`` over users with ``f_u > 0``; together they
    make up the parameter-free part of the log-likelihood.
    ``zero_exposure_interactions`` counts interactions on posts by users with
    no followers, which the model deems impossible.
    """

    posts: tuple[Post, ...]
    profiles: Mapping[str, UserProfile]
    topics: Mapping[str, TopicMeta]
    kinds: InteractionKindSet
    n: int
    n_c: Mapping[str, int]
    n_cu: Mapping[tuple[str, str], int]
    n_cui: Mapping[tuple[str, str, str], int]
    m_cu: Mapping[tuple[str, str], int]
    l: Mapping[str, int]
    v_c: Mapping[str, int]
    log_factorial_sum: float
    follower_log_sum: float
    zero_exposure_interactions: int
    uncovered: frozenset[str]
    dropped_posts: int = 0

    @property
    def topic_ids(self) -> tuple[str, ...]:
        return tuple(sorted(self.topics))

    @property
    def covered_topics(self) -> tuple[str, ...]:
        return tuple(t for t in self.topic_ids if t not in self.uncovered)

    def subset(self, topic_ids: Iterable[str]) -> "InteractionDataset":
        keep = set(topic_ids)
        return aggregate(
            [p for p in self.posts if p.topic_id in keep],
            self.profiles,
            {t: m for t, m in self.topics.items() if t in keep},
            self.kinds,
        )

    def with_followers(self, scale: int) -> "InteractionDataset":
        """Same posts with every follower count multiplied by ``scale``."""
        profiles = {u: UserProfile(p.user_id, p.follower_count * scale, p.bot_probability)
                    for u, p in self.profiles.items()}
        return aggregate(self.posts, profiles, self.topics, self.kinds)


def aggregate(posts: Sequence[Post], profiles: Mapping[str, UserProfile],
              topics: Mapping[str, TopicMeta], kinds: InteractionKindSet,
              dropped_posts: int = 0) -> InteractionDataset:
    """Compute every aggregate from posts whose users all resolve in ``profiles``."""
    n_c = {t: 0 for t in topics}
    v_c = {t: 0 for t in topics}
    l = {k: 0 for k in kinds}
    n_cu: dict = defaultdict(int)
    n_cui: dict = defaultdict(int)
    m_cu: dict = defaultdict(int)
    log_fact = 0.0
    follower_log = 0.0
    zero_exposure = 0
    posted = set()
    for p in posts:
        f = profiles[p.user_id].follower_count
        key = (p.topic_id, p.user_id)
        m_cu[key] += 1
        v_c[p.topic_id] += f
        posted.add(p.topic_id)
        total = 0
        for k in kinds:
            x = p.counts.get(k, 0)
            if x:
                total += x
                l[k] += x
                n_cui[(p.topic_id, p.user_id, k)] += x
                if x > 1:
                    log_fact += math.lgamma(x + 1)
        n_c[p.topic_id] += total
        n_cu[key] += total
        if total:
            if f > 0:
                follower_log += total * math.log(f)
            else:
                zero_exposure += total
    return InteractionDataset(
        posts=tuple(posts),
        profiles=profiles,
        topics=dict(topics),
        kinds=kinds,
        n=sum(l.values()),
        n_c=n_c,
        n_cu=dict(n_cu),
        n_cui=dict(n_cui),
        m_cu=dict(m_cu),
        l=l,
        v_c=v_c,
        log_factorial_sum=log_fact,
        follower_log_sum=follower_log,
        zero_exposure_interactions=zero_exposure,
        uncovered=frozenset(t for t in topics if t not in posted),
        dropped_posts=dropped_posts,
    )


def build_dataset(corpus: Corpus, kinds: InteractionKindSet | None = None,
                  cutoff: datetime | None = None, strict_users: bool = True,
                  topic_ids: Iterable[str] | None = None) -> InteractionDataset:
    """Aggregate the posts with ``timestamp <= cutoff`` (all posts if no cutoff).

    ``topic_ids`` restricts the dataset to a subset of topics.  Posts by users
    without a profile raise :class:`UnresolvedUserError` unless
    ``strict_users`` is false, in which case they are dropped and counted.
    """
    kinds = kinds or InteractionKindSet()
    topics = corpus.topics
    if topic_ids is not None:
        wanted = set(topic_ids)
        topics = {t: m for t, m in topics.items() if t in wanted}
    retained = []
    dropped = 0
    for p in corpus.posts:
        if p.topic_id not in topics:
            continue
        if cutoff is not None and p.timestamp > cutoff:
            continue
        if p.user_id not in corpus.profiles:
            if strict_users:
                raise UnresolvedUserError(
                    f"post by user {p.user_id!r} has no profile in users.csv",
                    file="posts.csv", column="user_id")
            dropped += 1
            continue
        retained.append(p)
    if dropped:
        log.warning("dropped %d posts by users without a profile", dropped)
    return aggregate(retained, corpus.profiles, topics, kinds, dropped)


# -- writing ----------------------------------------------------------------

def kind_column_name(kind: str) -> str:
    if kind.endswith("y"):
        return kind[:-1] + "ies"
    return kind + "s"


def format_timestamp(ts: datetime) -> str:
    return ts.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def write_corpus(corpus: Corpus, directory: str | Path,
                 kinds: Sequence[str] = DEFAULT_KINDS) -> Path:
    """Write the four corpus files so that :func:`load_corpus` reads them back."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    enc = {"encoding": "utf-8", "newline": ""}
    with (directory / "topics.csv").open("w", **enc) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["topic_id", "creation_date", "display_name"])
        for t in sorted(corpus.topics.values(), key=lambda m: m.topic_id):
            w.writerow([t.topic_id, t.creation_date.isoformat(), t.display_name or ""])
    with (directory / "users.csv").open("w", **enc) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["user_id", "follower_count", "bot_probability"])
        for u in sorted(corpus.profiles.values(), key=lambda p: p.user_id):
            bot = "" if u.bot_probability is None else repr(u.bot_probability)
            w.writerow([u.user_id, u.follower_count, bot])
    with (directory / "posts.csv").open("w", **enc) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["topic_id", "user_id", "timestamp"] + [kind_column_name(k) for k in kinds])
        for p in corpus.posts:
            w.writerow([p.topic_id, p.user_id, format_timestamp(p.timestamp)]
                       + [p.count(k) for k in kinds])
    with (directory / "prices.csv").open("w", **enc) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["topic_id", "date", "price"])
        for tid in sorted(corpus.prices):
            s = corpus.prices[tid]
            for d, p in zip(s.dates, s.prices):
                w.writerow([tid, d.isoformat(), repr(p)])
    return directory

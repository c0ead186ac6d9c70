import logging
import random
import shutil
from datetime import date, datetime, timedelta, timezone

import pytest
from hypothesis import given, settings, strategies as st

from engage.corpus import (
    CorpusError,
    InteractionKindSet,
    Post,
    TopicMeta,
    UnresolvedUserError,
    build_dataset,
    first_month_window,
    load_corpus,
    write_corpus,
)
from oracles import T0, make_corpus

LIKE = InteractionKindSet(("like",))


@pytest.fixture
def corpus_copy(small_corpus_dir, tmp_path):
    dest = tmp_path / "corpus"
    shutil.copytree(small_corpus_dir, dest)
    return dest


def _replace_line(path, line_no, text):
    lines = path.read_text().splitlines()
    lines[line_no - 1] = text
    path.write_text("\n".join(lines) + "\n")


def test_load_fixture_counts(small_corpus_dir):
    corpus = load_corpus(small_corpus_dir)
    assert (len(corpus.topics), len(corpus.profiles), len(corpus.posts)) == (3, 5, 20)
    assert corpus.topics["CCC"].display_name == "Gamma, the third"
    assert corpus.topics["BBB"].display_name is None
    assert corpus.profiles["u3"].bot_probability is None
    assert sorted(corpus.prices) == ["AAA", "BBB"]
    assert len(corpus.prices["BBB"].dates) == 60


def test_timestamps_normalized_to_utc(small_corpus_dir):
    corpus = load_corpus(small_corpus_dir)
    shifted = [p for p in corpus.posts if p.topic_id == "CCC" and p.user_id == "u2"][0]
    assert shifted.timestamp == datetime(2021, 3, 20, 13, 45, tzinfo=timezone.utc)


def test_fixture_aggregates_by_hand(small_corpus_dir):
    ds = build_dataset(load_corpus(small_corpus_dir))
    assert dict(ds.l) == {"like": 90, "retweet": 31, "reply": 13}
    assert ds.n == 134
    assert dict(ds.n_c) == {"AAA": 51, "BBB": 22, "CCC": 61}
    # u1 x3 + u2 + u4 x2 + u5 + u3 (no followers)
    assert ds.v_c["AAA"] == 3 * 1000 + 500 + 2 * 2500 + 120 + 0
    assert ds.m_cu[("AAA", "u1")] == 3
    assert ds.n_cui[("CCC", "u4", "like")] == 35
    assert ds.uncovered == frozenset()


@pytest.mark.parametrize("file,line,text,column", [
    ("posts.csv", 3, "AAA,u1,2021-01-03T12:30:00Z,-1,2,1", "likes"),
    ("posts.csv", 5, "AAA,u4,2021-01-05T09:15:00Z,twelve,4,2", "likes"),
    ("posts.csv", 4, "AAA,u2,yesterday,2,0,0", "timestamp"),
    ("users.csv", 2, "u1,-5,0.2", "follower_count"),
    ("users.csv", 3, "u2,500,1.5", "bot_probability"),
    ("topics.csv", 3, "BBB,2021-02-30,", "creation_date"),
    ("topics.csv", 4, "AAA,2021-03-06,dup", "topic_id"),
    ("prices.csv", 2, "AAA,2021-01-01,0", "price"),
])
def test_bad_cell_names_file_row_column(corpus_copy, file, line, text, column):
    _replace_line(corpus_copy / file, line, text)
    with pytest.raises(CorpusError) as err:
        load_corpus(corpus_copy)
    assert (err.value.file, err.value.row, err.value.column) == (file, line, column)
    assert file in str(err.value) and f"row {line}" in str(err.value)


def test_wrong_column_count(corpus_copy):
    _replace_line(corpus_copy / "posts.csv", 7, "AAA,u3,2021-01-12T00:00:00Z,0,0")
    with pytest.raises(CorpusError, match=r"posts.csv, row 7: expected 6 columns"):
        load_corpus(corpus_copy)


def test_missing_file(corpus_copy):
    (corpus_copy / "users.csv").unlink()
    with pytest.raises(CorpusError, match="users.csv"):
        load_corpus(corpus_copy)


def test_post_for_unknown_topic(corpus_copy):
    _replace_line(corpus_copy / "posts.csv", 2, "ZZZ,u1,2021-01-01T10:00:00Z,5,1,0")
    with pytest.raises(CorpusError) as err:
        load_corpus(corpus_copy)
    assert err.value.column == "topic_id"


def test_header_only_posts(corpus_copy):
    (corpus_copy / "posts.csv").write_text("topic_id,user_id,timestamp,likes,retweets,replies\n")
    corpus = load_corpus(corpus_copy)
    assert corpus.posts == []
    ds = build_dataset(corpus)
    assert ds.n == 0 and ds.uncovered == frozenset(corpus.topics)


def test_absent_and_unknown_columns(corpus_copy, caplog):
    lines = (corpus_copy / "posts.csv").read_text().splitlines()
    rows = [line.split(",") for line in lines]
    # drop replies, add an unknown column
    text = "\n".join(",".join(r[:5] + ["x"]) for r in rows) + "\n"
    (corpus_copy / "posts.csv").write_text(text)
    with caplog.at_level(logging.WARNING):
        corpus = load_corpus(corpus_copy)
    assert all(p.count("reply") == 0 for p in corpus.posts)
    assert "replies" in caplog.text or "'reply'" in caplog.text
    assert "unknown columns" in caplog.text


def test_extra_declared_kind(corpus_copy):
    lines = (corpus_copy / "posts.csv").read_text().splitlines()
    text = lines[0] + ",quotes\n" + "".join(line + ",2\n" for line in lines[1:])
    (corpus_copy / "posts.csv").write_text(text)
    corpus = load_corpus(corpus_copy, kinds=("like", "retweet", "reply", "quote"))
    ds = build_dataset(corpus, InteractionKindSet(("like", "retweet", "reply", "quote")))
    assert ds.l["quote"] == 40


def test_write_load_round_trip(small_corpus_dir, tmp_path):
    corpus = load_corpus(small_corpus_dir)
    back = load_corpus(write_corpus(corpus, tmp_path / "copy"))
    assert back.topics == corpus.topics
    assert back.profiles == corpus.profiles
    assert back.posts == corpus.posts
    assert back.prices == corpus.prices


# -- build_dataset ---------------------------------------------------------

def test_single_user_two_posts():
    corpus = make_corpus(["c"], {"u": 10}, [("c", "u", {"like": 0}), ("c", "u", {"like": 2})])
    ds = build_dataset(corpus, LIKE)
    assert (ds.n, ds.n_c["c"], ds.l["like"], ds.v_c["c"]) == (2, 2, 2, 20)


def test_cutoff_before_everything(small_corpus_dir):
    corpus = load_corpus(small_corpus_dir)
    ds = build_dataset(corpus, cutoff=datetime(2020, 1, 1, tzinfo=timezone.utc))
    assert ds.n == 0
    assert ds.uncovered == frozenset(corpus.topics)
    assert set(ds.topics) == set(corpus.topics)


def test_exposure_sums_posts_times_followers():
    posts = [("c", "a", {"like": 1})] * 10 + [("c", "b", {"like": 0})] * 4
    ds = build_dataset(make_corpus(["c"], {"a": 1000, "b": 500}, posts), LIKE)
    assert ds.v_c["c"] == 12000


def test_cutoff_is_inclusive():
    posts = [("c", "u", {"like": 1}, T0), ("c", "u", {"like": 5}, T0 + timedelta(seconds=1))]
    ds = build_dataset(make_corpus(["c"], {"u": 3}, posts), LIKE, cutoff=T0)
    assert ds.n == 1


def test_unresolved_user_strict_and_lenient():
    corpus = make_corpus(["c"], {"u": 3}, [("c", "u", {"like": 1}), ("c", "ghost", {"like": 4})])
    with pytest.raises(UnresolvedUserError):
        build_dataset(corpus, LIKE)
    ds = build_dataset(corpus, LIKE, strict_users=False)
    assert ds.dropped_posts == 1 and ds.n == 1


def test_zero_follower_user_counts_interactions_not_exposure():
    posts = [("c", "z", {"like": 3}), ("c", "u", {"like": 1})]
    ds = build_dataset(make_corpus(["c"], {"z": 0, "u": 10}, posts), LIKE)
    assert ds.n_c["c"] == 4 and ds.v_c["c"] == 10
    assert ds.zero_exposure_interactions == 3


@pytest.mark.parametrize("created,start,end", [
    (date(2021, 3, 6), datetime(2021, 3, 6), datetime(2021, 4, 5)),
    (date(2020, 1, 27), datetime(2020, 1, 27), datetime(2020, 2, 26)),
    (date(2019, 4, 18), datetime(2019, 4, 18), datetime(2019, 5, 18)),
])
def test_first_month_window(created, start, end):
    s, e = first_month_window(TopicMeta("x", created))
    assert s == start.replace(tzinfo=timezone.utc)
    assert e == end.replace(tzinfo=timezone.utc)
    assert e - s == timedelta(days=30)


def test_kind_set_validation():
    with pytest.raises(ValueError):
        InteractionKindSet(())
    with pytest.raises(ValueError):
        InteractionKindSet(("like", "like"))
    with pytest.raises(ValueError):
        InteractionKindSet.from_names(["like"], "reply")
    assert InteractionKindSet.from_names(["like", "reply"], "reply").reference == 1


# -- invariants -------------------------------------------------------------

KINDS = InteractionKindSet()

post_entries = st.tuples(
    st.sampled_from(["c0", "c1", "c2"]),
    st.sampled_from(["u0", "u1", "u2", "u3"]),
    st.fixed_dictionaries({k: st.integers(0, 30) for k in KINDS}),
    st.integers(0, 60 * 24).map(lambda m: T0 + timedelta(minutes=m)),
)
corpora = st.builds(
    lambda followers, posts: make_corpus(["c0", "c1", "c2"], dict(zip(["u0", "u1", "u2", "u3"], followers)), posts),
    st.lists(st.integers(0, 10_000), min_size=4, max_size=4),
    st.lists(post_entries, max_size=25),
)


def _aggregates(ds):
    return (ds.n, dict(ds.n_c), dict(ds.l), dict(ds.v_c), dict(ds.n_cu), dict(ds.n_cui),
            dict(ds.m_cu), ds.uncovered)


@settings(max_examples=60, deadline=None)
@given(corpora)
def test_totals_agree(corpus):
    ds = build_dataset(corpus, KINDS)
    assert sum(ds.n_c.values()) == sum(ds.l.values()) == ds.n
    for c in ds.topics:
        assert ds.n_c[c] == sum(v for (t, _), v in ds.n_cu.items() if t == c)
    assert sum(ds.n_cui.values()) == ds.n


@settings(max_examples=40, deadline=None)
@given(corpora)
def test_infinite_cutoff_is_no_cutoff(corpus):
    far = datetime.max.replace(tzinfo=timezone.utc)
    assert _aggregates(build_dataset(corpus, KINDS, cutoff=far)) == _aggregates(build_dataset(corpus, KINDS))


@settings(max_examples=40, deadline=None)
@given(corpora, st.randoms(use_true_random=False))
def test_post_order_irrelevant(corpus, rnd):
    shuffled = list(corpus.posts)
    rnd.shuffle(shuffled)
    other = type(corpus)(corpus.topics, corpus.profiles, shuffled)
    a, b = build_dataset(corpus, KINDS), build_dataset(other, KINDS)
    assert _aggregates(a) == _aggregates(b)
    assert a.log_factorial_sum == pytest.approx(b.log_factorial_sum, rel=1e-12)


@settings(max_examples=40, deadline=None)
@given(corpora, st.sampled_from(["c0", "c1", "c2"]), st.sampled_from(["u0", "u1", "u2", "u3"]))
def test_zero_count_post_only_adds_exposure(corpus, topic, user):
    before = build_dataset(corpus, KINDS)
    extra = Post(topic, user, T0, {k: 0 for k in KINDS})
    after = build_dataset(type(corpus)(corpus.topics, corpus.profiles, corpus.posts + [extra]), KINDS)
    f = corpus.profiles[user].follower_count
    assert after.v_c[topic] == before.v_c[topic] + f
    assert (after.n, after.n_c, after.l, after.n_cui) == (before.n, before.n_c, before.l, before.n_cui)

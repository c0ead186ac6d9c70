"""Headline numbers on a real corpus directory.

Prints the interaction coefficients, the in-sample vs prior-data discrepancy
of the engagement feature, and the bot-probability clusters.  The same
figures are asserted by the golden acceptance test when ENGAGE_GOLDEN_DIR is set.

    python3 scripts/reproduce_headline.py path/to/corpus
"""
import argparse
from pathlib import Path

from engage.corpus import build_dataset, load_corpus
from engage.engagement import fit_closed_form
from engage.features import (
    IN_SAMPLE,
    PRIOR_DATA,
    EngagementEstimator,
    cluster_bot_probabilities,
    compute_features,
    mode_discrepancy,
)


def main():
    ap = argparse.ArgumentParser(description="headline numbers on a corpus directory")
    ap.add_argument("corpus", type=Path)
    ap.add_argument("--k", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--strict-users", action="store_true")
    args = ap.parse_args()

    corpus = load_corpus(args.corpus, require_prices=False)
    ds = build_dataset(corpus, strict_users=args.strict_users)
    report = fit_closed_form(ds)
    print(f"topics={len(corpus.topics)} users={len(corpus.profiles)} posts={len(corpus.posts)} "
          f"interactions={ds.n} dropped_posts={ds.dropped_posts}")
    print("beta:", {k: round(v, 4) for k, v in report.model.beta.items()})
    if report.excluded_topics:
        print("excluded:", report.excluded_topics)

    estimator = EngagementEstimator(corpus, strict_users=args.strict_users)
    ins = compute_features(corpus, mode=IN_SAMPLE, strict_users=args.strict_users, estimator=estimator)
    prior = compute_features(corpus, mode=PRIOR_DATA, strict_users=args.strict_users, estimator=estimator)
    mean_pct, max_pct, n = mode_discrepancy(ins, prior)
    print(f"in-sample vs prior-data engagement: mean {mean_pct:.2f}%  max {max_pct:.2f}%  over {n} topics")

    bots = {t: v for t, v in ins.values("bot_probability").items() if v is not None}
    if len(set(bots.values())) >= args.k:
        cl = cluster_bot_probabilities(bots, args.k, seed=args.seed)
        print("bot clusters:", [round(c, 3) for c in cl.centers], "sizes", cl.sizes())
    else:
        print("bot clusters: not enough distinct bot probabilities")


if __name__ == "__main__":
    main()

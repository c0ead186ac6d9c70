"""Estimator recovery error as the number of posts per topic grows.

    python3 scripts/recovery_study.py --posts 500 2000 10000 --seeds 5
"""
import argparse
import time

import numpy as np

from engage.corpus import build_dataset
from engage.engagement import fit_closed_form
from engage.synthetic import SimulationSpec, build_universe


def max_relative_error(fitted, planted):
    errs = [abs(fitted.alpha[c] - a) / a for c, a in planted.alpha.items()]
    errs += [abs(fitted.beta[k] - b) / b for k, b in planted.beta.items()]
    return max(errs)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--posts", type=int, nargs="+", default=[500, 2000, 10_000])
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--topics", type=int, default=5)
    ap.add_argument("--users", type=int, default=1000)
    args = ap.parse_args()

    print(f"{'posts':>8} {'median err':>12} {'worst err':>12} {'sec/fit':>8}")
    for posts in args.posts:
        spec = SimulationSpec(n_topics=args.topics, n_users=args.users, posts_per_topic=posts,
                              follower_range=(1e2, 1e5))
        errs, start = [], time.perf_counter()
        for seed in range(args.seeds):
            corpus, planted = build_universe(spec, seed)
            errs.append(max_relative_error(fit_closed_form(build_dataset(corpus)).model, planted))
        per_fit = (time.perf_counter() - start) / args.seeds
        print(f"{posts:>8} {np.median(errs):>12.4%} {max(errs):>12.4%} {per_fit:>8.2f}")


if __name__ == "__main__":
    main()

"""Simulate a universe whose returns rise with planted engagement, run the
full pipeline on it and print the engagement dependence curve."""
import argparse
import csv
import tempfile
from pathlib import Path

from engage.cli import main as engage


def run(out: Path, seed: int, topics: int, posts: int, noise: float, mode: str):
    corpus = out / "corpus"
    result = out / "result"
    engage(["simulate", "--out", str(corpus), "--seed", str(seed), "--n-topics", str(topics),
            "--posts-per-topic", str(posts), "--price-noise", str(noise)])
    engage(["pipeline", "--corpus", str(corpus), "--out", str(result), "--mode", mode])
    with open(result / "dependence.csv", newline="") as fh:
        return list(csv.DictReader(fh))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--topics", type=int, default=16)
    ap.add_argument("--posts", type=int, default=4000)
    ap.add_argument("--noise", type=float, default=0.0, help="daily log-price noise")
    ap.add_argument("--mode", default="prior_data")
    ap.add_argument("--out", type=Path, help="keep outputs here instead of a temp dir")
    args = ap.parse_args()

    if args.out:
        rows = run(args.out, args.seed, args.topics, args.posts, args.noise, args.mode)
    else:
        with tempfile.TemporaryDirectory() as tmp:
            rows = run(Path(tmp), args.seed, args.topics, args.posts, args.noise, args.mode)

    print(f"{'feature':<16} {'h':>3} {'AUC':>7} {'|rho|':>7} {'n':>4}")
    for r in rows:
        auc = float(r["auc"]) if r["auc"] else float("nan")
        rho = float(r["abs_spearman"]) if r["abs_spearman"] else float("nan")
        print(f"{r['feature']:<16} {r['horizon_months']:>3} {auc:>7.3f} {rho:>7.3f} {r['n_topics']:>4}")


if __name__ == "__main__":
    main()

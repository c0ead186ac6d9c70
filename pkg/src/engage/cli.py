"""Command-line entry point: ``engage <subcommand> [flags]``.

Subcommands: validate, fit, features, evaluate, backtest, simulate, pipeline.
Every run that writes output also writes ``config.json`` echoing the
effective parameters.  Re-running with the same inputs and flags produces
byte-identical files.  Set ``ENGAGE_LOG`` (e.g. ``INFO``) for log output.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path
from typing import Optional, Sequence

from engage import _io
from engage.analytics import (
    DEFAULT_HORIZONS,
    build_return_matrix,
    dependence_curves,
    median_cluster_returns,
)
from engage.backtest import (
    QUANTILES,
    BacktestResult,
    ThresholdUnavailable,
    run_historical_backtest,
    threshold_grid,
)
from engage.corpus import (
    Corpus,
    CorpusError,
    InteractionKindSet,
    build_dataset,
    load_corpus,
    write_corpus,
)
from engage.engagement import (
    FitError,
    fit_closed_form,
    fit_numeric,
    model_to_dict,
)
from engage.features import (
    FEATURE_COLUMNS,
    FEATURE_NAMES,
    IN_SAMPLE,
    MODES,
    PRIOR_DATA,
    EngagementEstimator,
    FeatureTable,
    cluster_bot_probabilities,
    compute_features,
)
from engage.synthetic import SimulationSpec, build_universe

log = logging.getLogger("engage")

DEPENDENCE_COLUMNS = ("feature", "horizon_months", "abs_spearman", "auc", "n_topics")
CLUSTER_COLUMNS = ("cluster", "center", "horizon_months", "median_return", "n_topics")
BACKTEST_COLUMNS = ("feature", "threshold", "holding_months", "investment_date",
                    "portfolio_return", "n_traded", "n_skipped")
TRADE_COLUMNS = ("feature", "threshold", "holding_months", "investment_date",
                 "topic_id", "buy_date", "sell_date", "percent_return")


@dataclass
class RunConfig:
    command: str
    corpus_dir: Optional[Path]
    output_dir: Optional[Path]
    kinds: InteractionKindSet
    seed: int = 0
    mode: str = IN_SAMPLE
    horizons: tuple[int, ...] = DEFAULT_HORIZONS
    investment_dates: tuple[date, ...] = ()
    historical_holding: tuple[int, ...] = (1, 12)
    strict_users: bool = True
    k: int = 3
    restarts: int = 32
    verify: bool = False
    extra: dict = field(default_factory=dict)

    def echo(self) -> dict:
        return {
            "command": self.command,
            "corpus": str(self.corpus_dir) if self.corpus_dir else None,
            "kinds": list(self.kinds.names),
            "reference_kind": self.kinds.reference_kind,
            "seed": self.seed,
            "mode": self.mode,
            "horizons": list(self.horizons),
            "investment_dates": [d.isoformat() for d in self.investment_dates],
            "historical_holding": list(self.historical_holding),
            "strict_users": self.strict_users,
            "k": self.k,
            "restarts": self.restarts,
            "verify": self.verify,
            **self.extra,
        }


# -- argument parsing --------------------------------------------------------

def _int_list(text: str) -> tuple[int, ...]:
    out = []
    for part in text.split(","):
        part = part.strip()
        if ".." in part:
            lo, hi = part.split("..")
            out.extend(range(int(lo), int(hi) + 1))
        elif part:
            out.append(int(part))
    if not out or min(out) < 1:
        raise argparse.ArgumentTypeError(f"expected positive integers, got {text!r}")
    return tuple(out)


def _date_list(text: str) -> tuple[date, ...]:
    try:
        return tuple(date.fromisoformat(p.strip()) for p in text.split(",") if p.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def _float_list(text: str) -> list[float]:
    return [float(p) for p in text.split(",") if p.strip()]


def _float_pair(text: str) -> tuple[float, float]:
    vals = _float_list(text)
    if len(vals) != 2:
        raise argparse.ArgumentTypeError(f"expected two comma-separated numbers, got {text!r}")
    return vals[0], vals[1]


def _beta_map(text: str) -> dict[str, float]:
    out = {}
    for part in text.split(","):
        name, _, value = part.partition("=")
        if not value:
            raise argparse.ArgumentTypeError(f"expected kind=value, got {part!r}")
        out[name.strip()] = float(value)
    return out


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--corpus", type=Path, help="corpus directory")
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--kinds", default="like,retweet,reply",
                        help="comma-separated interaction kinds")
    common.add_argument("--reference-kind", default=None,
                        help="kind whose coefficient is pinned to 1 (default: first kind)")
    common.add_argument("--mode", choices=MODES, default=None)
    common.add_argument("--horizons", type=_int_list, default=DEFAULT_HORIZONS,
                        help="month horizons, e.g. 1..12 or 1,3,6")
    common.add_argument("--investment-dates", type=_date_list, default=(),
                        help="ISO dates for historical-threshold backtests")
    common.add_argument("--historical-holding", type=_int_list, default=(1, 12),
                        help="holding months for historical backtests")
    common.add_argument("--strict-users", action=argparse.BooleanOptionalAction, default=True,
                        help="fail on posts by users without a profile")
    common.add_argument("--k", type=int, default=3, help="bot-probability clusters")
    common.add_argument("--restarts", type=int, default=32, help="k-means restarts")

    parser = argparse.ArgumentParser(prog="engage", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("validate", parents=[common], help="check a corpus directory")
    fit = sub.add_parser("fit", parents=[common], help="fit the engagement model")
    fit.add_argument("--verify", action="store_true",
                     help="also run the numeric maximizer and report the disagreement")
    sub.add_parser("features", parents=[common], help="write features.csv")
    sub.add_parser("evaluate", parents=[common], help="write dependence and cluster curves")
    sub.add_parser("backtest", parents=[common], help="run threshold portfolios")
    sub.add_parser("pipeline", parents=[common], help="features, evaluation and backtests")

    sim = sub.add_parser("simulate", parents=[common], help="write a synthetic corpus")
    sim.add_argument("--spec", type=Path, help="JSON file with simulation parameters")
    sim.add_argument("--n-topics", type=int)
    sim.add_argument("--n-users", type=int)
    sim.add_argument("--alpha", type=_float_list, help="one value, or one per topic")
    sim.add_argument("--alpha-range", type=_float_pair)
    sim.add_argument("--beta", type=_beta_map, help="e.g. like=1,retweet=0.31,reply=0.19")
    sim.add_argument("--posts-per-topic", type=int)
    sim.add_argument("--follower-range", type=_float_pair)
    sim.add_argument("--start-date")
    sim.add_argument("--spacing-days", type=int)
    sim.add_argument("--no-bots", action="store_true")
    sim.add_argument("--price-drift", type=float)
    sim.add_argument("--price-noise", type=float)
    sim.add_argument("--price-days", type=int)
    return parser


_DEFAULT_MODE = {"fit": IN_SAMPLE}


def make_config(args: argparse.Namespace) -> RunConfig:
    kinds = InteractionKindSet.from_names(
        [k.strip() for k in args.kinds.split(",") if k.strip()], args.reference_kind)
    return RunConfig(
        command=args.command,
        corpus_dir=args.corpus,
        output_dir=args.out,
        kinds=kinds,
        seed=args.seed,
        mode=args.mode or _DEFAULT_MODE.get(args.command, PRIOR_DATA),
        horizons=tuple(args.horizons),
        investment_dates=tuple(args.investment_dates),
        historical_holding=tuple(args.historical_holding),
        strict_users=args.strict_users,
        k=args.k,
        restarts=args.restarts,
        verify=getattr(args, "verify", False),
    )


# -- report builders ---------------------------------------------------------

def _load(config: RunConfig, require_prices: bool = False) -> Corpus:
    if config.corpus_dir is None:
        raise UsageError("--corpus is required")
    return load_corpus(config.corpus_dir, config.kinds.names, require_prices=require_prices)


def _out(config: RunConfig) -> Path:
    if config.output_dir is None:
        raise UsageError("--out is required")
    config.output_dir.mkdir(parents=True, exist_ok=True)
    return config.output_dir


class UsageError(ValueError):
    pass


def dependence_rows(features: FeatureTable, returns) -> list[dict]:
    return [vars(c) for c in dependence_curves(features, returns)]


def cluster_rows(features: FeatureTable, returns, k: int, seed: int, restarts: int):
    """Cluster rows, or None with a reason when clustering is not possible."""
    bots = {t: v for t, v in features.values("bot_probability").items() if v is not None}
    if not bots:
        return None, "no bot probabilities in corpus"
    try:
        clustering = cluster_bot_probabilities(bots, k, seed, restarts)
    except ValueError as exc:
        return None, str(exc)
    return [vars(c) for c in median_cluster_returns(clustering, returns)], clustering


def backtest_rows(results: Sequence[BacktestResult]) -> tuple[list[dict], list[dict]]:
    rows, trades = [], []
    for r in results:
        s = r.spec
        key = {"feature": s.feature_name, "threshold": s.threshold,
               "holding_months": s.holding_months, "investment_date": s.investment_date}
        rows.append({**key, "portfolio_return": r.portfolio_return,
                     "n_traded": len(r.trades), "n_skipped": len(r.skipped)})
        trades.extend({**key, **vars(t)} for t in r.trades)
    return rows, trades


def run_backtests(config: RunConfig, features: FeatureTable, prices) -> tuple[list, list]:
    results = threshold_grid(features, prices, config.horizons)
    notes = []
    for d in config.investment_dates:
        for name in FEATURE_NAMES:
            for q in QUANTILES:
                for h in config.historical_holding:
                    try:
                        results.append(run_historical_backtest(features, prices, name, q, h, d))
                    except ThresholdUnavailable as exc:
                        notes.append(f"{d} {name} q{q}: {exc}")
    return results, notes


# -- subcommands -------------------------------------------------------------

def cmd_validate(config: RunConfig) -> dict:
    corpus = _load(config)
    ds = build_dataset(corpus, config.kinds, strict_users=config.strict_users)
    summary = {
        "topics": len(corpus.topics),
        "users": len(corpus.profiles),
        "posts": len(corpus.posts),
        "priced_topics": len(corpus.prices),
        "interactions": ds.n,
        "interactions_by_kind": dict(ds.l),
        "dropped_posts": ds.dropped_posts,
        "uncovered_topics": sorted(ds.uncovered),
    }
    print(_io.dumps_json(summary), end="")
    if config.output_dir is not None:
        _io.write_json(_out(config) / "validation.json", summary)
    return summary


def _fit_entry(report, config: RunConfig, dataset) -> dict:
    diag = report.diagnostics()
    if config.verify:
        numeric = fit_numeric(dataset)
        diff = 0.0
        for group in ("alpha", "beta"):
            a, b = getattr(report.model, group), getattr(numeric.model, group)
            for key in a:
                scale = max(abs(a[key]), abs(b[key]))
                if scale:
                    diff = max(diff, abs(a[key] - b[key]) / scale)
        diag["numeric_check"] = {"status": numeric.status, "iterations": numeric.iterations,
                                 "max_relative_difference": diff}
    return diag


def cmd_fit(config: RunConfig) -> dict:
    corpus = _load(config)
    out = _out(config)
    if config.mode == IN_SAMPLE:
        ds = build_dataset(corpus, config.kinds, strict_users=config.strict_users)
        report = fit_closed_form(ds)
        diag = _fit_entry(report, config, ds)
        _io.write_json(out / "model.json", model_to_dict(report.model, diag))
        _io.write_json(out / "fit_report.json", {"mode": IN_SAMPLE, **diag})
        return diag
    estimator = EngagementEstimator(corpus, config.kinds, config.strict_users)
    reports = {}
    for t in sorted(corpus.topics):
        cutoff = estimator.cutoff(t, PRIOR_DATA)
        result = estimator.fit(cutoff)
        if isinstance(result, FitError):
            reports[t] = {"cutoff": cutoff.isoformat(), "error": str(result)}
            continue
        diag = {"cutoff": cutoff.isoformat(), **result.diagnostics()}
        _io.write_json(out / "models" / f"{t}.json", model_to_dict(result.model, diag))
        reports[t] = {**diag, "alpha": result.model.alpha.get(t)}
    summary = {"mode": PRIOR_DATA, "topics": reports}
    _io.write_json(out / "fit_report.json", summary)
    return summary


def cmd_features(config: RunConfig) -> FeatureTable:
    corpus = _load(config)
    table = compute_features(corpus, config.kinds, config.mode, config.strict_users)
    _io.write_csv(_out(config) / "features.csv", FEATURE_COLUMNS, table.records())
    return table


def _evaluate(config: RunConfig, corpus: Corpus, table: FeatureTable, out: Path,
              summary: dict):
    returns = build_return_matrix(table.creation_dates(), corpus.prices, config.horizons)
    _io.write_csv(out / "returns.csv", ("topic_id", "horizon_months", "percent_return"),
                  ({"topic_id": t, "horizon_months": h, "percent_return": returns.get(t, h)}
                   for t in sorted(returns.cells) for h in returns.horizons))
    summary["dependence_rows"] = _io.write_csv(
        out / "dependence.csv", DEPENDENCE_COLUMNS, dependence_rows(table, returns))
    rows, clustering = cluster_rows(table, returns, config.k, config.seed, config.restarts)
    path = out / "cluster_returns.csv"
    if rows is None:
        if path.exists():
            path.unlink()
        summary["cluster_returns"] = f"skipped: {clustering}"
    else:
        _io.write_csv(path, CLUSTER_COLUMNS, rows)
        summary["cluster_returns"] = {"centers": list(clustering.centers),
                                      "sizes": clustering.sizes(),
                                      "inertia": clustering.inertia}
    return returns


def cmd_evaluate(config: RunConfig) -> dict:
    corpus = _load(config, require_prices=True)
    out = _out(config)
    table = compute_features(corpus, config.kinds, config.mode, config.strict_users)
    summary: dict = {}
    _evaluate(config, corpus, table, out, summary)
    _io.write_json(out / "summary.json", summary)
    return summary


def cmd_backtest(config: RunConfig) -> dict:
    corpus = _load(config, require_prices=True)
    out = _out(config)
    table = compute_features(corpus, config.kinds, config.mode, config.strict_users)
    results, notes = run_backtests(config, table, corpus.prices)
    rows, trades = backtest_rows(results)
    _io.write_csv(out / "backtest.csv", BACKTEST_COLUMNS, rows)
    _io.write_csv(out / "trades.csv", TRADE_COLUMNS, trades)
    summary = {"portfolios": len(rows), "trades": len(trades), "notes": notes}
    _io.write_json(out / "summary.json", summary)
    return summary


def cmd_pipeline(config: RunConfig) -> dict:
    corpus = _load(config, require_prices=True)
    out = _out(config)
    table = compute_features(corpus, config.kinds, config.mode, config.strict_users)
    _io.write_csv(out / "features.csv", FEATURE_COLUMNS, table.records())
    summary: dict = {
        "topics": len(table.rows),
        "no_engagement_estimate": {t: r.note for t, r in table.rows.items()
                                   if r.engagement_coefficient is None},
        "unpriced_topics": sorted(set(corpus.topics) - set(corpus.prices)),
    }
    _evaluate(config, corpus, table, out, summary)
    results, notes = run_backtests(config, table, corpus.prices)
    rows, trades = backtest_rows(results)
    _io.write_csv(out / "backtest.csv", BACKTEST_COLUMNS, rows)
    _io.write_csv(out / "trades.csv", TRADE_COLUMNS, trades)
    summary["backtest_notes"] = notes
    _io.write_json(out / "summary.json", summary)
    return summary


def simulation_spec(args: argparse.Namespace, config: RunConfig) -> SimulationSpec:
    data: dict = {}
    if args.spec is not None:
        data.update(json.loads(args.spec.read_text(encoding="utf-8")))
    flags = {
        "n_topics": args.n_topics, "n_users": args.n_users, "alpha": args.alpha,
        "alpha_range": args.alpha_range, "beta": args.beta,
        "posts_per_topic": args.posts_per_topic, "start_date": args.start_date,
        "spacing_days": args.spacing_days, "price_drift": args.price_drift,
        "price_noise": args.price_noise, "price_days": args.price_days,
    }
    if args.follower_range is not None:
        flags["follower_range"] = tuple(int(v) for v in args.follower_range)
    if args.no_bots:
        flags["bot_probabilities"] = False
    data.update({k: v for k, v in flags.items() if v is not None})
    data.setdefault("reference_kind", config.kinds.reference_kind)
    if "beta" not in data and config.kinds.names != InteractionKindSet().names:
        raise UsageError("--beta is required for non-default --kinds")
    return SimulationSpec.from_dict(data)


def cmd_simulate(config: RunConfig, args: argparse.Namespace) -> dict:
    spec = simulation_spec(args, config)
    out = _out(config)
    corpus, model = build_universe(spec, config.seed)
    write_corpus(corpus, out, list(model.beta))
    _io.write_json(out / "planted_model.json", model_to_dict(model))
    config.extra["simulation"] = spec.to_dict()
    return {"topics": len(corpus.topics), "posts": len(corpus.posts)}


COMMANDS = {
    "validate": cmd_validate,
    "fit": cmd_fit,
    "features": cmd_features,
    "evaluate": cmd_evaluate,
    "backtest": cmd_backtest,
    "pipeline": cmd_pipeline,
}


def _fail(exc: Exception, code: int) -> int:
    record = exc.to_record() if hasattr(exc, "to_record") else {
        "error": type(exc).__name__, "message": str(exc)}
    print(json.dumps(record, sort_keys=True), file=sys.stderr)
    return code


def main(argv: Sequence[str] | None = None) -> int:
    logging.basicConfig(level=os.environ.get("ENGAGE_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = make_config(args)
        if args.command == "simulate":
            cmd_simulate(config, args)
        else:
            COMMANDS[args.command](config)
        if config.output_dir is not None:
            _io.write_json(config.output_dir / "config.json", config.echo())
    except CorpusError as exc:
        return _fail(exc, 2)
    except FitError as exc:
        return _fail(exc, 3)
    except (UsageError, ValueError, OSError) as exc:
        return _fail(exc, 2)
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Poisson engagement model.

Each post ``k`` by user ``u`` on topic ``c`` receives ``n_cuik`` interactions
of kind ``i``, drawn from ``Poisson(beta_i * alpha_c * f_u)`` where ``f_u``
is the poster's follower count.  The likelihood depends on the data only
through the aggregates held by :class:`~engage.corpus.InteractionDataset`.

Setting the gradient to zero with the reference kind pinned to 1 yields::

    beta_i  = l_i / l_ref
    alpha_c = n_c * l_ref / (v_c * n)

(``alpha_c = n_c / (v_c * sum(beta))`` and ``sum(beta) = n / l_ref``).  With a
single kind this reduces to ``n_c / v_c``.  :func:`fit_numeric` maximizes the
likelihood directly and serves as an independent check on the closed form.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from datetime import date, timedelta
from typing import Mapping, Optional, Sequence

import numpy as np

from engage.corpus import (
    Corpus,
    InteractionDataset,
    InteractionKindSet,
    Post,
    TopicMeta,
    UserProfile,
    build_dataset,
    first_month_window,
)

log = logging.getLogger(__name__)

NUMERIC_TOLERANCE = 1e-10
NUMERIC_MAX_ITERATIONS = 10_000


class FitError(ValueError):
    """The dataset does not admit a maximum-likelihood fit."""


class EmptyDataError(FitError):
    pass


class ReferenceKindError(FitError):
    pass


class ImpossibleDataError(ValueError):
    """Some count is positive where the model mean is zero (likelihood -inf)."""


class SingularGradientError(ValueError):
    pass


@dataclass(frozen=True)
class EngagementModel:
    alpha: Mapping[str, float]
    beta: Mapping[str, float]
    reference_kind: str

    def __post_init__(self):
        if self.beta.get(self.reference_kind) != 1.0:
            raise ValueError(f"beta[{self.reference_kind!r}] must be exactly 1")
        bad = [k for k, v in {**self.alpha, **self.beta}.items() if not v >= 0]
        if bad:
            raise ValueError(f"negative or NaN coefficients for {bad}")

    @property
    def kinds(self) -> InteractionKindSet:
        return InteractionKindSet.from_names(self.beta, self.reference_kind)

    def mean(self, topic_id: str, kind: str, followers: int) -> float:
        return self.beta[kind] * self.alpha[topic_id] * followers


@dataclass
class FitReport:
    model: EngagementModel
    log_likelihood_at_fit: float
    gradient_sup_norm_at_fit: float
    excluded_topics: list[tuple[str, str]] = field(default_factory=list)
    method: str = "closed_form"
    converged: bool = True
    iterations: int = 0
    identity_residual: float = 0.0
    notes: list[str] = field(default_factory=list)

    @property
    def status(self) -> str:
        return "converged" if self.converged else "max_iterations_reached"

    def diagnostics(self) -> dict:
        return {
            "method": self.method,
            "status": self.status,
            "iterations": self.iterations,
            "log_likelihood": self.log_likelihood_at_fit,
            "gradient_sup_norm": self.gradient_sup_norm_at_fit,
            "identity_residual": self.identity_residual,
            "excluded_topics": [{"topic_id": t, "reason": r} for t, r in self.excluded_topics],
            "notes": list(self.notes),
        }


# -- likelihood and gradient -------------------------------------------------

def _check_coverage(dataset: InteractionDataset, model: EngagementModel):
    missing = [t for t in dataset.covered_topics if t not in model.alpha]
    if missing:
        raise ValueError(f"model has no alpha for topics {missing}")
    missing = [k for k in dataset.kinds if k not in model.beta]
    if missing:
        raise ValueError(f"model has no beta for kinds {missing}")


def log_likelihood(dataset: InteractionDataset, model: EngagementModel) -> float:
    """Exact Poisson log-probability of every retained count, constants included."""
    _check_coverage(dataset, model)
    if dataset.zero_exposure_interactions:
        raise ImpossibleDataError(
            f"{dataset.zero_exposure_interactions} interactions on posts by users with no followers")
    total_beta = sum(model.beta[k] for k in dataset.kinds)
    value = dataset.follower_log_sum - dataset.log_factorial_sum
    for c in dataset.covered_topics:
        a = model.alpha[c]
        value -= a * dataset.v_c[c] * total_beta
        if dataset.n_c[c]:
            if a == 0:
                raise ImpossibleDataError(f"topic {c!r} has interactions but alpha = 0")
            value += dataset.n_c[c] * math.log(a)
    for k in dataset.kinds:
        if dataset.l[k]:
            if model.beta[k] == 0:
                raise ImpossibleDataError(f"kind {k!r} has interactions but beta = 0")
            value += dataset.l[k] * math.log(model.beta[k])
    return value


def gradient(dataset: InteractionDataset, model: EngagementModel
             ) -> tuple[dict[str, float], dict[str, float]]:
    """Partial derivatives of the log-likelihood.

    The reference kind is pinned and omitted from the beta gradient.
    """
    _check_coverage(dataset, model)
    kinds = dataset.kinds
    total_beta = sum(model.beta[k] for k in kinds)
    exposure = sum(model.alpha[c] * dataset.v_c[c] for c in dataset.covered_topics)
    d_alpha = {}
    for c in dataset.covered_topics:
        a, n_c = model.alpha[c], dataset.n_c[c]
        if a == 0 and n_c:
            raise SingularGradientError(f"alpha[{c!r}] = 0 with {n_c} interactions")
        d_alpha[c] = -dataset.v_c[c] * total_beta + (n_c / a if n_c else 0.0)
    d_beta = {}
    for k in kinds:
        if k == kinds.reference_kind:
            continue
        b, l_k = model.beta[k], dataset.l[k]
        if b == 0 and l_k:
            raise SingularGradientError(f"beta[{k!r}] = 0 with {l_k} interactions")
        d_beta[k] = -exposure + (l_k / b if l_k else 0.0)
    return d_alpha, d_beta


def projected_sup_norm(model: EngagementModel, d_alpha: Mapping[str, float],
                       d_beta: Mapping[str, float]) -> float:
    """Sup-norm of the gradient projected onto the feasible set ``params >= 0``.

    A parameter sitting at 0 with a non-positive derivative is a boundary
    optimum and contributes nothing.
    """
    parts = [0.0]
    for c, g in d_alpha.items():
        parts.append(max(g, 0.0) if model.alpha[c] == 0 else abs(g))
    for k, g in d_beta.items():
        parts.append(max(g, 0.0) if model.beta[k] == 0 else abs(g))
    return max(parts)


# -- fitting ---------------------------------------------------------------

def _prepare(dataset: InteractionDataset):
    """Drop topics the model cannot estimate and validate what remains."""
    if dataset.n == 0:
        raise EmptyDataError("no interactions in the dataset")
    excluded = []
    for c in dataset.topic_ids:
        if c in dataset.uncovered:
            excluded.append((c, "no posts"))
        elif dataset.v_c[c] == 0:
            excluded.append((c, "zero follower exposure"))
    if excluded:
        dropped = {c for c, _ in excluded}
        dataset = dataset.subset(c for c in dataset.topic_ids if c not in dropped)
        if dataset.n == 0:
            raise EmptyDataError("no interactions on topics with follower exposure")
    ref = dataset.kinds.reference_kind
    if dataset.l[ref] == 0:
        raise ReferenceKindError(
            f"no {ref!r} interactions; choose another reference kind to normalize")
    return dataset, excluded


def _finish(dataset, model, excluded, method, converged=True, iterations=0) -> FitReport:
    notes = []
    try:
        ll = log_likelihood(dataset, model)
    except ImpossibleDataError as exc:
        ll = -math.inf
        notes.append(f"log-likelihood is -inf: {exc}")
    d_alpha, d_beta = gradient(dataset, model)
    ref = dataset.l[dataset.kinds.reference_kind]
    exposure = math.fsum(model.alpha[c] * dataset.v_c[c] for c in model.alpha)
    return FitReport(
        model=model,
        log_likelihood_at_fit=ll,
        gradient_sup_norm_at_fit=projected_sup_norm(model, d_alpha, d_beta),
        excluded_topics=excluded,
        method=method,
        converged=converged,
        iterations=iterations,
        identity_residual=abs(exposure - ref) / ref,
        notes=notes,
    )


def fit_closed_form(dataset: InteractionDataset) -> FitReport:
    """Closed-form maximum-likelihood estimates.

    Topics without posts or without follower exposure are excluded and the
    estimates are computed on the remaining data.
    """
    dataset, excluded = _prepare(dataset)
    kinds = dataset.kinds
    ref_kind = kinds.reference_kind
    l_ref, n = dataset.l[ref_kind], dataset.n
    # integer numerators/denominators: one correctly rounded division each
    beta = {k: (1.0 if k == ref_kind else dataset.l[k] / l_ref) for k in kinds}
    alpha = {c: dataset.n_c[c] * l_ref / (dataset.v_c[c] * n) for c in dataset.topic_ids}
    return _finish(dataset, EngagementModel(alpha, beta, ref_kind), excluded, "closed_form")


def fit_numeric(dataset: InteractionDataset, tolerance: float = NUMERIC_TOLERANCE,
                max_iterations: int = NUMERIC_MAX_ITERATIONS) -> FitReport:
    """Maximize the likelihood by damped Newton steps on log-parameters.

    In log-coordinates the objective is strictly concave once the reference
    kind is pinned, so Newton with backtracking converges to the unique
    maximum.  Topics (kinds) with no interactions sit on the boundary at 0.
    Iteration stops when the sup-norm of the log-coordinate gradient falls
    below ``tolerance * max(1, n)``.
    """
    dataset, excluded = _prepare(dataset)
    kinds = dataset.kinds
    ref_kind = kinds.reference_kind
    topics = [c for c in dataset.topic_ids if dataset.n_c[c] > 0]
    free_kinds = [k for k in kinds if k != ref_kind and dataset.l[k] > 0]
    nt = len(topics)
    v = np.array([dataset.v_c[c] for c in topics], dtype=float)
    counts = np.array([dataset.n_c[c] for c in topics]
                      + [dataset.l[k] for k in free_kinds], dtype=float)

    def objective(x):
        a, b = np.exp(x[:nt]), np.exp(x[nt:])
        return -(a @ v) * (1.0 + b.sum()) + counts @ x

    def grad_hess(x):
        a, b = np.exp(x[:nt]), np.exp(x[nt:])
        av = a * v
        total_beta = 1.0 + b.sum()
        g = counts - np.concatenate([av * total_beta, b * av.sum()])
        h = np.zeros((len(x), len(x)))
        h[np.arange(nt), np.arange(nt)] = -av * total_beta
        h[:nt, nt:] = -np.outer(av, b)
        h[nt:, :nt] = h[:nt, nt:].T
        h[np.arange(nt, len(x)), np.arange(nt, len(x))] = -b * av.sum()
        return g, h

    x = np.concatenate([np.log(counts[:nt] / v), np.zeros(len(free_kinds))])
    threshold = tolerance * max(1.0, float(dataset.n))
    converged = False
    it = 0
    g, h = grad_hess(x)
    while it < max_iterations:
        if np.max(np.abs(g)) < threshold:
            converged = True
            break
        it += 1
        step = np.linalg.solve(h, -g)
        f0, slope, t = objective(x), float(g @ step), 1.0
        gnorm = np.max(np.abs(g))
        while True:
            cand = x + t * step
            g_new, h_new = grad_hess(cand)
            if (objective(cand) >= f0 + 1e-4 * t * slope
                    or np.max(np.abs(g_new)) < 0.5 * gnorm or t < 1e-12):
                break
            t *= 0.5
        x, g, h = cand, g_new, h_new
    if not converged:
        log.warning("fit_numeric stopped after %d iterations, gradient %.3g",
                    it, float(np.max(np.abs(g))))
    alpha = {c: 0.0 for c in dataset.topic_ids}
    alpha.update(zip(topics, np.exp(x[:nt]).tolist()))
    beta = {k: 0.0 for k in kinds}
    beta[ref_kind] = 1.0
    beta.update(zip(free_kinds, np.exp(x[nt:]).tolist()))
    model = EngagementModel(alpha, beta, ref_kind)
    return _finish(dataset, model, excluded, "numeric", converged, it)


# -- synthetic data --------------------------------------------------------

def sample_corpus(model: EngagementModel, profiles: Sequence[UserProfile] | Mapping[str, UserProfile],
                  plan: Mapping[tuple[str, str], int], seed: int,
                  topics: Mapping[str, TopicMeta] | None = None) -> Corpus:
    """Draw a corpus of posts from the generative model.

    ``plan`` maps ``(topic_id, user_id)`` to the number of posts.  Counts are
    drawn for topics, users, posts and kinds in that (sorted, sorted, post,
    declared) order from one generator, then timestamps uniformly over each
    topic's first-month window, so a seed fixes the corpus bit for bit.
    """
    if not isinstance(profiles, Mapping):
        profiles = {p.user_id: p for p in profiles}
    if topics is None:
        topics = {t: TopicMeta(t, date(2021, 1, 1)) for t in model.alpha}
    kinds = model.kinds
    rng = np.random.default_rng(seed)

    keys = []
    means = []
    for (c, u), m in sorted(plan.items()):
        if m < 0:
            raise ValueError(f"negative post count for {(c, u)}")
        f = profiles[u].follower_count
        for _ in range(m):
            keys.append((c, u))
            means.append([model.mean(c, k, f) for k in kinds])
    mu = np.asarray(means, dtype=float).reshape(len(keys), len(kinds))
    draws = rng.poisson(mu)
    offsets = rng.integers(0, 30 * 86400, size=len(keys))

    posts = []
    for (c, u), row, off in zip(keys, draws.tolist(), offsets.tolist()):
        start, _ = first_month_window(topics[c])
        posts.append(Post(c, u, start + timedelta(seconds=off), dict(zip(kinds, row))))
    return Corpus(dict(topics), dict(profiles), posts, {})


def sample_synthetic(model: EngagementModel, profiles, plan, seed: int,
                     topics: Mapping[str, TopicMeta] | None = None) -> InteractionDataset:
    corpus = sample_corpus(model, profiles, plan, seed, topics)
    return build_dataset(corpus, model.kinds)


# -- serialization -----------------------------------------------------------

def model_to_dict(model: EngagementModel, diagnostics: Optional[dict] = None) -> dict:
    return {
        "reference_kind": model.reference_kind,
        "beta": dict(model.beta),
        "alpha": dict(sorted(model.alpha.items())),
        "diagnostics": diagnostics or {},
    }


def model_from_dict(data: Mapping) -> EngagementModel:
    return EngagementModel(
        alpha={str(k): float(v) for k, v in data["alpha"].items()},
        beta={str(k): float(v) for k, v in data["beta"].items()},
        reference_kind=data["reference_kind"],
    )

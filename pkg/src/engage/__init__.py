"""Poisson engagement coefficients from social-media interaction counts, and
their use as return-predicting features."""

from engage.corpus import (
    Corpus,
    InteractionDataset,
    InteractionKindSet,
    Post,
    TopicMeta,
    UserProfile,
    build_dataset,
    first_month_window,
    load_corpus,
)
from engage.engagement import (
    EngagementModel,
    FitReport,
    fit_closed_form,
    fit_numeric,
    gradient,
    log_likelihood,
    sample_synthetic,
)

__all__ = [
    "Corpus", "InteractionDataset", "InteractionKindSet", "Post", "TopicMeta",
    "UserProfile", "build_dataset", "first_month_window", "load_corpus",
    "EngagementModel", "FitReport", "fit_closed_form", "fit_numeric", "gradient",
    "log_likelihood", "sample_synthetic",
]

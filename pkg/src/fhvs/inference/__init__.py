"""Area-level model variants and their posterior computation."""

from .diagnostics import bulk_ess, split_rhat
from .model import (
    ALL_MODELS,
    FitData,
    ModelState,
    ModelVariant,
    PriorConfig,
    build_fit_data,
    chi_square_shape,
    log_posterior,
    scaled_chi2_logpdf,
    theoretical_variance,
)
from .sampler import ConvergenceWarning, McmcConfig, PosteriorDraws, fit
from .summaries import AreaSummary, rank_probabilities, summarize_draws, summarize_posterior

__all__ = [
    "ALL_MODELS",
    "AreaSummary",
    "ConvergenceWarning",
    "FitData",
    "McmcConfig",
    "ModelState",
    "ModelVariant",
    "PosteriorDraws",
    "PriorConfig",
    "build_fit_data",
    "bulk_ess",
    "chi_square_shape",
    "fit",
    "log_posterior",
    "rank_probabilities",
    "scaled_chi2_logpdf",
    "split_rhat",
    "summarize_draws",
    "summarize_posterior",
    "theoretical_variance",
]

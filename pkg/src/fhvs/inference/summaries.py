"""Posterior summaries and rank probabilities."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class AreaSummary:
    mean: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower


def summarize_draws(x, level: float = 0.90) -> AreaSummary:
    """Mean and equal-tailed interval over axis 0 (type-7 quantiles)."""
    x = np.asarray(x, dtype=float)
    if x.size == 0 or x.shape[0] == 0:
        raise ValueError("no draws to summarize")
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    tail = (1 - level) / 2
    lo, hi = np.quantile(x, [tail, 1 - tail], axis=0, method="linear")
    return AreaSummary(x.mean(axis=0), lo, hi)


def summarize_posterior(draws, level: float = 0.90) -> dict[str, AreaSummary]:
    """Per-area summaries of theta and, for smoothing models, sigma2."""
    out = {"theta": summarize_draws(draws.flat("theta"), level)}
    if "sigma2" in draws:
        out["sigma2"] = summarize_draws(draws.flat("sigma2"), level)
    return out


def rank_probabilities(theta_draws, p: float) -> np.ndarray:
    """P(area is in the lowest p fraction), from draws shaped (S, K).

    Each draw scores an area by the fraction of areas it strictly exceeds.
    """
    if not 0 < p < 1:
        raise ValueError("p must lie in (0, 1)")
    x = np.asarray(theta_draws, dtype=float)
    if x.ndim != 2:
        raise ValueError("expected draws shaped (draws, areas)")
    S, K = x.shape
    srt = np.sort(x, axis=1)
    exceeds = np.empty_like(x, dtype=np.int64)
    for s in range(S):
        exceeds[s] = np.searchsorted(srt[s], x[s], side="left")
    return np.mean(exceeds / K <= p, axis=0)

"""Rank-normalized split R-hat and bulk effective sample size.

Arrays are shaped (chains, draws, params).
"""

from __future__ import annotations

import numpy as np
from scipy.special import ndtri
from scipy.stats import rankdata


def _split(x: np.ndarray) -> np.ndarray:
    n = x.shape[1] // 2
    if n < 2:
        raise ValueError("need at least four draws per chain")
    return np.concatenate([x[:, :n], x[:, x.shape[1] - n :]], axis=0)


def _rank_normalize(x: np.ndarray) -> np.ndarray:
    C, N, P = x.shape
    flat = x.reshape(C * N, P)
    r = rankdata(flat, axis=0, method="average")
    return ndtri((r - 0.375) / (C * N + 0.25)).reshape(C, N, P)


def _rhat_raw(x: np.ndarray) -> np.ndarray:
    _, N, _ = x.shape
    chain_mean = x.mean(axis=1)
    W = x.var(axis=1, ddof=1).mean(axis=0)
    B = N * chain_mean.var(axis=0, ddof=1)
    var_plus = (N - 1) / N * W + B / N
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.sqrt(var_plus / W)
    # constant draws are trivially converged
    return np.where(W > 0, out, 1.0)


def split_rhat(x) -> np.ndarray:
    """max of bulk and folded rank-normalized split R-hat, per parameter."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 2:
        x = x[..., None]
    s = _split(x)
    bulk = _rhat_raw(_rank_normalize(s))
    folded = _rhat_raw(_rank_normalize(np.abs(s - np.median(s, axis=(0, 1)))))
    return np.maximum(bulk, folded)


def _autocov(x: np.ndarray) -> np.ndarray:
    """Per-chain autocovariance along axis 1 (biased normalization)."""
    N = x.shape[1]
    xc = x - x.mean(axis=1, keepdims=True)
    nfft = 1 << (2 * N - 1).bit_length()
    f = np.fft.rfft(xc, n=nfft, axis=1)
    return np.fft.irfft(f * np.conj(f), n=nfft, axis=1)[:, :N] / N


def ess(x) -> np.ndarray:
    """Effective sample size via Geyer's initial monotone sequence."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 2:
        x = x[..., None]
    C, N, P = x.shape
    acov = _autocov(x)
    chain_var = acov[:, 0] * N / (N - 1)
    W = chain_var.mean(axis=0)
    var_plus = W * (N - 1) / N
    if C > 1:
        var_plus = var_plus + x.mean(axis=1).var(axis=0, ddof=1)
    out = np.full(P, float(C * N))
    for p in range(P):
        if not W[p] > 0:
            continue
        rho = 1.0 - (W[p] - acov[:, :, p].mean(axis=0)) / var_plus[p]
        rho[0] = 1.0
        npairs = N // 2
        pairs = rho[: 2 * npairs].reshape(npairs, 2).sum(axis=1)
        stop = np.flatnonzero(pairs <= 0)
        pairs = pairs[: stop[0] if len(stop) else npairs]
        pairs = np.minimum.accumulate(pairs)
        tau = -1.0 + 2.0 * pairs.sum()
        out[p] = C * N / max(tau, 1.0 / np.log10(C * N))
    return out


def bulk_ess(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 2:
        x = x[..., None]
    return ess(_rank_normalize(_split(x)))

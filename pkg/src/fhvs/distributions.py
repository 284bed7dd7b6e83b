"""Sampling distributions of the Taylor variance estimator.

Two scaled chi-square laws are provided: the *simple* law, exact under
equal weights/sizes in a planned domain, and the survey-weighted law built
from the eigensystem of the weighted quadratic form, reduced to one scaled
chi-square by two-moment (Satterthwaite) matching.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .estimators import DesignError, quadratic_form_matrix
from .tables import AreaSample

EIGEN_REL_TOL = 1e-10


@dataclass(frozen=True)
class ChiSquareParams:
    """``V_hat ~ v * c * chi2_d``."""

    scale: float
    df: float
    theoretical_variance: float

    @property
    def mean(self) -> float:
        return self.scale * self.df * self.theoretical_variance

    @property
    def variance(self) -> float:
        return 2.0 * self.scale**2 * self.df * self.theoretical_variance**2

    def logpdf(self, v_hat):
        s = self.scale * self.theoretical_variance
        x = np.asarray(v_hat, dtype=float) / s
        d = self.df
        return (d / 2 - 1) * np.log(x) - x / 2 - d / 2 * math.log(2) - math.lgamma(d / 2) - math.log(s)

    def ppf(self, q):
        from scipy import stats

        return self.scale * self.theoretical_variance * stats.chi2.ppf(q, self.df)


def v_star(s: AreaSample, sigma2: float) -> float:
    """Design variance of the Hajek mean under iid within-stratum outcomes, given weights and sizes."""
    w = s.wstar[s.inside]
    if w.size == 0:
        raise DesignError("no sampled clusters in area")
    n = s.n[s.inside]
    return sigma2 * math.fsum(w * w / n) / math.fsum(w) ** 2


def v_dagger(s: AreaSample, sigma2: float) -> float:
    total = s.total_n
    if total <= 0:
        raise DesignError("zero in-area sample size")
    return sigma2 / total


def simple_params(s: AreaSample, sigma2: float = 1.0, legacy: bool = False) -> ChiSquareParams:
    """Nominal-df law: df = clusters - strata; ``legacy`` uses df = individuals - 1."""
    if legacy:
        df = s.total_n - 1
        if df <= 0:
            raise DesignError("legacy df needs more than one sampled individual")
    else:
        df = s.m_dot - s.strata_count
        if df <= 0:
            raise DesignError(f"area {s.area}: clusters ({s.m_dot}) do not exceed strata ({s.strata_count})")
    return ChiSquareParams(1.0 / df, float(df), v_dagger(s, sigma2))


@dataclass(frozen=True)
class SaswEigensystem:
    """Nonzero spectrum of D^1/2 M D^1/2 for one area.

    ``vectors`` columns are the back-transformed eigenvectors (v'Dv = 1);
    ``a`` holds the squared projections onto the urban indicator.
    """

    area: int
    q: np.ndarray
    a: np.ndarray
    wDw: float
    sum_wstar: float
    vectors: np.ndarray
    m_dot: int

    @property
    def rank(self) -> int:
        return len(self.q)

    def noncentrality(self, gamma: float, sigma2: float) -> np.ndarray:
        return gamma * gamma * self.a / sigma2

    def noncentrality_general(self, gamma_vec, sigma2: float) -> np.ndarray:
        """Noncentrality for an arbitrary per-cluster mean-shift vector (in-area clusters)."""
        proj = self.vectors.T @ np.asarray(gamma_vec, dtype=float)
        return proj * proj / sigma2

    def moments(self, delta) -> tuple[float, float]:
        q = self.q
        q1 = float(np.sum(q * (1 + delta)))
        q2 = float(2 * np.sum(q * q * (1 + 2 * delta)))
        return q1, q2


def _inside_matrix(s: AreaSample) -> np.ndarray:
    inside = s.inside
    M = quadratic_form_matrix(s)
    return M[np.ix_(inside, inside)]


def sasw_eigensystem(s: AreaSample, urban=None, rel_tol: float = EIGEN_REL_TOL) -> SaswEigensystem:
    if s.m_dot < 2:
        raise DesignError("eigensystem needs at least two in-area clusters")
    if not (np.all(np.isfinite(s.ybar)) and np.all(np.isfinite(s.wstar)) and np.all(np.isfinite(s.n))):
        raise DesignError("non-finite inputs")
    M = _inside_matrix(s)
    n = s.n[s.inside]
    w = s.wstar[s.inside]
    root = 1.0 / np.sqrt(n)
    A = root[:, None] * M * root[None, :]
    A = 0.5 * (A + A.T)
    evals, evecs = np.linalg.eigh(A)
    top = evals.max() if evals.size else 0.0
    keep = evals > rel_tol * top if top > 0 else np.zeros_like(evals, dtype=bool)
    q = evals[keep][::-1]
    vecs = (np.sqrt(n)[:, None] * evecs[:, keep])[:, ::-1]
    u = (s.urban if urban is None else np.asarray(urban, dtype=bool)[: len(s.urban)])[s.inside]
    a = (vecs.T @ u.astype(float)) ** 2
    return SaswEigensystem(
        area=s.area,
        q=q,
        a=a,
        wDw=float(math.fsum(w * w / n)),
        sum_wstar=float(math.fsum(w)),
        vectors=vecs,
        m_dot=s.m_dot,
    )


def sasw_params(eig: SaswEigensystem, gamma: float, sigma2: float, delta=None) -> ChiSquareParams:
    """Two-moment scaled chi-square matching the exact survey-weighted law."""
    if sigma2 <= 0:
        raise ValueError("sigma2 must be positive")
    if delta is None:
        delta = eig.noncentrality(gamma, sigma2)
    q1, q2 = eig.moments(delta)
    if q1 <= 0:
        raise DesignError(f"area {eig.area}: degenerate eigensystem (Q1 = 0)")
    c = q2 / (2 * q1 * eig.wDw)
    d = 2 * q1 * q1 / q2
    vstar = sigma2 * eig.wDw / eig.sum_wstar**2
    return ChiSquareParams(c, d, vstar)


def sample_exact_sw(eig: SaswEigensystem, gamma: float, sigma2: float, n_draws: int, seed=None, delta=None):
    """Draws of sigma2/(1'w)^2 * sum_j q_j chi2_1(delta_j), via (Z + sqrt(delta))^2."""
    rng = np.random.default_rng(seed)
    if delta is None:
        delta = eig.noncentrality(gamma, sigma2)
    out = np.zeros(n_draws)
    chunk = max(1, 2_000_000 // max(eig.rank, 1))
    shift = np.sqrt(delta)
    for start in range(0, n_draws, chunk):
        stop = min(n_draws, start + chunk)
        z = rng.standard_normal((stop - start, eig.rank))
        out[start:stop] = ((z + shift) ** 2) @ eig.q
    return sigma2 / eig.sum_wstar**2 * out


def bias_remainder(s: AreaSample) -> float:
    """R_i = w'Dw - tr(M D), evaluated as a per-stratum double sum."""
    w, n = s.wstar, s.n
    S = math.fsum(w)
    g = w * w / n
    wDw = math.fsum(g)
    acc = []
    for h, m_h in enumerate(s.m_h):
        sel = s.stratum == h
        if not np.any(w[sel]):
            continue
        wc = w[sel] - w[sel].mean()
        gc = g[sel] - g[sel].mean()
        k = m_h / (m_h - 1)
        acc.append(k * (2.0 / S * math.fsum(gc * wc) - wDw / S**2 * math.fsum(wc * wc)))
    return math.fsum(acc)


@dataclass(frozen=True)
class BiasFactor:
    factor: float
    remainder: float
    cross_term: float
    wDw: float


def bias_factor(s: AreaSample, gamma: float, sigma2: float, eig: SaswEigensystem | None = None) -> BiasFactor:
    """E[V_hat] / V* under the survey-weighted law, with its algebraic decomposition.

    ``cross_term`` is the mean-shift contribution gamma' M gamma / sigma2,
    computed directly from M rather than from the spectrum.
    """
    if eig is None:
        eig = sasw_eigensystem(s)
    q1, _ = eig.moments(eig.noncentrality(gamma, sigma2))
    M = _inside_matrix(s)
    gv = gamma * s.urban[s.inside].astype(float)
    cross = float(gv @ M @ gv) / sigma2
    return BiasFactor(q1 / eig.wDw, bias_remainder(s), cross, eig.wDw)

"""Model variants, fit data, and the joint log posterior.

The log posterior is written in the sampler's coordinates: regression
coefficients, the combined random effects ``b`` and ``e``, and the
hyperparameters on log (precision) and logit (mixing) scales, Jacobians
included.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from ..distributions import SaswEigensystem
from ..estimators import DesignEstimate
from ..spatial import ScaledIcar, beta_logdensity, pc_prec_logdensity

LOG2 = math.log(2.0)
LOG2PI = math.log(2 * math.pi)

_NAMES = {
    ("smooth", "simple", "structured"): "Simple-struct",
    ("smooth", "simple", "unstructured"): "Simple-unstruct",
    ("smooth", "sasw", "structured"): "SASW-struct",
    ("smooth", "sasw", "unstructured"): "SASW-unstruct",
}


@dataclass(frozen=True)
class ModelVariant:
    kind: str
    sampling_dist: str | None = None
    variance_latent: str | None = None

    def __post_init__(self):
        if self.kind not in ("standard", "oracle", "smooth"):
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.kind == "smooth":
            if self.sampling_dist not in ("simple", "sasw"):
                raise ValueError("smooth models need sampling_dist 'simple' or 'sasw'")
            if self.variance_latent not in ("structured", "unstructured"):
                raise ValueError("smooth models need variance_latent 'structured' or 'unstructured'")
        elif self.sampling_dist is not None or self.variance_latent is not None:
            raise ValueError(f"{self.kind} model takes no variance-model fields")

    @property
    def smooth(self) -> bool:
        return self.kind == "smooth"

    @property
    def structured(self) -> bool:
        return self.variance_latent == "structured"

    @property
    def name(self) -> str:
        return _NAMES.get((self.kind, self.sampling_dist, self.variance_latent), self.kind)

    @classmethod
    def from_name(cls, name: str) -> "ModelVariant":
        key = name.strip().lower()
        if key in ("standard", "oracle"):
            return cls(key)
        for (kind, dist, latent), label in _NAMES.items():
            if label.lower() == key:
                return cls(kind, dist, latent)
        raise ValueError(f"unknown model {name!r}")


ALL_MODELS = ("standard", "oracle", "Simple-struct", "Simple-unstruct", "SASW-struct", "SASW-unstruct")


@dataclass(frozen=True)
class PriorConfig:
    eta_intercept_mean: float = 0.5
    eta_intercept_sd: float = 0.5
    regression_sd: float = 2.0
    pc_u: float = 1.0
    pc_alpha: float = 0.01
    phi_a: float = 0.5
    phi_b: float = 1.0

    def __post_init__(self):
        if self.eta_intercept_sd <= 0 or self.regression_sd <= 0:
            raise ValueError("prior standard deviations must be positive")

    def eta_prior(self, q: int) -> tuple[np.ndarray, np.ndarray]:
        mean = np.zeros(q)
        mean[0] = self.eta_intercept_mean
        sd = np.full(q, self.regression_sd)
        sd[0] = self.eta_intercept_sd
        return mean, sd

    def hyper_logprior(self, log_tau: float, logit_phi: float | None = None) -> float:
        """Prior on (log tau, logit phi) including the change-of-variable terms."""
        tau = math.exp(log_tau)
        out = pc_prec_logdensity(tau, self.pc_u, self.pc_alpha) + log_tau
        if logit_phi is not None:
            phi = _expit(logit_phi)
            out += beta_logdensity(phi, self.phi_a, self.phi_b) + math.log(phi) + math.log1p(-phi)
        return out


def _expit(x: float) -> float:
    return 1.0 / (1.0 + math.exp(-x))


@dataclass(frozen=True)
class FitData:
    """Area-level inputs to every model variant; arrays have one entry per area.

    ``theta_hat``/``v_hat`` are NaN where an area has no sampled cluster.
    The ``sasw_*`` arrays hold eigensystem summaries and are NaN where
    no eigensystem exists.
    """

    theta_hat: np.ndarray
    v_hat: np.ndarray
    m_dot: np.ndarray
    strata_count: np.ndarray
    total_n: np.ndarray
    X: np.ndarray
    p_urban: np.ndarray
    Z: np.ndarray
    icar: ScaledIcar
    sasw_q: np.ndarray = field(default=None)  # type: ignore[assignment]
    sasw_qa: np.ndarray = field(default=None)  # type: ignore[assignment]
    sasw_q2: np.ndarray = field(default=None)  # type: ignore[assignment]
    sasw_q2a: np.ndarray = field(default=None)  # type: ignore[assignment]
    sasw_wDw: np.ndarray = field(default=None)  # type: ignore[assignment]
    sasw_sumw: np.ndarray = field(default=None)  # type: ignore[assignment]
    v_emp: np.ndarray | None = None

    def __post_init__(self):
        K = len(self.theta_hat)
        for name in ("sasw_q", "sasw_qa", "sasw_q2", "sasw_q2a", "sasw_wDw", "sasw_sumw"):
            if getattr(self, name) is None:
                object.__setattr__(self, name, np.full(K, np.nan))
        for name in ("v_hat", "m_dot", "strata_count", "total_n", "p_urban"):
            if len(getattr(self, name)) != K:
                raise ValueError(f"{name} has length {len(getattr(self, name))}, expected {K}")
        if self.X.shape[0] != K or self.Z.shape[0] != K or self.icar.K != K:
            raise ValueError("covariates and geography must cover every area")
        if self.v_emp is not None and len(self.v_emp) != K:
            raise ValueError("v_emp must have one entry per area")

    @property
    def K(self) -> int:
        return len(self.theta_hat)

    @property
    def estimable(self) -> np.ndarray:
        return self.m_dot > 1

    def latent_variance_design(self, variant: ModelVariant) -> np.ndarray:
        return self.Z if variant.structured else np.ones((self.K, 1))

    def mean_mask(self, variant: ModelVariant) -> np.ndarray:
        est = self.estimable & np.isfinite(self.theta_hat)
        if variant.kind == "standard":
            return est & (self.v_hat > 0)
        if variant.kind == "oracle":
            if self.v_emp is None:
                raise ValueError("oracle model needs empirical design variances")
            return est & np.isfinite(self.v_emp) & (self.v_emp > 0)
        return est

    def variance_mask(self, variant: ModelVariant) -> np.ndarray:
        if not variant.smooth:
            return np.zeros(self.K, dtype=bool)
        mask = self.mean_mask(variant) & (self.v_hat > 0)
        if variant.sampling_dist == "simple":
            return mask & (self.m_dot - self.strata_count > 0)
        return mask & np.isfinite(self.sasw_q) & (self.sasw_q > 0)


def build_fit_data(
    estimates: list[DesignEstimate],
    X,
    p_urban,
    Z,
    icar: ScaledIcar,
    eigensystems: dict[int, SaswEigensystem] | None = None,
    v_emp=None,
) -> FitData:
    """Assemble model inputs; ``estimates`` must be ordered by area index 0..K-1."""
    K = len(estimates)
    if [e.area for e in estimates] != list(range(K)):
        raise ValueError("estimates must be listed for areas 0..K-1 in order")
    arr = lambda attr, dtype=float: np.array([getattr(e, attr) for e in estimates], dtype=dtype)  # noqa: E731
    sasw = {k: np.full(K, np.nan) for k in ("q", "qa", "q2", "q2a", "wDw", "sumw")}
    for area, eig in (eigensystems or {}).items():
        if not 0 <= area < K:
            raise ValueError(f"eigensystem for unknown area {area}")
        sasw["q"][area] = eig.q.sum()
        sasw["qa"][area] = (eig.q * eig.a).sum()
        sasw["q2"][area] = (eig.q**2).sum()
        sasw["q2a"][area] = (eig.q**2 * eig.a).sum()
        sasw["wDw"][area] = eig.wDw
        sasw["sumw"][area] = eig.sum_wstar
    return FitData(
        theta_hat=arr("theta_hat"),
        v_hat=arr("v_hat"),
        m_dot=arr("m_dot_i", int),
        strata_count=arr("strata_count", int),
        total_n=arr("total_n"),
        X=np.asarray(X, dtype=float),
        p_urban=np.asarray(p_urban, dtype=float),
        Z=np.asarray(Z, dtype=float),
        icar=icar,
        sasw_q=sasw["q"],
        sasw_qa=sasw["qa"],
        sasw_q2=sasw["q2"],
        sasw_q2a=sasw["q2a"],
        sasw_wDw=sasw["wDw"],
        sasw_sumw=sasw["sumw"],
        v_emp=None if v_emp is None else np.asarray(v_emp, dtype=float),
    )


# --------------------------------------------------------------------------- likelihood pieces


def theoretical_variance(variant: ModelVariant, data: FitData, sigma2) -> np.ndarray:
    """v_i(sigma2_i): V-dagger for the simple law, V-star for the survey-weighted law."""
    with np.errstate(divide="ignore", invalid="ignore"):
        if variant.sampling_dist == "simple":
            return sigma2 / data.total_n
        return sigma2 * data.sasw_wDw / data.sasw_sumw**2


def chi_square_shape(variant: ModelVariant, data: FitData, sigma2, gamma: float):
    """(c_i, d_i) arrays of the scaled chi-square law."""
    if variant.sampling_dist == "simple":
        df = (data.m_dot - data.strata_count).astype(float)
        return 1.0 / df, df
    ratio = gamma * gamma / sigma2
    q1 = data.sasw_q + ratio * data.sasw_qa
    q2 = 2 * data.sasw_q2 + 4 * ratio * data.sasw_q2a
    return q2 / (2 * q1 * data.sasw_wDw), 2 * q1 * q1 / q2


def scaled_chi2_logpdf(x, scale, df):
    """log density of x where x / scale ~ chi2_df."""
    z = x / scale
    return (df / 2 - 1) * np.log(z) - z / 2 - df / 2 * LOG2 - gammaln(df / 2) - np.log(scale)


def normal_logpdf(x, mean, var):
    return -0.5 * (LOG2PI + np.log(var) + (x - mean) ** 2 / var)


def smooth_loglik_terms(variant: ModelVariant, data: FitData, theta, sigma2, gamma, mean_mask, var_mask):
    """Per-area mean and variance log-likelihood contributions (zero where masked)."""
    out = np.zeros(data.K)
    v = theoretical_variance(variant, data, sigma2)
    mm, vm = mean_mask, var_mask
    out[mm] += normal_logpdf(data.theta_hat[mm], theta[mm], v[mm])
    if np.any(vm):
        c, d = chi_square_shape(variant, _subset(data, vm), sigma2[vm], gamma)
        out[vm] += scaled_chi2_logpdf(data.v_hat[vm], v[vm] * c, d)
    return out


class _subset:
    """Masked view of the per-area arrays used by ``chi_square_shape``."""

    _fields = ("m_dot", "strata_count", "sasw_q", "sasw_qa", "sasw_q2", "sasw_q2a", "sasw_wDw")

    def __init__(self, data: FitData, mask):
        for name in self._fields:
            setattr(self, name, getattr(data, name)[mask])


# --------------------------------------------------------------------------- joint density


@dataclass
class ModelState:
    beta: np.ndarray
    gamma: float
    b: np.ndarray
    tau_b: float
    phi_b: float
    eta: np.ndarray | None = None
    e: np.ndarray | None = None
    tau_e: float | None = None
    phi_e: float | None = None

    def theta(self, data: FitData) -> np.ndarray:
        return data.X @ self.beta + data.p_urban * self.gamma + self.b

    def sigma2(self, data: FitData, variant: ModelVariant) -> np.ndarray:
        return np.exp(data.latent_variance_design(variant) @ self.eta + self.e)


def gaussian_effect_logdensity(x, eigvecs, variances) -> float:
    """log N(x; 0, E diag(variances) E'), all variances positive."""
    c = eigvecs.T @ x
    return float(-0.5 * np.sum(LOG2PI + np.log(variances) + c * c / variances))


def log_posterior(variant: ModelVariant, data: FitData, state: ModelState, prior: PriorConfig = PriorConfig()) -> float:
    """Joint log density; returns -inf for invalid parameter values."""
    if state.tau_b <= 0 or not 0 < state.phi_b < 1:
        return -math.inf
    icar = data.icar
    reg_var = prior.regression_sd**2
    lp = float(np.sum(normal_logpdf(state.beta, 0.0, reg_var)) + normal_logpdf(state.gamma, 0.0, reg_var))
    lp += gaussian_effect_logdensity(state.b, icar.eigvecs, icar.bym2_variances(state.tau_b, state.phi_b))
    lp += prior.hyper_logprior(math.log(state.tau_b), math.log(state.phi_b / (1 - state.phi_b)))
    theta = state.theta(data)
    mm = data.mean_mask(variant)
    if variant.kind == "standard":
        return lp + float(np.sum(normal_logpdf(data.theta_hat[mm], theta[mm], data.v_hat[mm])))
    if variant.kind == "oracle":
        return lp + float(np.sum(normal_logpdf(data.theta_hat[mm], theta[mm], data.v_emp[mm])))

    if state.tau_e is None or state.tau_e <= 0:
        return -math.inf
    Z = data.latent_variance_design(variant)
    m0, sd0 = prior.eta_prior(Z.shape[1])
    lp += float(np.sum(normal_logpdf(state.eta, m0, sd0**2)))
    if variant.structured:
        if state.phi_e is None or not 0 < state.phi_e < 1:
            return -math.inf
        lp += gaussian_effect_logdensity(state.e, icar.eigvecs, icar.bym2_variances(state.tau_e, state.phi_e))
        lp += prior.hyper_logprior(math.log(state.tau_e), math.log(state.phi_e / (1 - state.phi_e)))
    else:
        lp += float(np.sum(normal_logpdf(state.e, 0.0, 1.0 / state.tau_e)))
        lp += prior.hyper_logprior(math.log(state.tau_e))
    sigma2 = np.exp(Z @ state.eta + state.e)
    terms = smooth_loglik_terms(variant, data, theta, sigma2, state.gamma, mm, data.variance_mask(variant))
    out = lp + float(np.sum(terms))
    return out if math.isfinite(out) else -math.inf

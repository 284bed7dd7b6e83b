"""Blocked MCMC for the area-level models.

Per iteration:

* (tau_b, phi_b): adaptive random-walk Metropolis on (log, logit) scale
  against the Gaussian marginal with beta and b integrated out.
* (beta, gamma, b): exact Gaussian block draw.  Under the survey-weighted
  law gamma also enters the variance likelihood, so the draw is used as an
  independence proposal; on rejection (beta, b) are redrawn given gamma.
* smooth models only: elliptical slice updates of e, a Gibbs draw of eta
  given log sigma2, a non-centered random-walk move of eta with e held
  fixed, and centered plus non-centered moves of (tau_e, phi_e).
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve as _cho_solve
from scipy.linalg import solve_triangular as _solve_triangular
from scipy.special import gammaln

from ..seeding import derive_rng
from ..spatial import split_bym2
from .diagnostics import bulk_ess, split_rhat
from .model import FitData, ModelVariant, PriorConfig

LOGIT_BOUND = 15.0


def cho_solve(factor, b):
    return _cho_solve(factor, b, check_finite=False)


def solve_triangular(L, b, lower: bool):
    return _solve_triangular(L, b, lower=lower, check_finite=False)


LOG_TAU_BOUNDS = (-12.0, 25.0)


class ConvergenceWarning(UserWarning):
    pass


@dataclass(frozen=True)
class McmcConfig:
    chains: int = 2
    warmup: int = 500
    draws: int = 500
    thin: int = 1
    rhat_max: float = 1.05
    ess_min: float = 100.0
    slice_steps: int = 2
    target_accept: float = 0.3
    threads: int = 1
    keep_splits: bool = True

    def __post_init__(self):
        if self.chains < 1 or self.draws < 2 or self.warmup < 0 or self.thin < 1:
            raise ValueError("need chains >= 1, draws >= 2, warmup >= 0, thin >= 1")
        if self.chains * (self.draws // self.thin) < 4 or self.draws // self.thin < 4:
            raise ValueError("too few retained draws for diagnostics")
        if not 0 < self.target_accept < 1 or self.slice_steps < 1 or self.threads < 1:
            raise ValueError("invalid sampler tuning values")
        if self.rhat_max <= 1 or self.ess_min <= 0:
            raise ValueError("invalid convergence thresholds")


class AdaptiveProposal:
    """Gaussian random walk with Robbins-Monro step size and empirical covariance."""

    def __init__(self, dim: int, scale: float = 0.3, target: float = 0.3):
        self.dim = dim
        self.target = target
        self.log_step = math.log(scale)
        self.chol = np.eye(dim)
        self.n = 0
        self.mean = np.zeros(dim)
        self.m2 = np.zeros((dim, dim))
        self.frozen = False

    def propose(self, x: np.ndarray, rng) -> np.ndarray:
        return x + math.exp(self.log_step) * (self.chol @ rng.standard_normal(self.dim))

    def adapt(self, x: np.ndarray, accept_prob: float) -> None:
        if self.frozen:
            return
        self.n += 1
        self.log_step += (accept_prob - self.target) / self.n**0.6
        delta = x - self.mean
        self.mean += delta / self.n
        self.m2 += np.outer(delta, x - self.mean)
        if self.n >= 100 and self.n % 50 == 0:
            cov = self.m2 / (self.n - 1) + 1e-8 * np.eye(self.dim)
            try:
                chol = np.linalg.cholesky(cov)
            except np.linalg.LinAlgError:
                return
            if self.n == 100:
                self.log_step = math.log(2.38 / math.sqrt(self.dim))
            self.chol = chol


def _hyper_ok(x: np.ndarray) -> bool:
    if not LOG_TAU_BOUNDS[0] < x[0] < LOG_TAU_BOUNDS[1]:
        return False
    return len(x) < 2 or abs(x[1]) < LOGIT_BOUND


def _expit(x: float) -> float:
    return 1.0 / (1.0 + math.exp(-x))


class _Chain:
    def __init__(self, variant: ModelVariant, data: FitData, prior: PriorConfig, cfg: McmcConfig, rng):
        self.v, self.d, self.prior, self.cfg, self.rng = variant, data, prior, cfg, rng
        K = data.K
        self.K = K
        self.Xf = np.column_stack([data.X, data.p_urban])
        self.p1 = self.Xf.shape[1]
        self.E = data.icar.eigvecs
        self.lam = data.icar.cov_eigvals
        self.reg_var = prior.regression_sd**2
        self.mm = data.mean_mask(variant)
        self.im = np.flatnonzero(self.mm)
        self.y = data.theta_hat[self.mm]
        self.Xm = self.Xf[self.mm]
        self.Em = self.E[self.mm]
        if variant.kind == "standard":
            self.r_fixed = data.v_hat[self.mm]
        elif variant.kind == "oracle":
            self.r_fixed = data.v_emp[self.mm]
        else:
            self._init_smooth()
        self._init_state()
        self.prop_b = AdaptiveProposal(2, target=cfg.target_accept)
        if variant.smooth:
            self.prop_eta = AdaptiveProposal(self.Z.shape[1], scale=0.05, target=cfg.target_accept)
            dim = 2 if variant.structured else 1
            self.prop_ec = AdaptiveProposal(dim, target=cfg.target_accept)
            self.prop_enc = AdaptiveProposal(dim, target=cfg.target_accept)
            self.prop_blk = AdaptiveProposal(dim, target=cfg.target_accept)
        self.accepts: dict[str, list[float]] = {}
        self._mode = None

    # ------------------------------------------------------------------ setup

    def _init_smooth(self):
        d, v = self.d, self.v
        self.Z = d.latent_variance_design(v)
        self.eta_m0, eta_sd = self.prior.eta_prior(self.Z.shape[1])
        self.eta_prec = 1.0 / eta_sd**2
        if v.sampling_dist == "simple":
            tf = np.divide(1.0, d.total_n, out=np.full(self.K, np.nan), where=d.total_n > 0)
        else:
            tf = d.sasw_wDw / d.sasw_sumw**2
            if np.any(~np.isfinite(tf[self.mm])):
                missing = np.flatnonzero(self.mm & ~np.isfinite(tf))
                raise ValueError(f"eigensystems missing for estimable areas {missing.tolist()}")
        self.tf_m = tf[self.mm]
        self.vm = d.variance_mask(v)[self.mm]  # positions within the mean subset
        sel = self.im[self.vm]
        self.vhat = d.v_hat[sel]
        self.tf_v = tf[sel]
        if v.sampling_dist == "simple":
            df = (d.m_dot[sel] - d.strata_count[sel]).astype(float)
            const = (df / 2 - 1) * np.log(self.vhat) - df / 2 * math.log(2.0) - gammaln(df / 2)
            self.chi_fixed = (1.0 / df, df / 2, const)
        else:
            self.chi_fixed = None
            self.sq, self.sqa = d.sasw_q[sel], d.sasw_qa[sel]
            self.sq2, self.sq2a = d.sasw_q2[sel], d.sasw_q2a[sel]
            self.swdw = d.sasw_wDw[sel]

    def _init_state(self):
        rng, d = self.rng, self.d
        ybar = float(np.mean(self.y)) if len(self.y) else 0.0
        self.beta = np.zeros(self.d.X.shape[1])
        self.beta[0] = ybar + 0.1 * rng.standard_normal()
        self.beta[1:] = 0.05 * rng.standard_normal(len(self.beta) - 1)
        self.gamma = 0.05 * rng.standard_normal()
        self.hb = np.array([math.log(5.0) + 0.5 * rng.standard_normal(), 0.5 * rng.standard_normal()])
        self.b = 0.05 * rng.standard_normal(self.K)
        if not self.v.smooth:
            return
        if self.v.sampling_dist == "simple":
            guess = d.v_hat * d.total_n
        else:
            guess = d.v_hat * d.sasw_sumw**2 / d.sasw_wDw
        guess = guess[np.isfinite(guess) & (guess > 0)]
        level = math.log(np.median(guess)) if len(guess) else self.eta_m0[0]
        self.eta = np.zeros(self.Z.shape[1])
        self.eta[0] = level + 0.2 * rng.standard_normal()
        self.eta[1:] = 0.05 * rng.standard_normal(len(self.eta) - 1)
        self.e = 0.05 * rng.standard_normal(self.K)
        self.he = np.array([math.log(20.0) + 0.5 * rng.standard_normal(), 0.5 * rng.standard_normal()])
        if not self.v.structured:
            self.he = self.he[:1]

    # ------------------------------------------------------------------ helpers

    def _record(self, name: str, prob: float):
        self.accepts.setdefault(name, []).append(prob)

    def _mh(self, name: str, log_ratio: float) -> bool:
        prob = math.exp(min(0.0, log_ratio)) if math.isfinite(log_ratio) else 0.0
        self._record(name, prob)
        return self.rng.uniform() < prob

    def _b_vars(self, h) -> np.ndarray:
        tau, phi = math.exp(h[0]), _expit(h[1])
        return ((1.0 - phi) + phi * self.lam) / tau

    def _e_vars(self, h) -> np.ndarray:
        tau = math.exp(h[0])
        if self.v.structured:
            phi = _expit(h[1])
            return ((1.0 - phi) + phi * self.lam) / tau
        return np.full(self.K, 1.0 / tau)

    def _obs_var(self) -> np.ndarray:
        if not self.v.smooth:
            return self.r_fixed
        s = self.Z[self.mm] @ self.eta + self.e[self.mm]
        return np.exp(s) * self.tf_m

    # ------------------------------------------------------------------ variance likelihood

    def _chi_loglik(self, sigma2_v: np.ndarray, gamma: float) -> np.ndarray:
        """Scaled chi-square log density of V-hat, per variance-likelihood area."""
        if self.chi_fixed is not None:
            c, half_df, const = self.chi_fixed
            scale = sigma2_v * (self.tf_v * c)
            return const - half_df * np.log(scale) - self.vhat / (2 * scale)
        ratio = gamma * gamma / sigma2_v
        q1 = self.sq + ratio * self.sqa
        q2 = 2 * self.sq2 + 4 * ratio * self.sq2a
        c, df = q2 / (2 * q1 * self.swdw), 2 * q1 * q1 / q2
        scale = sigma2_v * self.tf_v * c
        z = self.vhat / scale
        return (df / 2 - 1) * np.log(z) - z / 2 - df / 2 * math.log(2.0) - gammaln(df / 2) - np.log(scale)

    def _lik_vec(self, sm: np.ndarray, theta_m: np.ndarray) -> np.ndarray:
        """Per-area log likelihood in log sigma2 on the mean subset (broadcasts over leading axes)."""
        v = np.exp(sm) * self.tf_m
        out = -0.5 * (np.log(v) + (self.y - theta_m) ** 2 / v)
        if self.vm.any():
            out[..., self.vm] += self._chi_loglik(np.exp(sm[..., self.vm]), self.gamma)
        return out

    def _loglik_s(self, s: np.ndarray, theta_m: np.ndarray) -> float:
        out = float(np.sum(self._lik_vec(s[self.mm], theta_m)))
        return out if math.isfinite(out) else -math.inf

    # ------------------------------------------------------------------ mean model

    def _collapsed_loglik(self, h, r) -> float:
        n = len(self.y)
        if n == 0:
            return 0.0
        C = self.reg_var * (self.Xm[:, :-1] @ self.Xm[:, :-1].T) + (self.Em * self._b_vars(h)) @ self.Em.T
        C[np.diag_indices(n)] += r
        try:
            L = np.linalg.cholesky(C)
        except np.linalg.LinAlgError:
            return -math.inf
        yc = self.y - self.Xm[:, -1] * self.gamma
        a = solve_triangular(L, yc, lower=True)
        return float(-0.5 * a @ a - np.sum(np.log(np.diag(L))))

    def _update_b_hypers(self, r):
        cur = self._collapsed_loglik(self.hb, r) + self.prior.hyper_logprior(*self.hb)
        for _ in range(2):
            prop = self.prop_b.propose(self.hb, self.rng)
            if _hyper_ok(prop):
                new = self._collapsed_loglik(prop, r) + self.prior.hyper_logprior(*prop)
                log_ratio = new - cur
            else:
                new, log_ratio = -math.inf, -math.inf
            prob = math.exp(min(0.0, log_ratio)) if math.isfinite(log_ratio) else 0.0
            self._record("b_hyper", prob)
            if self.rng.uniform() < prob:
                self.hb, cur = prop, new
            self.prop_b.adapt(self.hb, prob)

    def _mean_gaussian(self, r):
        """Precision Cholesky and mean of (beta, gamma, b) given observation variances r."""
        p1, K = self.p1, self.K
        D = p1 + K
        P = np.zeros((D, D))
        P[:p1, :p1] = np.eye(p1) / self.reg_var
        P[p1:, p1:] = (self.E / self._b_vars(self.hb)) @ self.E.T
        w = 1.0 / r
        Xw = self.Xm * w[:, None]
        P[:p1, :p1] += self.Xm.T @ Xw
        bi = p1 + self.im
        P[:p1, bi] += Xw.T
        P[bi, :p1] += Xw
        P[bi, bi] += w
        rhs = np.zeros(D)
        rhs[:p1] = Xw.T @ self.y
        rhs[bi] = w * self.y
        L = np.linalg.cholesky(P)
        mean = cho_solve((L, True), rhs)
        return P, L, mean

    def _unpack_mean(self, x):
        p = self.p1 - 1
        return x[:p], float(x[p]), x[self.p1 :]

    def _update_mean(self, r):
        P, L, mean = self._mean_gaussian(r)
        x = mean + solve_triangular(L.T, self.rng.standard_normal(len(mean)), lower=False)
        if self.v.sampling_dist != "sasw" or not self.vm.any():
            self.beta, self.gamma, self.b = self._unpack_mean(x)
            return
        sig = np.exp((self.Z[self.mm] @ self.eta + self.e[self.mm])[self.vm])
        gnew = float(x[self.p1 - 1])
        log_ratio = float(np.sum(self._chi_loglik(sig, gnew)) - np.sum(self._chi_loglik(sig, self.gamma)))
        if self._mh("gamma", log_ratio):
            self.beta, self.gamma, self.b = self._unpack_mean(x)
            return
        # keep gamma; draw the rest from its Gaussian conditional
        g = self.p1 - 1
        keep = np.r_[np.arange(g), np.arange(self.p1, len(mean))]
        Prr = P[np.ix_(keep, keep)]
        Lr = np.linalg.cholesky(Prr)
        mu = mean[keep] - cho_solve((Lr, True), P[keep, g] * (self.gamma - mean[g]))
        xr = mu + solve_triangular(Lr.T, self.rng.standard_normal(len(keep)), lower=False)
        self.beta, self.b = xr[:g], xr[g:]

    # ------------------------------------------------------------------ variance model

    def _draw_e_prior(self, vars_e):
        z = self.rng.standard_normal(self.K) * np.sqrt(vars_e)
        return self.E @ z if self.v.structured else z

    def _slice_e(self, theta_m):
        base = self.Z @ self.eta
        cur = self._loglik_s(base + self.e, theta_m)
        vars_e = self._e_vars(self.he)
        for _ in range(self.cfg.slice_steps):
            nu = self._draw_e_prior(vars_e)
            logy = cur + math.log(self.rng.uniform())
            t = self.rng.uniform(0, 2 * math.pi)
            lo, hi = t - 2 * math.pi, t
            while True:
                e_new = self.e * math.cos(t) + nu * math.sin(t)
                ll = self._loglik_s(base + e_new, theta_m)
                if ll > logy:
                    self.e, cur = e_new, ll
                    break
                if t < 0:
                    lo = t
                else:
                    hi = t
                t = self.rng.uniform(lo, hi)
                if hi - lo < 1e-12:
                    break
        return cur

    def _e_inv(self, vars_e, x):
        """Sigma_e^{-1} x for a vector or matrix x."""
        if self.v.structured:
            return self.E @ ((self.E.T @ x) / (vars_e[:, None] if x.ndim == 2 else vars_e))
        return x / vars_e[0]

    def _gibbs_eta(self):
        s = self.Z @ self.eta + self.e
        vars_e = self._e_vars(self.he)
        SiZ = self._e_inv(vars_e, self.Z)
        P = np.diag(self.eta_prec) + self.Z.T @ SiZ
        rhs = self.eta_prec * self.eta_m0 + SiZ.T @ s
        L = np.linalg.cholesky(P)
        self.eta = cho_solve((L, True), rhs) + solve_triangular(L.T, self.rng.standard_normal(len(rhs)), lower=False)
        self.e = s - self.Z @ self.eta

    def _eta_logprior(self, eta):
        return float(-0.5 * np.sum(self.eta_prec * (eta - self.eta_m0) ** 2))

    def _noncentered_eta(self, theta_m, cur):
        prop = self.prop_eta.propose(self.eta, self.rng)
        new = self._loglik_s(self.Z @ prop + self.e, theta_m)
        log_ratio = new - cur + self._eta_logprior(prop) - self._eta_logprior(self.eta)
        prob = math.exp(min(0.0, log_ratio)) if math.isfinite(log_ratio) else 0.0
        self._record("eta_nc", prob)
        if self.rng.uniform() < prob:
            self.eta, cur = prop, new
        self.prop_eta.adapt(self.eta, prob)
        return cur

    def _e_logdens(self, h, coef):
        vars_e = self._e_vars(h)
        return float(-0.5 * np.sum(np.log(vars_e) + coef * coef / vars_e))

    def _he_prior(self, h):
        return self.prior.hyper_logprior(*h)

    def _update_e_hypers(self, theta_m, cur):
        coef = self.E.T @ self.e if self.v.structured else self.e
        # centered
        prop = self.prop_ec.propose(self.he, self.rng)
        if _hyper_ok(prop):
            log_ratio = (self._e_logdens(prop, coef) + self._he_prior(prop)) - (
                self._e_logdens(self.he, coef) + self._he_prior(self.he)
            )
        else:
            log_ratio = -math.inf
        prob = math.exp(min(0.0, log_ratio)) if math.isfinite(log_ratio) else 0.0
        self._record("e_hyper_c", prob)
        if self.rng.uniform() < prob:
            self.he = prop
        self.prop_ec.adapt(self.he, prob)
        # non-centered: whitened coordinates fixed
        z = coef / np.sqrt(self._e_vars(self.he))
        cur = self._loglik_s(self.Z @ self.eta + self.e, theta_m)
        prop = self.prop_enc.propose(self.he, self.rng)
        if _hyper_ok(prop):
            cnew = z * np.sqrt(self._e_vars(prop))
            e_new = self.E @ cnew if self.v.structured else cnew
            new = self._loglik_s(self.Z @ self.eta + e_new, theta_m)
            log_ratio = new - cur + self._he_prior(prop) - self._he_prior(self.he)
        else:
            log_ratio = -math.inf
        prob = math.exp(min(0.0, log_ratio)) if math.isfinite(log_ratio) else 0.0
        self._record("e_hyper_nc", prob)
        if self.rng.uniform() < prob:
            self.he, self.e, cur = prop, e_new, new
        self.prop_enc.adapt(self.he, prob)
        return cur

    # ------------------------------------------------------------------ joint variance block

    def _s_prior(self, h):
        """Mean and Cholesky factor of the prior of log sigma2 with eta integrated out."""
        vars_e = self._e_vars(h)
        C = (self.Z / self.eta_prec) @ self.Z.T
        if self.v.structured:
            C += (self.E * vars_e) @ self.E.T
        else:
            C[np.diag_indices(self.K)] += vars_e
        return self.Z @ self.eta_m0, np.linalg.cholesky(C)

    def _lik_derivs(self, s, theta_m, step=1e-3):
        """First and negated second derivative of the per-area likelihood in log sigma2."""
        g = np.zeros(self.K)
        w = np.zeros(self.K)
        sm = s[self.mm]
        f0, fp, fm = self._lik_vec(sm + np.array([[0.0], [step], [-step]]), theta_m)
        g[self.mm] = (fp - fm) / (2 * step)
        w[self.mm] = -(fp - 2 * f0 + fm) / step**2
        return g, np.maximum(w, 1e-6)

    def _laplace(self, mu0, Lc, theta_m, start):
        """Gaussian approximation (mode, precision Cholesky) of log sigma2 given hypers."""
        Cinv = cho_solve((Lc, True), np.eye(self.K))
        b0 = Cinv @ mu0

        def objective(x):
            r = solve_triangular(Lc, x - mu0, lower=True)
            return self._loglik_s(x, theta_m) - 0.5 * r @ r

        s, fs = start.copy(), objective(start)
        for _ in range(50):
            g, w = self._lik_derivs(s, theta_m)
            L = np.linalg.cholesky(Cinv + np.diag(w))
            target = cho_solve((L, True), b0 + w * s + g)
            step = 1.0
            while True:
                cand = s + step * (target - s)
                fc = objective(cand)
                if fc >= fs - 1e-10 or step < 1e-4:
                    break
                step /= 2
            done = np.max(np.abs(cand - s)) < 1e-6
            s, fs = cand, fc
            if done:
                break
        _, w = self._lik_derivs(s, theta_m)
        return s, np.linalg.cholesky(Cinv + np.diag(w))

    @staticmethod
    def _gauss_logpdf_chol(x, mean, L, precision: bool) -> float:
        """log N(x; mean, .) given the Cholesky factor of the precision or covariance."""
        if precision:
            r = L.T @ (x - mean)
            return float(-0.5 * r @ r + np.sum(np.log(np.diag(L))))
        r = solve_triangular(L, x - mean, lower=True)
        return float(-0.5 * r @ r - np.sum(np.log(np.diag(L))))

    def _block_variance(self, theta_m):
        """Joint move of (tau_e, phi_e, log sigma2) with eta integrated out."""
        s = self.Z @ self.eta + self.e
        h = self.he
        hp = self.prop_blk.propose(h, self.rng)
        if not _hyper_ok(hp):
            self._record("e_block", 0.0)
            self.prop_blk.adapt(h, 0.0)
            return
        mu0, Lc = self._s_prior(h)
        mu0p, Lcp = self._s_prior(hp)
        mode, Lq = self._laplace(mu0, Lc, theta_m, self._mode if self._mode is not None else s)
        modep, Lqp = self._laplace(mu0p, Lcp, theta_m, mode)
        sp = modep + solve_triangular(Lqp.T, self.rng.standard_normal(self.K), lower=False)
        cur = self._loglik_s(s, theta_m) + self._gauss_logpdf_chol(s, mu0, Lc, False) + self._he_prior(h)
        new = self._loglik_s(sp, theta_m) + self._gauss_logpdf_chol(sp, mu0p, Lcp, False) + self._he_prior(hp)
        log_ratio = new - cur + self._gauss_logpdf_chol(s, mode, Lq, True) - self._gauss_logpdf_chol(sp, modep, Lqp, True)
        prob = math.exp(min(0.0, log_ratio)) if math.isfinite(log_ratio) else 0.0
        self._record("e_block", prob)
        if self.rng.uniform() < prob:
            self.he = hp
            self.e = sp - self.Z @ self.eta
            mode = modep
        self._mode = mode
        self.prop_blk.adapt(self.he, prob)

    # ------------------------------------------------------------------ driver

    def step(self):
        r = self._obs_var()
        self._update_b_hypers(r)
        self._update_mean(r)
        if not self.v.smooth:
            return
        theta_m = self.Xm @ np.r_[self.beta, self.gamma] + self.b[self.mm]
        self._block_variance(theta_m)
        self._gibbs_eta()
        self._slice_e(theta_m)
        self._gibbs_eta()
        cur = self._loglik_s(self.Z @ self.eta + self.e, theta_m)
        cur = self._noncentered_eta(theta_m, cur)
        self._update_e_hypers(theta_m, cur)

    def snapshot(self) -> dict[str, np.ndarray]:
        out = {
            "beta": self.beta.copy(),
            "gamma": np.array(self.gamma),
            "b": self.b.copy(),
            "tau_b": np.array(math.exp(self.hb[0])),
            "phi_b": np.array(_expit(self.hb[1])),
            "theta": self.Xf @ np.r_[self.beta, self.gamma] + self.b,
        }
        if self.v.smooth:
            out["eta"] = self.eta.copy()
            out["e"] = self.e.copy()
            out["tau_e"] = np.array(math.exp(self.he[0]))
            if self.v.structured:
                out["phi_e"] = np.array(_expit(self.he[1]))
            out["sigma2"] = np.exp(self.Z @ self.eta + self.e)
        return out

    def run(self):
        cfg = self.cfg
        for _ in range(cfg.warmup):
            self.step()
        for prop in ("prop_b", "prop_eta", "prop_ec", "prop_enc", "prop_blk"):
            if hasattr(self, prop):
                getattr(self, prop).frozen = True
        self.accepts.clear()
        kept: dict[str, list] = {}
        for it in range(cfg.draws):
            self.step()
            if it % cfg.thin == 0:
                for k, val in self.snapshot().items():
                    kept.setdefault(k, []).append(val)
        rates = {k: float(np.mean(v)) for k, v in self.accepts.items()}
        return {k: np.array(v) for k, v in kept.items()}, rates


def _run_chain(args):
    variant, data, prior, cfg, seed, c = args
    # overflow in rejected proposals is expected and mapped to -inf
    with np.errstate(all="ignore"):
        return _Chain(variant, data, prior, cfg, derive_rng(seed, "chain", c)).run()


# ---------------------------------------------------------------------------- output


SCALAR_BLOCKS = ("gamma", "tau_b", "phi_b", "tau_e", "phi_e")
DIAGNOSED = ("beta", "gamma", "tau_b", "phi_b", "theta", "eta", "tau_e", "phi_e", "sigma2")


@dataclass
class PosteriorDraws:
    """Draws keyed by block name, each shaped (chains, draws, ...)."""

    variant: ModelVariant
    samples: dict[str, np.ndarray]
    rhat: dict[str, np.ndarray] = field(default_factory=dict)
    ess: dict[str, np.ndarray] = field(default_factory=dict)
    acceptance: dict[str, float] = field(default_factory=dict)
    converged: bool = True
    messages: list[str] = field(default_factory=list)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.samples[name]

    def __contains__(self, name: str) -> bool:
        return name in self.samples

    @property
    def n_chains(self) -> int:
        return self.samples["theta"].shape[0]

    @property
    def n_draws(self) -> int:
        return self.samples["theta"].shape[1]

    def flat(self, name: str) -> np.ndarray:
        x = self.samples[name]
        return x.reshape((-1,) + x.shape[2:])

    def diagnostics_table(self) -> list[dict]:
        rows = []
        for name in self.rhat:
            for j, (r, e) in enumerate(zip(np.atleast_1d(self.rhat[name]), np.atleast_1d(self.ess[name]))):
                label = name if self.samples[name].ndim == 2 else f"{name}[{j}]"
                rows.append({"parameter": label, "rhat": float(r), "ess_bulk": float(e)})
        return rows


def diagnose(draws: PosteriorDraws, rhat_max: float, ess_min: float) -> None:
    bad = []
    for name in DIAGNOSED:
        if name not in draws.samples:
            continue
        x = draws.samples[name]
        x3 = x[..., None] if x.ndim == 2 else x
        draws.rhat[name] = split_rhat(x3)
        draws.ess[name] = bulk_ess(x3)
        worst_r, worst_e = float(np.max(draws.rhat[name])), float(np.min(draws.ess[name]))
        if worst_r > rhat_max or worst_e < ess_min:
            bad.append(f"{name}: max R-hat {worst_r:.3f}, min bulk ESS {worst_e:.0f}")
    draws.converged = not bad
    draws.messages = bad


def fit(variant: ModelVariant, data: FitData, config: McmcConfig = McmcConfig(), seed: int = 0,
        prior: PriorConfig = PriorConfig()) -> PosteriorDraws:
    """Run ``config.chains`` chains and return draws with convergence diagnostics.

    Non-convergence does not raise: ``converged`` is False, ``messages``
    names the offending blocks, and a ``ConvergenceWarning`` is emitted.
    """
    jobs = [(variant, data, prior, config, seed, c) for c in range(config.chains)]
    if config.threads > 1 and config.chains > 1:
        with ProcessPoolExecutor(max_workers=min(config.threads, config.chains)) as pool:
            results = list(pool.map(_run_chain, jobs))
    else:
        results = [_run_chain(j) for j in jobs]
    samples = {k: np.stack([res[0][k] for res in results]) for k in results[0][0]}
    rates = {k: float(np.mean([res[1].get(k, np.nan) for res in results])) for k in results[0][1]}
    out = PosteriorDraws(variant, samples, acceptance=rates)
    if config.keep_splits:
        _add_splits(out, data, seed)
    diagnose(out, config.rhat_max, config.ess_min)
    if not out.converged:
        warnings.warn(f"{variant.name}: " + "; ".join(out.messages), ConvergenceWarning, stacklevel=2)
    return out


def _add_splits(draws: PosteriorDraws, data: FitData, seed: int) -> None:
    """Attach (u, v) components of the BYM2 effects, drawn given the combined effects."""
    rng = derive_rng(seed, "splits")
    pairs = [("b", "tau_b", "phi_b", "u_b", "v_b")]
    if "phi_e" in draws.samples:
        pairs.append(("e", "tau_e", "phi_e", "u_e", "v_e"))
    for eff, tau, phi, uname, vname in pairs:
        x, t, p = draws.samples[eff], draws.samples[tau], draws.samples[phi]
        u, v = np.empty_like(x), np.empty_like(x)
        for c in range(x.shape[0]):
            for i in range(x.shape[1]):
                u[c, i], v[c, i] = split_bym2(x[c, i], float(t[c, i]), float(p[c, i]), data.icar, rng)
        draws.samples[uname], draws.samples[vname] = u, v

import math
import warnings

import numpy as np
import pytest

from fhvs.estimators import DesignEstimate
from fhvs.inference import (
    ConvergenceWarning,
    McmcConfig,
    ModelState,
    ModelVariant,
    PriorConfig,
    build_fit_data,
    fit,
    log_posterior,
)
from fhvs.inference.sampler import AdaptiveProposal
from fhvs.spatial import icar_structure, scale_icar
from oracles import model_generated_data

QUICK = McmcConfig(chains=2, warmup=100, draws=100)


@pytest.fixture(scope="module")
def tiny():
    return model_generated_data(K=12, A=3, seed=5)


def test_config_validation():
    with pytest.raises(ValueError):
        McmcConfig(draws=1)
    with pytest.raises(ValueError):
        McmcConfig(target_accept=1.5)
    with pytest.raises(ValueError):
        McmcConfig(rhat_max=0.9)


def test_adaptive_proposal_tracks_target_rate():
    rng = np.random.default_rng(0)
    prop = AdaptiveProposal(1, scale=1.0, target=0.3)
    x, accepted = np.array([0.0]), []
    for _ in range(4000):
        y = prop.propose(x, rng)
        a = min(1.0, math.exp(-0.5 * (y @ y - x @ x)))
        if rng.uniform() < a:
            x = y
        prop.adapt(x, a)
        accepted.append(a)
    assert np.mean(accepted[-2000:]) == pytest.approx(0.3, abs=0.05)


@pytest.mark.parametrize("name", ["standard", "Simple-struct", "Simple-unstruct"])
def test_fit_is_deterministic(tiny, name):
    data, _ = tiny
    variant = ModelVariant.from_name(name)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        a = fit(variant, data, QUICK, seed=7)
        b = fit(variant, data, QUICK, seed=7)
    assert a.samples.keys() == b.samples.keys()
    for k in a.samples:
        np.testing.assert_array_equal(a[k], b[k])
    assert a["theta"].shape == (2, 100, data.K)


def test_short_chains_warn_but_return(tiny):
    data, _ = tiny
    cfg = McmcConfig(chains=2, warmup=0, draws=8, ess_min=1e6)
    with pytest.warns(ConvergenceWarning):
        draws = fit(ModelVariant("standard"), data, cfg, seed=1)
    assert not draws.converged and draws.messages
    assert {row["parameter"] for row in draws.diagnostics_table()} >= {"gamma", "tau_b"}


def test_blocks_present(tiny):
    data, _ = tiny
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        d = fit(ModelVariant.from_name("Simple-struct"), data, QUICK, seed=2)
    for key in ("beta", "gamma", "b", "tau_b", "phi_b", "eta", "e", "tau_e", "phi_e", "sigma2", "u_b", "v_b", "u_e"):
        assert key in d
    np.testing.assert_allclose(d["u_b"].sum(axis=-1), 0.0, atol=1e-8)
    assert np.all(d["sigma2"] > 0)


def test_flat_prior_standard_recovers_direct_estimate():
    icar = scale_icar(icar_structure([[1], [0]]))
    est = [DesignEstimate(0, 3.0, 1.0, 5, 1, 20.0), DesignEstimate(1, 3.0, 1.0, 5, 1, 20.0)]
    data = build_fit_data(est, np.ones((2, 1)), np.zeros(2), np.ones((2, 1)), icar)
    prior = PriorConfig(regression_sd=100.0)
    d = fit(ModelVariant("standard"), data, McmcConfig(chains=2, warmup=500, draws=2000), seed=3, prior=prior)
    theta = d.flat("theta")
    mcse = theta.std(axis=0) / np.sqrt(d.ess["theta"])
    assert np.all(np.abs(theta.mean(axis=0) - 3.0) < 4 * mcse)


def _generic_rwm(variant, data, n_iter, seed, x0):
    """Plain adaptive random-walk Metropolis on the joint log posterior."""
    p, K = data.X.shape[1], data.K

    def unpack(x):
        tau_b, phi_b = math.exp(x[p + 1 + K]), 1 / (1 + math.exp(-x[p + 2 + K]))
        e0 = p + 4 + K
        return ModelState(x[:p], x[p], x[p + 1 : p + 1 + K], tau_b, phi_b, x[e0 - 1 : e0], x[e0 : e0 + K], math.exp(x[-1]))

    def lp(x):
        if np.any(np.abs(x[p + 1 + K : p + 3 + K]) > 30) or abs(x[-1]) > 30:
            return -math.inf
        return log_posterior(variant, data, unpack(x))

    rng = np.random.default_rng(seed)
    d = len(x0)
    x, cur = x0.copy(), lp(x0)
    mean, M2 = x.copy(), np.zeros((d, d))
    L, log_step = np.eye(d) * 0.1, 0.0
    out = []
    for t in range(1, n_iter + 1):
        prop = x + math.exp(log_step) * 2.38 / math.sqrt(d) * (L @ rng.standard_normal(d))
        new = lp(prop)
        a = math.exp(min(0.0, new - cur)) if np.isfinite(new) else 0.0
        if rng.uniform() < a:
            x, cur = prop, new
        if t <= n_iter // 2:
            log_step += (a - 0.234) / t**0.6
            delta = x - mean
            mean += delta / t
            M2 += np.outer(delta, x - mean)
            if t > 2000 and t % 1000 == 0:
                L = np.linalg.cholesky(M2 / (t - 1) + 1e-8 * np.eye(d))
        elif t % 5 == 0:
            s = unpack(x)
            out.append(np.concatenate([s.theta(data), np.log(s.sigma2(data, variant))]))
    return np.array(out)


@pytest.mark.slow
def test_sampler_agrees_with_generic_metropolis():
    variant = ModelVariant.from_name("Simple-unstruct")
    data, _ = model_generated_data(K=6, A=2, seed=3)
    x0 = np.concatenate([[-1, 0.3], [0.5], np.zeros(6), [2, 0], [0.5], np.zeros(6), [1.4]])
    ref = _generic_rwm(variant, data, 200_000, 1, x0)
    d = fit(variant, data, McmcConfig(chains=4, warmup=500, draws=1500), seed=2)
    mine = np.column_stack([d.flat("theta"), np.log(d.flat("sigma2"))])
    sd = ref.std(axis=0)
    assert np.all(np.abs(mine.mean(axis=0) - ref.mean(axis=0)) < 0.25 * sd)
    ratio = mine.std(axis=0) / sd
    assert np.all((ratio > 0.75) & (ratio < 1.33))

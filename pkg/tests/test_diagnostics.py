import numpy as np
import pytest

from fhvs.inference import bulk_ess, split_rhat


def ar1(rng, rho, chains, n, shift=None):
    x = np.empty((chains, n))
    x[:, 0] = rng.standard_normal(chains)
    eps = rng.standard_normal((chains, n)) * np.sqrt(1 - rho**2)
    for t in range(1, n):
        x[:, t] = rho * x[:, t - 1] + eps[:, t]
    if shift is not None:
        x += np.asarray(shift)[:, None]
    return x


def test_iid_draws_converged(rng):
    x = rng.standard_normal((4, 1000, 3))
    assert np.all(split_rhat(x) < 1.01)
    np.testing.assert_allclose(bulk_ess(x), 4000, rtol=0.15)


def test_ar1_ess_matches_theory(rng):
    rho = 0.7
    x = ar1(rng, rho, 4, 20000)
    theory = 4 * 20000 * (1 - rho) / (1 + rho)
    assert bulk_ess(x)[0] == pytest.approx(theory, rel=0.1)


def test_separated_chains_flagged(rng):
    x = ar1(rng, 0.5, 2, 500, shift=[0.0, 3.0])
    assert split_rhat(x)[0] > 1.5


def test_trend_within_chain_flagged(rng):
    x = rng.standard_normal((2, 400)) + np.linspace(0, 4, 400)
    assert split_rhat(x)[0] > 1.1


def test_scale_difference_caught_by_folding(rng):
    x = rng.standard_normal((2, 2000))
    x[1] *= 4
    assert split_rhat(x)[0] > 1.05


def test_constant_draws():
    x = np.ones((2, 50))
    assert split_rhat(x)[0] == 1.0


def test_too_few_draws():
    with pytest.raises(ValueError):
        split_rhat(np.zeros((2, 3)))

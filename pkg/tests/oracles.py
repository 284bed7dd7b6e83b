"""Independent reference computations used to check the package.

These are deliberately naive: plain loops over clusters, dense textbook
formulas, and closed-form moments of Gaussian quadratic forms.
"""

from __future__ import annotations

import numpy as np

from fhvs.tables import AreaSample


def taylor_longform(ybar, wstar, stratum):
    """Loop form of the linearized variance; wstar is zero outside the area."""
    S = sum(wstar)
    theta = sum(w * y for w, y in zip(wstar, ybar)) / S
    total = 0.0
    for h in sorted(set(stratum)):
        idx = [c for c in range(len(ybar)) if stratum[c] == h]
        m_h = len(idx)
        z = [wstar[c] * (ybar[c] - theta) for c in idx]
        if not any(z):
            continue
        zbar = sum(z) / m_h
        total += m_h / (m_h - 1) * sum((zc - zbar) ** 2 for zc in z)
    return total / S**2


def simple_longform(ybar, stratum):
    m = len(ybar)
    strata = sorted(set(stratum))
    acc = 0.0
    for h in strata:
        ys = [y for y, s in zip(ybar, stratum) if s == h]
        mean = sum(ys) / len(ys)
        acc += sum((y - mean) ** 2 for y in ys)
    return acc / (m * (m - len(strata)))


def quadratic_form_moments(M, cov, mu):
    """Mean and variance of x'Mx for x ~ N(mu, cov)."""
    MC = M @ cov
    mean = np.trace(MC) + mu @ M @ mu
    var = 2 * np.trace(MC @ MC) + 4 * mu @ M @ cov @ M @ mu
    return mean, var


def random_area(rng, unplanned=True, n_strata=None, equal_w_within=False, max_m=6):
    """Random AreaSample with at least two in-area clusters; out-of-area clusters get zero weight."""
    H = int(rng.integers(1, 4)) if n_strata is None else n_strata
    ybar, n, w, stratum, inside = [], [], [], [], []
    for h in range(H):
        m_h = int(rng.integers(2, max_m + 1))
        base_w = rng.uniform(0.5, 3.0)
        for c in range(m_h):
            is_in = (not unplanned) or c < (2 if h == 0 else 1) or rng.uniform() < 0.6
            ybar.append(rng.normal())
            n.append(int(rng.integers(1, 15)))
            wc = base_w if equal_w_within else rng.uniform(0.5, 3.0)
            w.append(wc if is_in else 0.0)
            stratum.append(h)
            inside.append(is_in)
    inside = np.array(inside)
    urban = np.array([s % 2 == 0 for s in stratum])
    return AreaSample(
        area=0,
        ybar=np.array(ybar),
        n=np.array(n, dtype=float),
        wstar=np.array(w),
        stratum=np.array(stratum),
        inside=inside,
        urban=urban,
    )


def unplanned_fixture() -> AreaSample:
    """One stratum, three sampled clusters, the third outside the area."""
    return AreaSample(
        area=0,
        ybar=np.array([0.0, 2.0, 5.0]),
        n=np.ones(3),
        wstar=np.array([1.0, 1.0, 0.0]),
        stratum=np.zeros(3, dtype=int),
        inside=np.array([True, True, False]),
    )


def model_generated_data(K=60, seed=0, beta=(-1.0, 0.3), gamma=0.5, eta=(0.5,), tau_e=4.0,
                         tau_b=9.0, phi_b=0.5, A=10, strata=(1, 2)):
    """FitData drawn from the Simple-unstruct model itself, plus the true values.

    Each area gets 2-8 clusters split over one or two strata and cluster
    sizes of 3-15; V_hat is a scaled chi-square draw with df = m - |H|.
    """
    from fhvs.frame import build_geography
    from fhvs.inference import FitData
    from fhvs.spatial import draw_bym2

    rng = np.random.default_rng(seed)
    geog = build_geography(K, A, seed=seed)
    icar = geog.icar()
    X = np.column_stack([np.ones(K), rng.standard_normal((K, len(beta) - 1))])
    Z = np.column_stack([np.ones(K), rng.standard_normal((K, len(eta) - 1))])
    p_urban = rng.uniform(0, 1, K)
    b, _, _ = draw_bym2(icar, tau_b, phi_b, rng)
    e = rng.normal(0, tau_e**-0.5, K)
    theta = X @ np.asarray(beta) + p_urban * gamma + b
    sigma2 = np.exp(Z @ np.asarray(eta) + e)
    H = rng.integers(strata[0], strata[1] + 1, K)
    m = np.maximum(H + 1, rng.integers(2, 9, K))
    total_n = np.array([rng.integers(3, 16, mm).sum() for mm in m], dtype=float)
    v = sigma2 / total_n
    d = (m - H).astype(float)
    theta_hat = rng.normal(theta, np.sqrt(v))
    v_hat = v / d * rng.chisquare(d)
    data = FitData(theta_hat, v_hat, m, H, total_n, X, p_urban, Z, icar)
    truth = {"beta": np.asarray(beta), "gamma": gamma, "eta": np.asarray(eta), "theta": theta, "sigma2": sigma2}
    return data, truth

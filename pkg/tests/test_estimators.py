import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fhvs.estimators import (
    DesignError,
    domain_decomposition,
    estimate_area,
    estimate_areas,
    hajek_mean,
    matrix_variance,
    quadratic_form_matrix,
    simple_variance,
    taylor_variance,
)
from fhvs.tables import AreaSample, ClusterSummary
from oracles import random_area, simple_longform, taylor_longform, unplanned_fixture

seeds = st.integers(0, 2**32 - 1)


def test_hajek_examples():
    assert hajek_mean([1, 3], [1, 1]) == 2
    assert hajek_mean([0, 4], [1, 3]) == 3
    assert hajek_mean([5], [2.5]) == 5
    with pytest.raises(DesignError):
        hajek_mean([], [])


def test_taylor_examples():
    assert taylor_variance(AreaSample.planned([0, 2], [1, 1])) == pytest.approx(1.0)
    assert taylor_variance(unplanned_fixture()) == pytest.approx(0.75)
    single = AreaSample(0, np.array([1.0, 2.0]), np.ones(2), np.array([1.0, 0.0]), np.zeros(2, int), np.array([True, False]))
    assert taylor_variance(single) == 0.0


def test_unplanned_fixture_all_forms():
    s = unplanned_fixture()
    assert matrix_variance(s) == pytest.approx(0.75)
    inside, outside = domain_decomposition(s)
    assert inside + outside == pytest.approx(0.75)


def test_simple_examples():
    assert simple_variance(AreaSample.planned([0, 2], [1, 1])) == pytest.approx(1.0)
    two = AreaSample.planned([0, 2, 0, 2], [1] * 4, stratum=[0, 0, 1, 1])
    assert simple_variance(two) == pytest.approx(0.5)
    assert simple_variance(AreaSample.planned([3, 3, 3], [1] * 3)) == 0.0


def test_singleton_stratum_rejected():
    s = AreaSample.planned([0.0, 1.0, 2.0], [1, 1, 1], stratum=[0, 0, 1])
    with pytest.raises(DesignError):
        taylor_variance(s)


def test_planned_domain_has_no_outside_term(rng):
    s = random_area(rng, unplanned=False)
    assert domain_decomposition(s)[1] == 0.0


def test_constant_outcomes_give_zero(rng):
    s = random_area(rng)
    flat = AreaSample(0, np.full(len(s.ybar), 2.0), s.n, s.wstar, s.stratum, s.inside)
    assert taylor_variance(flat) == pytest.approx(0.0, abs=1e-15)
    assert domain_decomposition(flat) == pytest.approx((0.0, 0.0), abs=1e-15)


def test_one_stratum_equal_weights_matrix_is_centering():
    m = 5
    s = AreaSample.planned(np.arange(m, dtype=float), np.full(m, 2.0))
    M = quadratic_form_matrix(s)
    C = np.eye(m) - 1.0 / m
    ratio = M[0, 0] / C[0, 0]
    np.testing.assert_allclose(M, ratio * C, atol=1e-12)


@given(seeds)
def test_taylor_matches_longform_oracle(seed):
    s = random_area(np.random.default_rng(seed))
    expect = taylor_longform(list(s.ybar), list(s.wstar), list(s.stratum))
    assert taylor_variance(s) == pytest.approx(expect, rel=1e-10, abs=1e-15)


@given(seeds)
def test_matrix_equals_taylor(seed):
    s = random_area(np.random.default_rng(seed))
    assert matrix_variance(s) == pytest.approx(taylor_variance(s), rel=1e-10, abs=1e-15)


@given(seeds)
def test_decomposition_sums(seed):
    s = random_area(np.random.default_rng(seed))
    assert sum(domain_decomposition(s)) == pytest.approx(taylor_variance(s), rel=1e-10, abs=1e-15)


@given(seeds, st.integers(1, 3), st.integers(2, 6))
def test_simplification_under_design_assumptions(seed, H, per):
    rng = np.random.default_rng(seed)
    y = rng.normal(size=H * per)
    stratum = np.repeat(np.arange(H), per)
    s = AreaSample.planned(y, np.full(H * per, 1.7), n=np.full(H * per, 8.0), stratum=stratum)
    assert taylor_variance(s) == pytest.approx(simple_variance(s), rel=1e-12, abs=1e-15)
    assert simple_variance(s) == pytest.approx(simple_longform(list(y), list(stratum)), rel=1e-12)


@given(seeds, st.floats(0.1, 10))
def test_weight_scale_invariance(seed, a):
    s = random_area(np.random.default_rng(seed))
    scaled = AreaSample(0, s.ybar, s.n, s.wstar * a, s.stratum, s.inside)
    assert taylor_variance(scaled) == pytest.approx(taylor_variance(s), rel=1e-9, abs=1e-15)


@given(seeds, st.floats(-5, 5))
def test_location_invariance(seed, shift):
    s = random_area(np.random.default_rng(seed))
    moved = AreaSample(0, s.ybar + shift, s.n, s.wstar, s.stratum, s.inside)
    assert taylor_variance(moved) == pytest.approx(taylor_variance(s), rel=1e-7, abs=1e-12)


def _table(area, stratum, ybar, wstar, n=None):
    k = len(area)
    return ClusterSummary(
        cluster_id=np.arange(k),
        stratum=np.asarray(stratum),
        area=np.asarray(area),
        ybar=np.asarray(ybar, dtype=float),
        n=np.ones(k, dtype=int) if n is None else np.asarray(n),
        wstar=np.asarray(wstar, dtype=float),
    )


def test_estimate_area_flags():
    table = _table([0, 0, 1, 2], [0, 0, 0, 1], [0, 2, 5, 1], [1, 1, 1, 1])
    est = {e.area: e for e in estimate_areas(table, [0, 1, 2, 3])}
    assert est[0].estimable and est[0].m_dot_i == 2
    assert not est[1].estimable and est[1].v_hat == 0.0
    assert not est[3].estimable and math.isnan(est[3].theta_hat)


def test_estimate_area_unplanned_matches_fixture():
    table = _table([0, 0, 1], [0, 0, 0], [0, 2, 5], [1, 1, 1])
    e = estimate_area(table, 0)
    assert e.v_hat == pytest.approx(0.75)
    assert e.theta_hat == pytest.approx(1.0)
    assert e.strata_count == 1

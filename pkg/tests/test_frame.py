import math

import numpy as np
import pytest

from fhvs.frame import (
    FrameConfig,
    OutcomeKind,
    area_means,
    build_frame,
    build_geography,
    gen_outcomes,
    gen_superpopulation,
)


def test_grid_geography():
    g = build_geography(4, 2)
    assert g.shape == (2, 2)
    for i, nb in enumerate(g.neighbors):
        assert 2 <= len(nb) <= 3
        assert all(i in g.neighbors[j] for j in nb)


def test_geography_rejects_single_area():
    with pytest.raises(ValueError):
        build_geography(1, 1)


def test_full_scale_strata_count():
    g = build_geography(300, 47, urban_only=2)
    assert g.H == 92


def test_admin1_groups_are_contiguous():
    g = build_geography(60, 10)
    for a in range(10):
        members = set(np.flatnonzero(g.admin1_of_area == a))
        seen, stack = set(), [min(members)]
        while stack:
            i = stack.pop()
            if i in seen:
                continue
            seen.add(i)
            stack.extend(j for j in g.neighbors[i] if j in members)
        assert seen == members


def test_setting_one_parameters():
    g = build_geography(12, 3, seed=1)
    p = gen_superpopulation(g, "1", seed=1)
    assert np.all(p.kappa == 0) and np.all(p.gamma == 1)
    np.testing.assert_allclose(p.theta_hi[:, 1] - p.theta_hi[:, 0], 1.0)


def test_setting_two_variance_shift():
    g = build_geography(300, 47, seed=1)
    p = gen_superpopulation(g, "2", seed=1)
    assert p.kappa.mean() == pytest.approx(math.log(1.5), abs=0.05)
    np.testing.assert_allclose(p.sigma2_hi[:, 1] / p.sigma2_hi[:, 0], np.exp(p.kappa))


def test_superpopulation_deterministic():
    g = build_geography(12, 3)
    a, b = gen_superpopulation(g, "1", seed=5), gen_superpopulation(g, "1", seed=5)
    np.testing.assert_array_equal(a.theta_hi, b.theta_hi)
    np.testing.assert_array_equal(a.sigma2_hi, b.sigma2_hi)
    with pytest.raises(ValueError):
        gen_superpopulation(g, "9")


def test_listed_sizes(small_world):
    frame = small_world["frame"]
    np.testing.assert_array_equal(frame.L, frame.N)
    big = build_frame(build_geography(60, 10, seed=2), FrameConfig(reenumerate=True), seed=2)
    assert np.mean(big.L / big.N) == pytest.approx(0.85, abs=0.02)


def test_frame_totals_and_strata(small_world):
    frame, geog = small_world["frame"], small_world["geog"]
    for h, (a1, urban) in enumerate(geog.strata):
        rows = frame.stratum_rows(h)
        assert np.all(frame.urban[rows] == urban)
        assert np.all(geog.admin1_of_area[frame.area[rows]] == a1)
        assert frame.N[rows].sum() == frame.stratum_population[h]
    assert frame.N.sum() == frame.pop_hi.sum()


def test_cluster_allocation_is_proportional():
    g = build_geography(2, 1, urban_only=0)
    counts = []
    for seed in range(400):
        cfg = FrameConfig(area_population=(4000.0, 12000.0), urban_share=(0.5, 0.5), clusters_per_stratum=(7, 7))
        f = build_frame(g, cfg, seed=seed)
        rows = f.stratum_rows(0)
        counts.append(np.bincount(f.area[rows], minlength=2))
    counts = np.mean(counts, axis=0)
    assert counts[1] / counts[0] == pytest.approx(3.0, rel=0.02)


def test_area_means_population_weighted(small_world):
    frame, params = small_world["frame"], small_world["params"]
    share = frame.urban_share()
    expect = params.theta_hi[:, 0] + share * (params.theta_hi[:, 1] - params.theta_hi[:, 0])
    np.testing.assert_allclose(area_means(frame, params), expect, rtol=1e-12)


def test_outcome_degenerate_variance(small_world):
    frame, params = small_world["frame"], small_world["params"]
    tiny = params.__class__(**{**params.__dict__, "sigma2_hi": np.zeros_like(params.sigma2_hi)})
    y = gen_outcomes(frame, tiny, OutcomeKind(), 0, 10, seed=1)
    assert np.all(y == y[0])


def test_student_t_variance(small_world):
    frame, params = small_world["frame"], small_world["params"]
    y = gen_outcomes(frame, params, OutcomeKind("student_t", df=5), 0, 1_000_000, seed=2)
    area, col = frame.area[0], int(frame.urban[0])
    assert y.var() == pytest.approx(params.sigma2_hi[area, col], rel=0.01)


def test_intra_cluster_correlation(small_world):
    frame, params = small_world["frame"], small_world["params"]
    rng = np.random.default_rng(3)
    kind = OutcomeKind("intra_cluster_normal", rho=0.25)
    pairs = np.array([gen_outcomes(frame, params, kind, 0, 2, rng) for _ in range(200_000)])
    assert np.corrcoef(pairs.T)[0, 1] == pytest.approx(0.25, abs=0.01)


def test_outcome_kind_validation():
    with pytest.raises(ValueError):
        OutcomeKind("student_t", df=2)
    with pytest.raises(ValueError):
        OutcomeKind("poisson")

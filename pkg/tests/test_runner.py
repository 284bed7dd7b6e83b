import filecmp
import json
import shutil

import numpy as np
import pytest

from fhvs import runner
from fhvs.design import SchemaError, write_sample_csv
from fhvs.evaluation import read_metrics_csv
from fhvs.inference import McmcConfig
from fhvs.tables import ClusterSummary
from oracles import unplanned_fixture

MODELS = ("standard", "oracle", "Simple-unstruct", "SASW-unstruct")


def tiny_config(out, **kw):
    base = dict(
        setting="1",
        K=12,
        A=3,
        G=2,
        models=MODELS,
        seed=11,
        out=str(out),
        mcmc=McmcConfig(chains=2, warmup=40, draws=40),
    )
    base.update(kw)
    return runner.RunConfig(**base)


@pytest.fixture(scope="module")
def tiny_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    cfg = tiny_config(out)
    summary = runner.run_setting(cfg)
    return cfg, summary


def test_smoke_artifacts(tiny_run):
    cfg, summary = tiny_run
    assert summary["failures"] == []
    d = cfg.run_dir
    for name in ("truth.csv", "adjacency.csv", "covariates.csv", "frame.csv", "metrics.csv", "run.json", "empirical_variance.csv"):
        assert (d / name).exists(), name
    for g in range(2):
        rep = d / f"rep-{g:03d}"
        assert (rep / "estimates.csv").exists() and (rep / "sample.csv").exists()
        for m in MODELS:
            assert (rep / f"fit-{m}.csv").exists()
            assert json.loads((rep / f"diag-{m}.json").read_text())["model"] == m
    rows = read_metrics_csv(d / "metrics.csv")
    assert {r["model"] for r in rows} == set(MODELS)
    assert sum(r["area"] == "all" for r in rows) == len(MODELS)


def test_rerun_is_byte_identical(tiny_run, tmp_path):
    cfg, _ = tiny_run
    again = tiny_config(tmp_path)
    runner.run_setting(again)
    a, b = cfg.run_dir, again.run_dir
    for path in sorted(a.rglob("*.csv")):
        assert filecmp.cmp(path, b / path.relative_to(a), shallow=False), path


def test_replicate_rerun_reproduces(tiny_run, tmp_path):
    cfg, _ = tiny_run
    copy = tmp_path / "setting-1"
    shutil.copytree(cfg.run_dir, copy)
    shutil.rmtree(copy / "rep-001")
    runner.run_setting(tiny_config(tmp_path), replicates=[1])
    for path in sorted((cfg.run_dir / "rep-001").glob("*.csv")):
        assert filecmp.cmp(path, copy / "rep-001" / path.name, shallow=False), path


def test_evaluate_run_matches_written_metrics(tiny_run):
    cfg, summary = tiny_run
    tables = runner.evaluate_run(cfg.run_dir)
    for (setting, model), t in tables.items():
        assert summary["metrics"][f"{setting}/{model}"]["coverage"] == pytest.approx(t.summary()["coverage"])


def test_config_validation_and_loading(tmp_path):
    with pytest.raises(ValueError):
        runner.RunConfig(G=0)
    with pytest.raises(ValueError):
        runner.RunConfig(models=())
    with pytest.raises(ValueError):
        runner.RunConfig.from_dict({"bogus": 1})
    path = tmp_path / "c.toml"
    path.write_text('setting = "1a"\nG = 3\nmodels = ["standard"]\n[mcmc]\ndraws = 50\n')
    cfg = runner.RunConfig.load(path)
    assert cfg.G == 3 and cfg.mcmc.draws == 50 and cfg.models == ("standard",)
    assert cfg.cluster_multiplier == 5
    assert cfg.sample_config.multiplier == 5
    assert runner.RunConfig(setting="reenum").frame_config.reenumerate


def test_estimate_from_csv_unplanned_fixture(tmp_path):
    s = unplanned_fixture()
    table = ClusterSummary(np.arange(3), [0, 0, 0], [0, 0, 1], s.ybar, [1, 1, 1], [1.0, 1.0, 1.0])
    write_sample_csv(table, tmp_path / "s.csv")
    est = runner.estimate_from_csv(tmp_path / "s.csv", tmp_path / "e.csv")
    assert est[0].v_hat == pytest.approx(0.75)
    back = runner.read_estimates_csv(tmp_path / "e.csv")
    assert back[0].v_hat == pytest.approx(0.75) and back[0].total_n == 2


def test_estimate_one_cluster_per_area(tmp_path):
    table = ClusterSummary(np.arange(4), [0, 0, 1, 1], [0, 1, 2, 3], np.ones(4), np.ones(4), np.ones(4))
    write_sample_csv(table, tmp_path / "s.csv")
    assert not any(e.estimable for e in runner.estimate_from_csv(tmp_path / "s.csv"))


def test_estimate_empty_file(tmp_path):
    (tmp_path / "empty.csv").write_text("")
    with pytest.raises(SchemaError):
        runner.estimate_from_csv(tmp_path / "empty.csv")


def test_covariates_round_trip(tmp_path, rng):
    X = np.column_stack([np.ones(5), rng.normal(size=(5, 2))])
    Z = np.column_stack([np.ones(5), rng.normal(size=5)])
    p = rng.uniform(size=5)
    runner.write_covariates_csv(tmp_path / "c.csv", X, Z, p)
    X2, Z2, p2 = runner.read_covariates_csv(tmp_path / "c.csv")
    np.testing.assert_array_equal(X2, X)
    np.testing.assert_array_equal(Z2, Z)
    np.testing.assert_array_equal(p2, p)


def test_diagnose_samples(small_world):
    rows = runner.diagnose_samples(small_world["table"], gamma=0.0, sigma2=1.0)
    assert rows
    for area, m, r, d, c, vstar, factor, R, s2 in rows:
        assert 1 <= r <= m - 1
        assert d > 0 and c > 0 and vstar > 0 and s2 == 1.0
        assert c * d == pytest.approx(factor, rel=1e-10)

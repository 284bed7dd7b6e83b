import json

import numpy as np
import pytest

from fhvs import runner
from fhvs.cli import main
from fhvs.design import write_sample_csv


@pytest.fixture(scope="module")
def fit_inputs(tmp_path_factory):
    """Sample, covariates and adjacency files for a tiny geography."""
    d = tmp_path_factory.mktemp("cli")
    cfg = runner.RunConfig(K=12, A=3, seed=3, out=str(d))
    world = runner.build_world(cfg)
    from fhvs.design import draw_sample
    from fhvs.frame import outcome_kind_for
    from fhvs.spatial import write_edge_list

    table = draw_sample(world.frame, world.params, outcome_kind_for("1"), cfg.sample_config, seed=1)
    write_sample_csv(table, d / "sample.csv")
    runner.write_covariates_csv(d / "cov.csv", world.params.X, world.params.Z, world.frame.urban_share())
    write_edge_list(world.geography.neighbors, d / "adj.csv")
    (d / "mcmc.toml").write_text("[mcmc]\nwarmup = 40\ndraws = 40\n")
    return d


def test_estimate_writes_csv(fit_inputs, tmp_path):
    assert main(["estimate", str(fit_inputs / "sample.csv"), "--out", str(tmp_path / "e.csv")]) == 0
    est = runner.read_estimates_csv(tmp_path / "e.csv")
    assert len(est) == 12


def test_estimate_schema_error_exit_code(tmp_path, capsys):
    (tmp_path / "empty.csv").write_text("")
    assert main(["estimate", str(tmp_path / "empty.csv")]) == 1
    assert "error" in capsys.readouterr().err


def test_fit_outputs(fit_inputs, tmp_path):
    code = main([
        "fit", "--clusters", str(fit_inputs / "sample.csv"), "--covariates", str(fit_inputs / "cov.csv"),
        "--adjacency", str(fit_inputs / "adj.csv"), "--model", "standard", "SASW-unstruct",
        "--config", str(fit_inputs / "mcmc.toml"), "--out", str(tmp_path),
    ])
    assert code in (0, 2)
    for m in ("standard", "SASW-unstruct"):
        assert (tmp_path / f"summary-{m}.csv").exists()
        assert (tmp_path / f"draws-{m}.csv").exists()
        diag = json.loads((tmp_path / f"diagnostics-{m}.json").read_text())
        assert diag["model"] == m and "parameters" in diag
    header = (tmp_path / "summary-SASW-unstruct.csv").read_text().splitlines()[0]
    assert "sigma2_mean" in header


def test_fit_from_estimates_rejects_sasw(fit_inputs, tmp_path):
    main(["estimate", str(fit_inputs / "sample.csv"), "--out", str(tmp_path / "e.csv")])
    args = ["fit", "--estimates", str(tmp_path / "e.csv"), "--covariates", str(fit_inputs / "cov.csv"),
            "--adjacency", str(fit_inputs / "adj.csv"), "--config", str(fit_inputs / "mcmc.toml"), "--out", str(tmp_path)]
    assert main(args + ["--model", "SASW-struct"]) == 1
    assert main(args + ["--model", "oracle"]) == 1
    assert main(args + ["--model", "Simple-unstruct"]) in (0, 2)


def test_diagnose(fit_inputs, tmp_path):
    assert main(["diagnose", str(fit_inputs / "sample.csv"), "--gamma", "0.5", "--out", str(tmp_path / "d.csv")]) == 0
    cols = runner._read_columns(tmp_path / "d.csv")
    assert list(cols) == list(runner.DIAGNOSE_COLUMNS)
    assert np.all(cols["d_i"] > 0)


def test_simulate_and_evaluate(tmp_path):
    conf = tmp_path / "run.toml"
    conf.write_text('K = 12\nA = 3\nG = 2\nmodels = ["standard", "Simple-unstruct"]\n[mcmc]\nwarmup = 30\ndraws = 30\n')
    assert main(["simulate", "--config", str(conf), "--out", str(tmp_path), "--seed", "5"]) == 0
    run_dir = tmp_path / "setting-1"
    assert (run_dir / "metrics.csv").exists()
    assert main(["evaluate", str(run_dir), "--out", str(tmp_path / "m2.csv")]) == 0
    assert (tmp_path / "m2.csv").read_text() == (run_dir / "metrics.csv").read_text()

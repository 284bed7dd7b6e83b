"""Config-driven simulation runs, artifact persistence, and the real-data estimate path.

Layout of a run directory::

    <out>/setting-<tag>/
        run.json  truth.csv  adjacency.csv  covariates.csv  frame.csv  metrics.csv
        rep-000/  sample.csv  estimates.csv  fit-<model>.csv  diag-<model>.json
"""

from __future__ import annotations

import csv
import json
import math
import traceback
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .design import SampleConfig, draw_sample, read_sample_csv, write_sample_csv
from .distributions import bias_factor, sasw_eigensystem, sasw_params, v_dagger, v_star
from .estimators import DesignError, DesignEstimate, estimate_areas
from .evaluation import (
    MetricTable,
    design_variance_estimate,
    empirical_design_variances,
    evaluate_estimates,
    ratio_metrics,
    write_metrics_csv,
)
from .frame import (
    SETTINGS,
    FrameConfig,
    Geography,
    SurveyFrame,
    SuperpopParams,
    area_means,
    area_variances,
    build_frame,
    build_geography,
    gen_superpopulation,
    outcome_kind_for,
)
from .inference import ALL_MODELS, ConvergenceWarning, FitData, McmcConfig, ModelVariant, build_fit_data, fit, summarize_posterior
from .seeding import derive_seed
from .spatial import write_edge_list
from .tables import ClusterSummary

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib


# --------------------------------------------------------------------------- config


@dataclass(frozen=True)
class RunConfig:
    setting: str = "1"
    K: int = 60
    A: int = 10
    urban_only: int | None = None
    G: int = 30
    models: tuple[str, ...] = ALL_MODELS
    seed: int = 20240601
    out: str = "runs"
    scale: int = 1
    threads: int = 1
    level: float = 0.90
    mcmc: McmcConfig = field(default_factory=McmcConfig)
    sample: SampleConfig = field(default_factory=SampleConfig)
    frame: FrameConfig = field(default_factory=FrameConfig)

    def __post_init__(self):
        if self.setting not in SETTINGS:
            raise ValueError(f"unknown setting {self.setting!r}; expected one of {SETTINGS}")
        if self.G < 1:
            raise ValueError("G must be at least 1")
        if not self.models:
            raise ValueError("model list is empty")
        for m in self.models:
            ModelVariant.from_name(m)
        if self.scale < 1 or self.threads < 1:
            raise ValueError("scale and threads must be positive")

    @property
    def cluster_multiplier(self) -> int:
        return 5 * self.scale if self.setting == "1a" else self.scale

    @property
    def sample_config(self) -> SampleConfig:
        return replace(self.sample, multiplier=self.sample.multiplier * self.cluster_multiplier)

    @property
    def frame_config(self) -> FrameConfig:
        return replace(self.frame, reenumerate=self.frame.reenumerate or self.setting == "reenum")

    @property
    def superpop_setting(self) -> str:
        return "1" if self.setting in ("1a", "reenum") else self.setting

    @property
    def run_dir(self) -> Path:
        return Path(self.out) / f"setting-{self.setting}"

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        raw = dict(raw)
        nested = {"mcmc": McmcConfig, "sample": SampleConfig, "frame": FrameConfig}
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"unknown config keys {sorted(unknown)}")
        for key, typ in nested.items():
            if key in raw:
                sub = raw[key]
                allowed = {f.name for f in fields(typ)}
                if set(sub) - allowed:
                    raise ValueError(f"unknown {key} keys {sorted(set(sub) - allowed)}")
                raw[key] = typ(**{k: tuple(v) if isinstance(v, list) else v for k, v in sub.items()})
        if "models" in raw:
            raw["models"] = tuple(raw["models"])
        if "setting" in raw:
            raw["setting"] = str(raw["setting"])
        return cls(**raw)

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = Path(path)
        if path.suffix == ".json":
            raw = json.loads(path.read_text())
        else:
            with open(path, "rb") as fh:
                raw = tomllib.load(fh)
        return cls.from_dict(raw)

    def to_dict(self) -> dict:
        return asdict(self)


# --------------------------------------------------------------------------- csv helpers


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    return repr(x) if math.isfinite(x) else ""


def _write_rows(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _read_columns(path) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{path}: no rows")
    return {k: np.array([float(r[k]) if r[k] != "" else math.nan for r in rows]) for k in rows[0]}


ESTIMATE_COLUMNS = ("area", "theta_hat", "v_hat", "m", "strata", "estimable", "total_n")


def write_estimates_csv(estimates: list[DesignEstimate], path) -> None:
    _write_rows(
        path,
        ESTIMATE_COLUMNS,
        ((e.area, e.theta_hat, e.v_hat, e.m_dot_i, e.strata_count, e.estimable, e.total_n) for e in estimates),
    )


def read_estimates_csv(path, K: int | None = None) -> list[DesignEstimate]:
    cols = _read_columns(path)
    missing = [c for c in ESTIMATE_COLUMNS if c not in cols and c != "total_n"]
    if missing:
        raise ValueError(f"{path}: missing columns {missing}")
    total = cols.get("total_n", np.zeros(len(cols["area"])))
    by_area = {
        int(a): DesignEstimate(int(a), th, v, int(m), int(h), float(n))
        for a, th, v, m, h, n in zip(cols["area"], cols["theta_hat"], cols["v_hat"], cols["m"], cols["strata"], total)
    }
    K = max(by_area) + 1 if K is None else K
    return [by_area.get(k, DesignEstimate(k, math.nan, math.nan, 0, 0, 0.0)) for k in range(K)]


def estimate_from_csv(path, out=None) -> list[DesignEstimate]:
    """Hajek means and Taylor variances for every area in a cluster-summary CSV."""
    table = read_sample_csv(path)
    est = estimate_areas(table)
    if out is not None:
        write_estimates_csv(est, out)
    return est


def eigensystems_for(table: ClusterSummary, estimates: list[DesignEstimate]) -> dict:
    out = {}
    for e in estimates:
        if e.estimable:
            try:
                out[e.area] = sasw_eigensystem(table.area_view(e.area))
            except DesignError:
                continue
    return out


# --------------------------------------------------------------------------- covariates


def write_covariates_csv(path, X, Z, p_urban) -> None:
    K = len(p_urban)
    header = ["area", "p_urban"] + [f"x{j}" for j in range(1, X.shape[1])] + [f"z{j}" for j in range(1, Z.shape[1])]
    _write_rows(path, header, ([k, p_urban[k], *X[k, 1:], *Z[k, 1:]] for k in range(K)))


def read_covariates_csv(path):
    """(X, Z, p_urban) with intercept columns prepended; rows ordered by area."""
    cols = _read_columns(path)
    order = np.argsort(cols["area"])
    if not np.array_equal(cols["area"][order], np.arange(len(order))):
        raise ValueError(f"{path}: areas must be 0..K-1")
    xs = sorted((k for k in cols if k.startswith("x")), key=lambda k: int(k[1:]))
    zs = sorted((k for k in cols if k.startswith("z")), key=lambda k: int(k[1:]))
    K = len(order)
    X = np.column_stack([np.ones(K)] + [cols[k][order] for k in xs])
    Z = np.column_stack([np.ones(K)] + [cols[k][order] for k in zs])
    return X, Z, cols["p_urban"][order]


# --------------------------------------------------------------------------- simulation


@dataclass
class World:
    geography: Geography
    params: SuperpopParams
    frame: SurveyFrame
    theta: np.ndarray
    sigma2: np.ndarray


def build_world(config: RunConfig) -> World:
    seed = config.seed
    geog = build_geography(config.K, config.A, seed=derive_seed(seed, "geography"), urban_only=config.urban_only)
    icar = geog.icar()
    params = gen_superpopulation(geog, config.superpop_setting, seed=derive_seed(seed, config.setting, "superpop"), icar=icar)
    frame = build_frame(geog, config.frame_config, seed=derive_seed(seed, config.setting, "frame"))
    return World(geog, params, frame, area_means(frame, params), area_variances(frame, params))


def _rep_dir(config: RunConfig, g: int) -> Path:
    return config.run_dir / f"rep-{g:03d}"


def _fit_data(world: World, estimates, eigs, v_emp=None) -> FitData:
    return build_fit_data(
        estimates, world.params.X, world.frame.urban_share(), world.params.Z, world.geography.icar(), eigs, v_emp
    )


FIT_COLUMNS = (
    "area",
    "theta_mean",
    "theta_lower",
    "theta_upper",
    "sigma2_mean",
    "sigma2_lower",
    "sigma2_upper",
    "v_design",
)


def _write_fit(config: RunConfig, rep: Path, variant: ModelVariant, data: FitData, seed: int) -> bool:
    with warnings.catch_warnings():
        # recorded in the diagnostics file instead
        warnings.simplefilter("ignore", ConvergenceWarning)
        draws = fit(variant, data, config.mcmc, seed=seed)
    summ = summarize_posterior(draws, config.level)
    th = summ["theta"]
    K = data.K
    if "sigma2" in summ:
        s2 = summ["sigma2"]
        s2m, s2l, s2u = s2.mean, s2.lower, s2.upper
        vdes = design_variance_estimate(variant, data, s2.mean)
    else:
        s2m = s2l = s2u = np.full(K, np.nan)
        vdes = design_variance_estimate(variant, data, None) if variant.kind == "standard" else np.full(K, np.nan)
    rows = zip(range(K), th.mean, th.lower, th.upper, s2m, s2l, s2u, vdes)
    _write_rows(rep / f"fit-{variant.name}.csv", FIT_COLUMNS, rows)
    diag = {
        "model": variant.name,
        "seed": seed,
        "converged": draws.converged,
        "messages": draws.messages,
        "acceptance": {k: round(v, 6) for k, v in sorted(draws.acceptance.items())},
        "max_rhat": {k: float(np.max(v)) for k, v in draws.rhat.items()},
        "min_ess_bulk": {k: float(np.min(v)) for k, v in draws.ess.items()},
    }
    (rep / f"diag-{variant.name}.json").write_text(json.dumps(diag, indent=1, sort_keys=True) + "\n")
    return draws.converged


def run_replicate(config: RunConfig, g: int, world: World | None = None) -> dict:
    """Sample, estimate and fit every non-oracle model for replicate g."""
    world = build_world(config) if world is None else world
    rep = _rep_dir(config, g)
    rep.mkdir(parents=True, exist_ok=True)
    sample_seed = derive_seed(config.seed, config.setting, g, "sample")
    table = draw_sample(world.frame, world.params, outcome_kind_for(config.superpop_setting), config.sample_config, sample_seed)
    write_sample_csv(table, rep / "sample.csv")
    estimates = estimate_areas(table, range(world.geography.K))
    eigs = eigensystems_for(table, estimates)
    rows = []
    for e in estimates:
        vd = vs = math.nan
        if e.estimable:
            s = table.area_view(e.area)
            vd = v_dagger(s, world.sigma2[e.area])
            vs = v_star(s, world.sigma2[e.area])
        rows.append((e.area, e.theta_hat, e.v_hat, e.m_dot_i, e.strata_count, e.estimable, e.total_n, vd, vs))
    _write_rows(rep / "estimates.csv", ESTIMATE_COLUMNS + ("v_dagger_true", "v_star_true"), rows)
    data = _fit_data(world, estimates, eigs)
    status = {"replicate": g, "sample_seed": sample_seed, "fits": {}}
    for name in config.models:
        variant = ModelVariant.from_name(name)
        if variant.kind == "oracle":
            continue
        seed = derive_seed(config.seed, config.setting, g, "fit", name)
        status["fits"][name] = _write_fit(config, rep, variant, data, seed)
    return status


def run_oracle(config: RunConfig, g: int, v_emp: np.ndarray, world: World | None = None) -> dict:
    world = build_world(config) if world is None else world
    rep = _rep_dir(config, g)
    table = read_sample_csv(rep / "sample.csv")
    estimates = estimate_areas(table, range(world.geography.K))
    data = _fit_data(world, estimates, {}, v_emp)
    seed = derive_seed(config.seed, config.setting, g, "fit", "oracle")
    return {"replicate": g, "fits": {"oracle": _write_fit(config, rep, ModelVariant("oracle"), data, seed)}}


def _guarded(fn, *args) -> dict:
    try:
        return fn(*args)
    except Exception as exc:  # recorded per replicate; the run continues
        return {"replicate": args[1], "error": f"{type(exc).__name__}: {exc}", "trace": traceback.format_exc()}


def _map(config: RunConfig, fn, arglists):
    if config.threads > 1 and len(arglists) > 1:
        with ProcessPoolExecutor(max_workers=config.threads) as pool:
            return list(pool.map(_guarded, [fn] * len(arglists), *zip(*arglists)))
    return [_guarded(fn, *args) for args in arglists]


def run_setting(config: RunConfig, replicates=None) -> dict:
    """Full pipeline for one setting; returns the run summary (also written to run.json)."""
    world = build_world(config)
    out = config.run_dir
    out.mkdir(parents=True, exist_ok=True)
    _write_rows(out / "truth.csv", ("area", "theta", "sigma2"), zip(range(config.K), world.theta, world.sigma2))
    write_edge_list(world.geography.neighbors, out / "adjacency.csv")
    write_covariates_csv(out / "covariates.csv", world.params.X, world.params.Z, world.frame.urban_share())
    world.frame.to_csv(out / "frame.csv")

    reps = list(range(config.G)) if replicates is None else sorted(replicates)
    results = _map(config, run_replicate, [(config, g, world) for g in reps])

    oracle_results = []
    if "oracle" in config.models:
        theta_hat = _stack_estimates(config, "theta_hat", valid_only=True)
        v_emp, _ = empirical_design_variances(theta_hat)
        _write_rows(out / "empirical_variance.csv", ("area", "v_emp"), zip(range(config.K), v_emp))
        oracle_results = _map(config, run_oracle, [(config, g, v_emp, world) for g in reps])

    failures = [r for r in results + oracle_results if "error" in r]
    summary = {
        "config": config.to_dict(),
        "replicates": reps,
        "failures": [{"replicate": r["replicate"], "error": r["error"]} for r in failures],
        "non_converged": sorted(
            f"{r['replicate']}:{m}" for r in results + oracle_results if "fits" in r for m, ok in r["fits"].items() if not ok
        ),
    }
    if not failures:
        tables = evaluate_run(out)
        write_metrics_csv(out / "metrics.csv", tables)
        summary["metrics"] = {f"{s}/{m}": t.summary() for (s, m), t in tables.items()}
    (out / "run.json").write_text(json.dumps(summary, indent=1, sort_keys=True, default=_json_default) + "\n")
    return summary


def _json_default(x):
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, tuple):
        return list(x)
    raise TypeError(type(x))


def _rep_dirs(run_dir: Path) -> list[Path]:
    return sorted(p for p in Path(run_dir).glob("rep-*") if p.is_dir())


def _stack_estimates(config_or_dir, column: str, valid_only: bool = False) -> np.ndarray:
    run_dir = config_or_dir.run_dir if isinstance(config_or_dir, RunConfig) else Path(config_or_dir)
    rows = []
    for rep in _rep_dirs(run_dir):
        cols = _read_columns(rep / "estimates.csv")
        x = cols[column]
        if valid_only:
            x = np.where(cols["estimable"] > 0, x, np.nan)
        rows.append(x)
    return np.array(rows)


def evaluate_run(run_dir) -> dict[tuple[str, str], MetricTable]:
    """Metric tables for every model with fits in every replicate directory."""
    run_dir = Path(run_dir)
    setting = run_dir.name.removeprefix("setting-")
    truth = _read_columns(run_dir / "truth.csv")
    theta, sigma2 = truth["theta"], truth["sigma2"]
    reps = _rep_dirs(run_dir)
    if not reps:
        raise ValueError(f"{run_dir}: no replicate directories")
    theta_hat = _stack_estimates(run_dir, "theta_hat", valid_only=True)
    V, _ = empirical_design_variances(theta_hat)
    Vsafe = np.where(V > 0, V, np.nan)
    theory = {
        "simple": _stack_estimates(run_dir, "v_dagger_true", valid_only=True),
        "sasw": _stack_estimates(run_dir, "v_star_true", valid_only=True),
    }
    models = [m for m in ALL_MODELS if all((r / f"fit-{m}.csv").exists() for r in reps)]
    tables = {}
    for name in models:
        variant = ModelVariant.from_name(name)
        fits = [_read_columns(r / f"fit-{name}.csv") for r in reps]
        stack = {c: np.array([f[c] for f in fits]) for c in FIT_COLUMNS[1:]}
        table = evaluate_estimates(stack["theta_mean"], stack["theta_lower"], stack["theta_upper"], theta)
        ratios = ratio_metrics(
            np.nan_to_num(Vsafe, nan=1.0),
            sigma2,
            theory_var=theory[variant.sampling_dist] if variant.smooth else None,
            sigma2_est=stack["sigma2_mean"] if variant.smooth else None,
            v_est=stack["v_design"] if variant.kind != "oracle" else None,
        )
        for key, val in ratios.items():
            setattr(table, key, np.where(np.isfinite(Vsafe) | (key == "est_to_truth_pop"), val, np.nan))
        tables[(setting, name)] = table
    return tables


# --------------------------------------------------------------------------- diagnostics


DIAGNOSE_COLUMNS = ("area", "m", "r_i", "d_i", "c_i", "v_star", "bias_factor", "R_i", "sigma2_hat")


def diagnose_samples(table: ClusterSummary, gamma: float = 0.0, sigma2: float | None = None) -> list[tuple]:
    """Per-area survey-weighted law diagnostics at plug-in (gamma, sigma2).

    Without ``sigma2`` the moment estimate V-hat (1'w)^2 / sum(q) is used.
    """
    rows = []
    for e in estimate_areas(table):
        if not e.estimable:
            continue
        s = table.area_view(e.area)
        try:
            eig = sasw_eigensystem(s)
        except DesignError:
            continue
        if eig.rank == 0 or eig.q.sum() <= 0:
            continue
        s2 = sigma2 if sigma2 is not None else e.v_hat * eig.sum_wstar**2 / eig.q.sum()
        if not s2 > 0:
            continue
        par = sasw_params(eig, gamma, s2)
        bf = bias_factor(s, gamma, s2, eig)
        rows.append((e.area, e.m_dot_i, eig.rank, par.df, par.scale, par.theoretical_variance, bf.factor, bf.remainder, s2))
    return rows

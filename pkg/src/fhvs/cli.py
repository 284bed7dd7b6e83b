"""Command-line entry point: simulate, estimate, fit, diagnose, evaluate."""

from __future__ import annotations

import argparse
import json
import sys
import warnings
from dataclasses import fields, replace
from pathlib import Path

import numpy as np

from . import runner
from .design import SchemaError, read_sample_csv
from .evaluation import write_metrics_csv
from .inference import ConvergenceWarning, McmcConfig, ModelVariant, PriorConfig, build_fit_data, fit, summarize_posterior
from .spatial import icar_structure, read_edge_list, scale_icar


def _load_table(path) -> dict:
    if path is None:
        return {}
    path = Path(path)
    if path.suffix == ".json":
        return json.loads(path.read_text())
    with open(path, "rb") as fh:
        return runner.tomllib.load(fh)


def _only(cls, raw: dict, name: str):
    allowed = {f.name for f in fields(cls)}
    extra = set(raw) - allowed
    if extra:
        raise ValueError(f"unknown {name} keys {sorted(extra)}")
    return cls(**raw)


def cmd_simulate(args) -> int:
    cfg = runner.RunConfig.load(args.config) if args.config else runner.RunConfig()
    updates = {}
    for key in ("seed", "threads", "out", "setting", "G"):
        val = getattr(args, key)
        if val is not None:
            updates[key] = val
    cfg = replace(cfg, **updates)
    reps = [int(x) for x in args.replicates.split(",")] if args.replicates else None
    summary = runner.run_setting(cfg, reps)
    for fail in summary["failures"]:
        print(f"replicate {fail['replicate']} failed: {fail['error']}", file=sys.stderr)
    if summary["non_converged"]:
        print(f"{len(summary['non_converged'])} fits flagged non-converged", file=sys.stderr)
    print(f"wrote {cfg.run_dir}")
    return 0 if not summary["failures"] else 1


def cmd_estimate(args) -> int:
    est = runner.estimate_from_csv(args.input, args.out)
    flagged = sum(not e.estimable for e in est)
    if args.out is None:
        runner.write_estimates_csv(est, "/dev/stdout")
    print(f"{len(est)} areas, {flagged} not estimable", file=sys.stderr)
    return 0


def _draw_columns(draws) -> tuple[list[str], list[np.ndarray]]:
    names, cols = [], []
    for key, arr in draws.samples.items():
        flat = arr.reshape(arr.shape[0] * arr.shape[1], -1)
        if arr.ndim == 2:
            names.append(key)
        else:
            names.extend(f"{key}[{j}]" for j in range(flat.shape[1]))
        cols.append(flat)
    return names, cols


def cmd_fit(args) -> int:
    conf = _load_table(args.config)
    mcmc = _only(McmcConfig, conf.get("mcmc", {}), "mcmc")
    if args.threads:
        mcmc = replace(mcmc, threads=args.threads)
    prior = _only(PriorConfig, conf.get("prior", {}), "prior")
    X, Z, p_urban = runner.read_covariates_csv(args.covariates)
    K = len(p_urban)
    icar = scale_icar(icar_structure(read_edge_list(args.adjacency)))
    if icar.K != K:
        raise ValueError(f"adjacency has {icar.K} areas, covariates have {K}")
    eigs = {}
    if args.clusters:
        table = read_sample_csv(args.clusters)
        est = runner.estimate_areas(table, range(K))
        eigs = runner.eigensystems_for(table, est)
    else:
        est = runner.read_estimates_csv(args.estimates, K)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ok = True
    for name in args.model:
        variant = ModelVariant.from_name(name)
        if variant.sampling_dist == "sasw" and not args.clusters:
            raise ValueError("survey-weighted models need --clusters to build eigensystems")
        if variant.kind == "oracle":
            raise ValueError("the oracle model is only available inside simulate")
        data = build_fit_data(est, X, p_urban, Z, icar, eigs)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ConvergenceWarning)
            draws = fit(variant, data, mcmc, seed=args.seed, prior=prior)
        ok &= draws.converged
        summ = summarize_posterior(draws, args.level)
        rows = []
        for k in range(K):
            row = [k, summ["theta"].mean[k], summ["theta"].lower[k], summ["theta"].upper[k]]
            if "sigma2" in summ:
                row += [summ["sigma2"].mean[k], summ["sigma2"].lower[k], summ["sigma2"].upper[k]]
            rows.append(row)
        header = ["area", "theta_mean", "theta_lower", "theta_upper"]
        if "sigma2" in summ:
            header += ["sigma2_mean", "sigma2_lower", "sigma2_upper"]
        runner._write_rows(out / f"summary-{variant.name}.csv", header, rows)
        names, cols = _draw_columns(draws)
        block = np.hstack(cols)[:: args.thin]
        runner._write_rows(out / f"draws-{variant.name}.csv", names, block)
        diag = {
            "model": variant.name,
            "converged": draws.converged,
            "messages": draws.messages,
            "acceptance": draws.acceptance,
            "parameters": draws.diagnostics_table(),
        }
        (out / f"diagnostics-{variant.name}.json").write_text(json.dumps(diag, indent=1) + "\n")
        print(f"{variant.name}: {'converged' if draws.converged else 'NOT converged'}", file=sys.stderr)
        for msg in draws.messages:
            print(f"  {msg}", file=sys.stderr)
    return 0 if ok else 2


def cmd_diagnose(args) -> int:
    table = read_sample_csv(args.input)
    rows = runner.diagnose_samples(table, gamma=args.gamma, sigma2=args.sigma2)
    runner._write_rows(args.out or "/dev/stdout", runner.DIAGNOSE_COLUMNS, rows)
    return 0


def cmd_evaluate(args) -> int:
    tables = runner.evaluate_run(args.run_dir)
    out = args.out or Path(args.run_dir) / "metrics.csv"
    write_metrics_csv(out, tables)
    for (setting, model), t in tables.items():
        s = t.summary()
        print(f"{setting} {model}: coverage {s['coverage']:.3f} interval score {s['avg_interval_score']:.3f} rmse {s['rmse']:.3f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fhvs", description="Variance-smoothing Fay-Herriot small area estimation")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run one simulation setting end to end")
    s.add_argument("--config", help="TOML or JSON run configuration")
    s.add_argument("--seed", type=int)
    s.add_argument("--threads", type=int)
    s.add_argument("--out")
    s.add_argument("--setting")
    s.add_argument("--G", type=int)
    s.add_argument("--replicates", help="comma-separated replicate indices to (re)run")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("estimate", help="design-based estimates from a cluster-summary CSV")
    s.add_argument("input")
    s.add_argument("--out")
    s.set_defaults(func=cmd_estimate)

    s = sub.add_parser("fit", help="fit area-level models")
    src = s.add_mutually_exclusive_group(required=True)
    src.add_argument("--clusters", help="cluster-summary CSV (needed for survey-weighted models)")
    src.add_argument("--estimates", help="per-area estimates CSV")
    s.add_argument("--covariates", required=True)
    s.add_argument("--adjacency", required=True)
    s.add_argument("--model", nargs="+", default=["Simple-struct"])
    s.add_argument("--config", help="TOML/JSON with [mcmc] and [prior] tables")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--threads", type=int)
    s.add_argument("--level", type=float, default=0.90)
    s.add_argument("--thin", type=int, default=1)
    s.add_argument("--out", default="fit")
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("diagnose", help="survey-weighted law diagnostics per area")
    s.add_argument("input")
    s.add_argument("--gamma", type=float, default=0.0)
    s.add_argument("--sigma2", type=float)
    s.add_argument("--out")
    s.set_defaults(func=cmd_diagnose)

    s = sub.add_parser("evaluate", help="metric tables from a run directory")
    s.add_argument("run_dir")
    s.add_argument("--out")
    s.set_defaults(func=cmd_evaluate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (SchemaError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

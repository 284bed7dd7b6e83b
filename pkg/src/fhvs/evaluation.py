"""Replicate-level metrics: empirical design variance, interval scores, ratios, distribution gaps.

Replicate arrays are shaped (G, K) with NaN marking replicates in which an
area had no valid estimate.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, fields

import numpy as np

PERCENTILES = np.arange(1, 100)


def empirical_design_variance(theta_hats) -> float:
    """Mean squared deviation about the replicate mean (denominator |G|)."""
    x = np.asarray(theta_hats, dtype=float)
    x = x[np.isfinite(x)]
    if len(x) < 2:
        raise ValueError(f"need at least two valid replicates, got {len(x)}")
    return float(np.mean((x - x.mean()) ** 2))


def empirical_design_variances(theta_hat) -> tuple[np.ndarray, np.ndarray]:
    """Per-area empirical variances from a (G, K) array; NaN where fewer than two replicates."""
    x = np.asarray(theta_hat, dtype=float)
    counts = np.isfinite(x).sum(axis=0)
    out = np.full(x.shape[1], np.nan)
    for k in np.flatnonzero(counts >= 2):
        out[k] = empirical_design_variance(x[:, k])
    return out, counts


def interval_score(lower, upper, truth, alpha: float = 0.1):
    """Width plus 2/alpha times the distance by which the truth falls outside."""
    lower, upper, truth = (np.asarray(a, dtype=float) for a in (lower, upper, truth))
    if np.any(lower > upper):
        raise ValueError("interval lower bound exceeds upper bound")
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    out = (upper - lower) + 2 / alpha * (np.maximum(0, lower - truth) + np.maximum(0, truth - upper))
    return float(out) if out.ndim == 0 else out


@dataclass
class MetricTable:
    """Per-area metrics averaged over replicates."""

    area: np.ndarray
    rmse: np.ndarray
    coverage: np.ndarray
    avg_width: np.ndarray
    avg_interval_score: np.ndarray
    n_reps: np.ndarray
    theory_to_truth: np.ndarray | None = None
    est_to_truth_pop: np.ndarray | None = None
    est_to_truth_design: np.ndarray | None = None

    def __post_init__(self):
        K = len(self.area)
        for f in ("theory_to_truth", "est_to_truth_pop", "est_to_truth_design"):
            if getattr(self, f) is None:
                setattr(self, f, np.full(K, np.nan))

    def summary(self) -> dict[str, float]:
        out = {}
        for f in fields(self):
            if f.name in ("area", "n_reps"):
                continue
            vals = np.asarray(getattr(self, f.name), dtype=float)
            out[f.name] = float(np.nanmean(vals)) if np.any(np.isfinite(vals)) else math.nan
        out["n_reps"] = float(np.sum(self.n_reps))
        return out

    def rows(self) -> list[dict]:
        cols = {k: np.asarray(v) for k, v in asdict(self).items()}
        return [{k: _scalar(v[i]) for k, v in cols.items()} for i in range(len(self.area))]


def _scalar(x):
    x = x.item() if hasattr(x, "item") else x
    return x


def evaluate_estimates(mean, lower, upper, truth, alpha: float = 0.1, areas=None) -> MetricTable:
    """RMSE, coverage, width and interval score per area over the available replicates."""
    mean, lower, upper = (np.atleast_2d(np.asarray(a, dtype=float)) for a in (mean, lower, upper))
    truth = np.asarray(truth, dtype=float)
    if not mean.shape == lower.shape == upper.shape or mean.shape[1] != len(truth):
        raise ValueError("replicate arrays and truths disagree on the area set")
    ok = np.isfinite(mean) & np.isfinite(lower) & np.isfinite(upper)
    n = ok.sum(axis=0)
    with np.errstate(invalid="ignore"):
        err2 = np.where(ok, (mean - truth) ** 2, np.nan)
        inside = np.where(ok, (lower <= truth) & (truth <= upper), np.nan)
        width = np.where(ok, upper - lower, np.nan)
        score = np.where(ok, interval_score(np.where(ok, lower, 0), np.where(ok, upper, 0), truth, alpha), np.nan)
    avg = lambda a: np.divide(np.nansum(a, axis=0), n, out=np.full(len(truth), np.nan), where=n > 0)  # noqa: E731
    return MetricTable(
        area=np.arange(len(truth)) if areas is None else np.asarray(areas),
        rmse=np.sqrt(avg(err2)),
        coverage=avg(inside),
        avg_width=avg(width),
        avg_interval_score=avg(score),
        n_reps=n,
    )


def _positive(x, name):
    x = np.asarray(x, dtype=float)
    bad = np.isfinite(x) & (x <= 0)
    if np.any(bad):
        raise ValueError(f"{name} must be positive (zero at positions {np.flatnonzero(bad).tolist()})")
    return x


def ratio_metrics(V, sigma2, theory_var=None, sigma2_est=None, v_est=None) -> dict[str, np.ndarray]:
    """Average theoretical-to-truth, estimate-to-truth (sigma2) and estimate-to-truth (design) ratios.

    ``theory_var`` and ``v_est`` are (G, K) with NaN outside each area's
    valid replicates; ``sigma2_est`` is (G, K) posterior means.
    """
    V = _positive(V, "V")
    sigma2 = _positive(sigma2, "sigma2")
    K = len(V)

    def avg(a, denom):
        a = np.asarray(a, dtype=float) / denom
        n = np.isfinite(a).sum(axis=0)
        return np.divide(np.nansum(a, axis=0), n, out=np.full(K, np.nan), where=n > 0)

    out = {}
    if theory_var is not None:
        out["theory_to_truth"] = avg(theory_var, V)
    if sigma2_est is not None:
        out["est_to_truth_pop"] = avg(sigma2_est, sigma2)
    if v_est is not None:
        out["est_to_truth_design"] = avg(v_est, V)
    return out


def design_variance_estimate(variant, data, sigma2_est) -> np.ndarray:
    """v_i(sigma2) per model: raw V-hat for the standard model, V-dagger or V-star otherwise."""
    from .inference import theoretical_variance

    est = data.estimable
    if variant.kind == "standard":
        return np.where(est, data.v_hat, np.nan)
    if variant.kind == "oracle":
        raise ValueError("the oracle model has no design-variance estimate")
    return np.where(est, theoretical_variance(variant, data, np.asarray(sigma2_est, dtype=float)), np.nan)


def squared_w2(q_model, q_empirical) -> float:
    """Mean squared gap between two percentile vectors (no square root taken)."""
    a, b = np.asarray(q_model, dtype=float), np.asarray(q_empirical, dtype=float)
    if a.shape != b.shape:
        raise ValueError("percentile vectors differ in length")
    return float(np.mean((a - b) ** 2))


def empirical_percentiles(draws) -> np.ndarray:
    draws = np.asarray(draws, dtype=float)
    if len(draws) < 99:
        raise ValueError(f"need at least 99 empirical draws, got {len(draws)}")
    return np.percentile(draws, PERCENTILES, method="linear")


def compare_distributions(dists, empirical_draws) -> tuple[float, float]:
    """Average squared W2 and mean difference of fitted laws against an empirical sample.

    ``dists`` holds one law per replicate, each exposing ``ppf`` and ``mean``
    (a property or, as on scipy frozen distributions, a method).
    """
    q_emp = empirical_percentiles(empirical_draws)
    emp_mean = float(np.mean(empirical_draws))
    if len(dists) == 0:
        raise ValueError("no replicate distributions to compare")
    w2 = [squared_w2(d.ppf(PERCENTILES / 100), q_emp) for d in dists]
    md = [(d.mean() if callable(d.mean) else d.mean) - emp_mean for d in dists]
    return float(np.mean(w2)), float(np.mean(md))


METRIC_COLUMNS = (
    "setting",
    "model",
    "area",
    "rmse",
    "coverage",
    "avg_width",
    "avg_interval_score",
    "theory_to_truth",
    "est_to_truth_pop",
    "est_to_truth_design",
    "n_reps",
)


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return "" if not math.isfinite(x) else repr(float(x))
    return str(x)


def write_metrics_csv(path, tables: dict[tuple[str, str], MetricTable]) -> None:
    """One row per (setting, model, area) plus an ``all`` summary row per (setting, model)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(METRIC_COLUMNS)
        for (setting, model), table in tables.items():
            for row in table.rows():
                w.writerow([setting, model] + [_fmt(row[c]) for c in METRIC_COLUMNS[2:]])
            summ = table.summary()
            w.writerow([setting, model, "all"] + [_fmt(summ[c]) for c in METRIC_COLUMNS[3:]])


def read_metrics_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))

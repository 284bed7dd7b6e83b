"""Stratified two-stage cluster design: systematic PPS, negative-binomial cluster samples."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .frame import OutcomeKind, SuperpopParams, SurveyFrame, gen_outcomes
from .tables import ClusterSummary

__all__ = [
    "ClusterSummary",
    "SampleConfig",
    "PpsDraw",
    "pps_sample_clusters",
    "draw_cluster_size",
    "draw_cluster_sample",
    "draw_sample",
    "summarize_sample",
    "read_sample_csv",
    "write_sample_csv",
]


@dataclass(frozen=True)
class SampleConfig:
    """Clusters per stratum and cluster sample-size laws (negative binomial: size, mean)."""

    m_urban: int = 13
    m_rural: int = 20
    urban_size_dist: tuple[float, float] = (8.0, 9.0)
    rural_size_dist: tuple[float, float] = (4.0, 11.0)
    multiplier: int = 1
    m_h: tuple[int, ...] | None = None

    def clusters_for(self, frame: SurveyFrame) -> np.ndarray:
        if self.m_h is not None:
            m = np.asarray(self.m_h, dtype=np.int64)
        else:
            m = np.array([self.m_urban if urb else self.m_rural for _, urb in frame.geography.strata])
        m = m * self.multiplier
        if np.any(m < 2):
            raise ValueError("need at least two sampled clusters per stratum")
        for s, mu in (self.urban_size_dist, self.rural_size_dist):
            if s <= 0 or mu <= 0:
                raise ValueError("negative binomial size and mean must be positive")
        return m


@dataclass(frozen=True)
class PpsDraw:
    """Selected cluster rows per stratum with first-stage inclusion probabilities."""

    rows: np.ndarray
    p1: np.ndarray
    certainty: np.ndarray


def _systematic(sizes: np.ndarray, m: int, rng) -> np.ndarray:
    """Systematic PPS on a random ordering; returns positions into ``sizes``."""
    order = rng.permutation(len(sizes))
    cum = np.cumsum(sizes[order], dtype=float)
    step = cum[-1] / m
    points = step * (rng.uniform() + np.arange(m))
    pos = np.searchsorted(cum, points, side="right")
    return order[np.minimum(pos, len(sizes) - 1)]


def _stratum_pps(L: np.ndarray, m: int, rng):
    """Certainty units are peeled off iteratively before the systematic pass."""
    M = len(L)
    if m > M:
        raise ValueError(f"cannot draw {m} clusters from a stratum of {M}")
    p1 = np.zeros(M)
    certain = np.zeros(M, dtype=bool)
    remaining = m
    while True:
        pool = ~certain
        prob = remaining * L[pool] / L[pool].sum()
        over = prob >= 1
        if not np.any(over):
            p1[pool] = prob
            break
        certain[np.flatnonzero(pool)[over]] = True
        remaining = m - int(certain.sum())
        if remaining == 0:
            break
    p1[certain] = 1.0
    chosen = list(np.flatnonzero(certain))
    if remaining:
        pool_idx = np.flatnonzero(~certain)
        chosen.extend(pool_idx[_systematic(L[pool_idx].astype(float), remaining, rng)])
    chosen = np.array(sorted(chosen), dtype=np.int64)
    return chosen, p1[chosen], certain[chosen]


def pps_sample_clusters(frame: SurveyFrame, config: SampleConfig, seed=None) -> PpsDraw:
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    m = config.clusters_for(frame)
    if np.any(frame.L <= 0):
        raise ValueError("listed sizes must be positive")
    rows, p1, cert = [], [], []
    for h in range(frame.geography.H):
        idx = frame.stratum_rows(h)
        if m[h] > len(idx):
            raise ValueError(f"stratum {h}: m_h={m[h]} exceeds M_h={len(idx)}")
        sel, p, c = _stratum_pps(frame.L[idx], int(m[h]), rng)
        rows.append(idx[sel])
        p1.append(p)
        cert.append(c)
    return PpsDraw(np.concatenate(rows), np.concatenate(p1), np.concatenate(cert))


def draw_cluster_size(size: float, mean: float, rng, upper: int | None = None, truncate: bool = True) -> int:
    """Negative binomial (size, mean) draw; zeros are redrawn and values clamped to ``upper``."""
    p = size / (size + mean)
    while True:
        n = int(rng.negative_binomial(size, p))
        if n >= 1 or not truncate:
            break
    if upper is not None:
        n = min(n, upper)
    return n


def draw_cluster_sample(
    frame: SurveyFrame,
    params: SuperpopParams,
    kind: OutcomeKind,
    row: int,
    p1: float,
    config: SampleConfig,
    seed=None,
):
    """Second stage for one selected cluster: returns (ybar, n_c, wstar)."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    urban = bool(frame.urban[row])
    size, mean = config.urban_size_dist if urban else config.rural_size_dist
    N = int(frame.N[row])
    n = draw_cluster_size(size, mean, rng, upper=N)
    y = gen_outcomes(frame, params, kind, row, n, rng)
    # w_c = N_c / (p1 n_c), so the scaled weight w_c n_c is N_c / p1
    wstar = N / p1
    return float(math.fsum(y) / n), n, wstar


def draw_sample(
    frame: SurveyFrame,
    params: SuperpopParams,
    kind: OutcomeKind,
    config: SampleConfig,
    seed=None,
) -> ClusterSummary:
    """One full two-stage sample from the frame."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    draw = pps_sample_clusters(frame, config, rng)
    out = [draw_cluster_sample(frame, params, kind, r, p, config, rng) for r, p in zip(draw.rows, draw.p1)]
    ybar, n, wstar = (np.array(col) for col in zip(*out))
    return ClusterSummary(
        cluster_id=frame.cluster_id[draw.rows],
        stratum=frame.stratum[draw.rows],
        area=frame.area[draw.rows],
        ybar=ybar,
        n=n,
        wstar=wstar,
        urban=frame.urban[draw.rows],
    )


@dataclass(frozen=True)
class AreaCounts:
    area: int
    m_dot: int
    strata_count: int
    m_hi: dict

    @property
    def estimable(self) -> bool:
        return self.m_dot > 1


def summarize_sample(table: ClusterSummary, areas) -> list[AreaCounts]:
    """Per-area cluster counts; areas with at most one sampled cluster are not estimable."""
    out = []
    for a in areas:
        sel = table.area == a
        strata, counts = np.unique(table.stratum[sel], return_counts=True)
        out.append(AreaCounts(int(a), int(sel.sum()), len(strata), dict(zip(strata.tolist(), counts.tolist()))))
    return out


SAMPLE_COLUMNS = ("cluster_id", "stratum", "area", "ybar", "n", "wstar")


class SchemaError(ValueError):
    pass


def write_sample_csv(table: ClusterSummary, path, include_urban: bool = True) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SAMPLE_COLUMNS + (("urban",) if include_urban else ()))
        for i in range(len(table)):
            row = [
                int(table.cluster_id[i]),
                int(table.stratum[i]),
                int(table.area[i]),
                repr(float(table.ybar[i])),
                int(table.n[i]),
                repr(float(table.wstar[i])),
            ]
            if include_urban:
                row.append(int(table.urban[i]))
            w.writerow(row)


def read_sample_csv(path) -> ClusterSummary:
    """Parse the cluster-summary schema; ``urban`` (0/1) is an optional extra column."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise SchemaError(f"{path}: empty file, expected header {','.join(SAMPLE_COLUMNS)}")
        missing = [c for c in SAMPLE_COLUMNS if c not in reader.fieldnames]
        if missing:
            raise SchemaError(f"{path}: missing columns {missing}")
        cols = {c: [] for c in SAMPLE_COLUMNS + ("urban",)}
        has_urban = "urban" in reader.fieldnames
        for lineno, rec in enumerate(reader, start=2):
            try:
                cid, h, a = int(rec["cluster_id"]), int(rec["stratum"]), int(rec["area"])
                ybar, n, wstar = float(rec["ybar"]), int(rec["n"]), float(rec["wstar"])
                urb = bool(int(rec["urban"])) if has_urban and rec["urban"] not in ("", None) else False
            except (TypeError, ValueError) as exc:
                raise SchemaError(f"{path}:{lineno}: {exc}") from None
            if not (math.isfinite(ybar) and math.isfinite(wstar)):
                raise SchemaError(f"{path}:{lineno}: non-finite ybar or wstar")
            if n < 1 or wstar <= 0:
                raise SchemaError(f"{path}:{lineno}: need n >= 1 and wstar > 0")
            for key, val in zip(cols, (cid, h, a, ybar, n, wstar, urb)):
                cols[key].append(val)
    if not cols["cluster_id"]:
        raise SchemaError(f"{path}: no data rows")
    return ClusterSummary(**{k: np.array(v) for k, v in cols.items()})

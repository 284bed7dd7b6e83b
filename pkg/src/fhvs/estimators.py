"""Design-based estimators: Hajek mean and Taylor-linearized variance.

All variance functions accept an :class:`~fhvs.tables.AreaSample`, whose
arrays cover every sampled cluster of the strata touching the area, with
out-of-area clusters carrying zero weight.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .tables import AreaSample, ClusterSummary


class DesignError(ValueError):
    """Raised when a design-based estimator is undefined for the given sample."""


def hajek_mean(ybar, wstar) -> float:
    ybar = np.asarray(ybar, dtype=float)
    wstar = np.asarray(wstar, dtype=float)
    if ybar.size == 0:
        raise DesignError("Hajek mean of an empty cluster set")
    return math.fsum(wstar * ybar) / math.fsum(wstar)


def _check_strata(s: AreaSample) -> None:
    m_h = s.m_h
    bad = (m_h == 1) & (s.m_hi > 0)
    if np.any(bad):
        raise DesignError(f"stratum with a single sampled cluster in area {s.area}: m_h/(m_h-1) undefined")


def _linearized(s: AreaSample) -> tuple[np.ndarray, float]:
    total = math.fsum(s.wstar)
    theta = math.fsum(s.wstar * s.ybar) / total
    return s.wstar * (s.ybar - theta), total


def taylor_variance(s: AreaSample) -> float:
    """Taylor-linearized variance of the Hajek mean (stratified, with-replacement clusters)."""
    if s.m_dot == 0:
        raise DesignError("no sampled clusters in area")
    if s.m_dot == 1:
        return 0.0
    _check_strata(s)
    z, total = _linearized(s)
    acc = []
    for h, m_h in enumerate(s.m_h):
        zh = z[s.stratum == h]
        if not np.any(zh):
            continue
        dev = zh - math.fsum(zh) / m_h
        acc.append(m_h / (m_h - 1) * math.fsum(dev * dev))
    return math.fsum(acc) / total**2


def domain_decomposition(s: AreaSample) -> tuple[float, float]:
    """Split the Taylor variance into in-area and out-of-area cluster contributions."""
    if s.m_dot == 0:
        raise DesignError("no sampled clusters in area")
    if s.m_dot == 1:
        return 0.0, 0.0
    _check_strata(s)
    z, total = _linearized(s)
    inside_acc, outside_acc = [], []
    for h, m_h in enumerate(s.m_h):
        sel = (s.stratum == h) & s.inside
        m_hi = int(sel.sum())
        if m_hi == 0:
            continue
        zsum = math.fsum(z[sel])
        dev = z[sel] - zsum / m_h
        inside_acc.append(m_h / (m_h - 1) * math.fsum(dev * dev))
        outside_acc.append((m_h - m_hi) / ((m_h - 1) * m_h) * zsum**2)
    return math.fsum(inside_acc) / total**2, math.fsum(outside_acc) / total**2


def simple_variance(s: AreaSample) -> float:
    """Variance estimator under equal weights, equal sizes and a planned domain."""
    y = s.ybar[s.inside]
    h = s.stratum[s.inside]
    m = len(y)
    strata = np.unique(h)
    if m == len(strata):
        raise DesignError("simple variance needs more clusters than strata")
    acc = []
    for k in strata:
        yh = y[h == k]
        dev = yh - math.fsum(yh) / len(yh)
        acc.append(math.fsum(dev * dev))
    return math.fsum(acc) / (m * (m - len(strata)))


def quadratic_form_matrix(s: AreaSample) -> np.ndarray:
    """M = T' B T with T = W (I - 1 w'/1'w) and B block-diagonal scaled centering."""
    w = s.wstar
    m = len(w)
    T = np.diag(w) - np.outer(w, w) / w.sum()
    B = np.zeros((m, m))
    for h, m_h in enumerate(s.m_h):
        idx = np.flatnonzero(s.stratum == h)
        if m_h < 2:
            if np.any(s.inside[idx]) and s.m_dot > 1:
                raise DesignError("stratum with a single sampled cluster")
            continue
        block = np.eye(m_h) - 1.0 / m_h
        B[np.ix_(idx, idx)] = m_h / (m_h - 1) * block
    return T.T @ B @ T


def matrix_variance(s: AreaSample) -> float:
    if s.m_dot == 0:
        raise DesignError("no sampled clusters in area")
    if s.m_dot == 1:
        return 0.0
    _check_strata(s)
    M = quadratic_form_matrix(s)
    return float(s.ybar @ M @ s.ybar) / s.wstar.sum() ** 2


@dataclass(frozen=True)
class DesignEstimate:
    area: int
    theta_hat: float
    v_hat: float
    m_dot_i: int
    strata_count: int
    total_n: float

    @property
    def estimable(self) -> bool:
        return self.m_dot_i > 1


def estimate_area(table: ClusterSummary, area: int) -> DesignEstimate:
    s = table.area_view(area)
    m = s.m_dot
    if m == 0:
        return DesignEstimate(int(area), math.nan, math.nan, 0, 0, 0.0)
    theta = hajek_mean(s.ybar[s.inside], s.wstar[s.inside])
    v = taylor_variance(s)
    return DesignEstimate(int(area), theta, v, m, s.strata_count, s.total_n)


def estimate_areas(table: ClusterSummary, areas=None) -> list[DesignEstimate]:
    """Design estimates for ``areas`` (default: every area present in the table)."""
    if areas is None:
        areas = table.areas()
    return [estimate_area(table, int(a)) for a in areas]

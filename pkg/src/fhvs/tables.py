"""Columnar cluster-level sample table and its per-area views."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class ClusterSummary:
    """One row per sampled cluster; the sufficient statistic for every estimator.

    ``wstar`` is the scaled weight ``w_c * n_c``. ``urban`` is optional
    metadata used only by the survey-weighted sampling distribution.
    """

    cluster_id: np.ndarray
    stratum: np.ndarray
    area: np.ndarray
    ybar: np.ndarray
    n: np.ndarray
    wstar: np.ndarray
    urban: np.ndarray = None  # type: ignore[assignment]

    def __post_init__(self):
        size = len(self.cluster_id)
        if self.urban is None:
            object.__setattr__(self, "urban", np.zeros(size, dtype=bool))
        cols = {
            "cluster_id": np.asarray(self.cluster_id, dtype=np.int64),
            "stratum": np.asarray(self.stratum, dtype=np.int64),
            "area": np.asarray(self.area, dtype=np.int64),
            "ybar": np.asarray(self.ybar, dtype=float),
            "n": np.asarray(self.n, dtype=np.int64),
            "wstar": np.asarray(self.wstar, dtype=float),
            "urban": np.asarray(self.urban, dtype=bool),
        }
        for name, col in cols.items():
            if col.shape != (size,):
                raise ValueError(f"column {name!r} has shape {col.shape}, expected ({size},)")
            object.__setattr__(self, name, col)
        if size and (np.any(self.n < 1) or np.any(self.wstar <= 0)):
            raise ValueError("every sampled cluster needs n >= 1 and wstar > 0")
        if not (np.all(np.isfinite(self.ybar)) and np.all(np.isfinite(self.wstar))):
            raise ValueError("non-finite ybar or wstar")

    def __len__(self) -> int:
        return len(self.cluster_id)

    def areas(self) -> np.ndarray:
        return np.unique(self.area)

    def area_view(self, area: int) -> "AreaSample":
        """Clusters of every stratum that intersects ``area``; out-of-area rows get weight 0."""
        inside_rows = self.area == area
        strata = np.unique(self.stratum[inside_rows])
        rows = np.isin(self.stratum, strata)
        # stratum-sorted so each stratum is a contiguous block
        idx = np.flatnonzero(rows)
        idx = idx[np.argsort(self.stratum[idx], kind="stable")]
        inside = self.area[idx] == area
        local = np.searchsorted(strata, self.stratum[idx])
        return AreaSample(
            area=int(area),
            ybar=self.ybar[idx],
            n=self.n[idx].astype(float),
            wstar=np.where(inside, self.wstar[idx], 0.0),
            stratum=local,
            inside=inside,
            urban=self.urban[idx],
        )


@dataclass(frozen=True)
class AreaSample:
    """Sampled clusters of the strata touching one area, ordered by stratum.

    ``stratum`` holds local codes 0..|H_i|-1. ``wstar`` is zero for clusters
    outside the area, so the same arrays serve planned and unplanned domains.
    """

    area: int
    ybar: np.ndarray
    n: np.ndarray
    wstar: np.ndarray
    stratum: np.ndarray
    inside: np.ndarray
    urban: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.urban is None:
            object.__setattr__(self, "urban", np.zeros(len(self.ybar), dtype=bool))

    @classmethod
    def planned(cls, ybar, wstar, n=None, stratum=None, urban=None, area: int = 0) -> "AreaSample":
        """Convenience constructor for a domain containing every listed cluster."""
        ybar = np.asarray(ybar, dtype=float)
        m = len(ybar)
        n = np.ones(m) if n is None else np.asarray(n, dtype=float)
        stratum = np.zeros(m, dtype=np.int64) if stratum is None else np.asarray(stratum)
        order = np.argsort(stratum, kind="stable")
        _, local = np.unique(stratum[order], return_inverse=True)
        return cls(
            area=area,
            ybar=ybar[order],
            n=n[order],
            wstar=np.asarray(wstar, dtype=float)[order],
            stratum=local,
            inside=np.ones(m, dtype=bool),
            urban=None if urban is None else np.asarray(urban, dtype=bool)[order],
        )

    @property
    def m_h(self) -> np.ndarray:
        """Sampled clusters per stratum, counting clusters outside the area."""
        return np.bincount(self.stratum)

    @property
    def m_hi(self) -> np.ndarray:
        """Sampled clusters per stratum inside the area."""
        return np.bincount(self.stratum, weights=self.inside, minlength=self.n_strata).astype(int)

    @property
    def n_strata(self) -> int:
        return int(self.stratum.max()) + 1 if len(self.stratum) else 0

    @property
    def m_dot(self) -> int:
        return int(self.inside.sum())

    @property
    def strata_count(self) -> int:
        """Number of strata with at least one in-area sampled cluster."""
        return int(np.count_nonzero(self.m_hi))

    @property
    def total_n(self) -> float:
        return float(self.n[self.inside].sum())

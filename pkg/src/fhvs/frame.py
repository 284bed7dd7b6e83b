"""Synthetic sampling universe: geography, superpopulation, cluster frame, outcomes."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .seeding import derive_rng
from .spatial import ScaledIcar, draw_bym2, icar_structure, scale_icar

SETTINGS = ("1", "1a", "2", "3", "4", "reenum")

BETA = (-1.0, -0.15, -0.1, 0.25)
ETA = (0.5, -0.15, -0.1, 0.25)
SD_B, PHI_B = 0.32, 0.75
SD_E, PHI_E = 0.22, 0.75


# --------------------------------------------------------------------------- geography


def _grid_shape(K: int) -> tuple[int, int]:
    rows = int(math.isqrt(K))
    while K % rows:
        rows -= 1
    return rows, K // rows


@dataclass(frozen=True)
class Geography:
    """Areas on a lattice, nested in admin1 groups, each split into urban/rural strata."""

    neighbors: tuple[tuple[int, ...], ...]
    admin1_of_area: np.ndarray
    urban_only: np.ndarray  # per admin1
    shape: tuple[int, int]

    @property
    def K(self) -> int:
        return len(self.neighbors)

    @property
    def n_admin1(self) -> int:
        return len(self.urban_only)

    @property
    def strata(self) -> list[tuple[int, bool]]:
        """(admin1, is_urban) per stratum; index in this list is the stratum id."""
        out = []
        for a in range(self.n_admin1):
            out.append((a, True))
            if not self.urban_only[a]:
                out.append((a, False))
        return out

    @property
    def H(self) -> int:
        return len(self.strata)

    def stratum_id(self, admin1: int, urban: bool) -> int:
        return self.strata.index((admin1, bool(urban)))

    def icar(self) -> ScaledIcar:
        return scale_icar(icar_structure([list(nb) for nb in self.neighbors]))


def build_geography(K: int, A: int, seed: int = 0, urban_only: int | None = None) -> Geography:
    """Connected K-area lattice split into A contiguous admin1 groups.

    ``urban_only`` admin1 areas (default ``min(2, A // 5)``) get no rural stratum.
    """
    if K < 2:
        raise ValueError("need at least two areas for an ICAR-scaled geography")
    if A < 1 or K < A:
        raise ValueError(f"need K >= A >= 1, got K={K}, A={A}")
    rows, cols = _grid_shape(K)
    nb: list[list[int]] = [[] for _ in range(K)]
    for r in range(rows):
        for c in range(cols):
            i = r * cols + c
            if c + 1 < cols:
                nb[i].append(i + 1)
                nb[i + 1].append(i)
            if r + 1 < rows:
                nb[i].append(i + cols)
                nb[i + cols].append(i)
    # snake order keeps consecutive areas adjacent, so equal chunks are contiguous
    snake = []
    for r in range(rows):
        row = list(range(r * cols, (r + 1) * cols))
        snake.extend(row if r % 2 == 0 else row[::-1])
    admin1 = np.empty(K, dtype=np.int64)
    for a, chunk in enumerate(np.array_split(np.array(snake), A)):
        admin1[chunk] = a
    if urban_only is None:
        urban_only = min(2, A // 5)
    if not 0 <= urban_only < A or (urban_only and A == 1):
        raise ValueError("urban_only must leave at least one admin1 with a rural stratum")
    rng = derive_rng(seed, "geography")
    flags = np.zeros(A, dtype=bool)
    flags[rng.choice(A, size=urban_only, replace=False)] = True
    return Geography(tuple(tuple(sorted(n)) for n in nb), admin1, flags, (rows, cols))


# --------------------------------------------------------------------------- superpopulation


@dataclass(frozen=True)
class OutcomeKind:
    kind: str = "normal"
    df: float = 5.0
    rho: float = 0.0

    def __post_init__(self):
        if self.kind not in ("normal", "student_t", "intra_cluster_normal"):
            raise ValueError(f"unknown outcome kind {self.kind!r}")
        if self.kind == "student_t" and self.df <= 2:
            raise ValueError("student_t needs df > 2 for a finite variance")
        if not 0 <= self.rho < 1:
            raise ValueError("rho must lie in [0, 1)")


def outcome_kind_for(setting: str) -> OutcomeKind:
    if setting == "3":
        return OutcomeKind("student_t", df=5.0)
    if setting == "4":
        return OutcomeKind("intra_cluster_normal", rho=0.25)
    return OutcomeKind("normal")


@dataclass(frozen=True)
class SuperpopParams:
    """Superpopulation means and variances per (area, rural/urban); column 1 is urban."""

    setting: str
    beta: np.ndarray
    eta: np.ndarray
    X: np.ndarray
    Z: np.ndarray
    gamma: np.ndarray
    kappa: np.ndarray
    b: np.ndarray
    e: np.ndarray
    u_b: np.ndarray
    u_e: np.ndarray
    theta_hi: np.ndarray
    sigma2_hi: np.ndarray
    tau_b: float = 1 / SD_B**2
    phi_b: float = PHI_B
    tau_e: float = 1 / SD_E**2
    phi_e: float = PHI_E

    @property
    def K(self) -> int:
        return len(self.b)


def gen_superpopulation(geog: Geography, setting: str, seed: int = 0, icar: ScaledIcar | None = None) -> SuperpopParams:
    if setting not in SETTINGS:
        raise ValueError(f"unknown setting {setting!r}; expected one of {SETTINGS}")
    K = geog.K
    rng = derive_rng(seed, "superpopulation")
    X = np.column_stack([np.ones(K), rng.standard_normal((K, 3))])
    Z = np.column_stack([np.ones(K), rng.standard_normal((K, 3))])
    icar = geog.icar() if icar is None else icar
    b, u_b, _ = draw_bym2(icar, 1 / SD_B**2, PHI_B, rng)
    e, u_e, _ = draw_bym2(icar, 1 / SD_E**2, PHI_E, rng)
    if setting == "2":
        gamma = rng.normal(1.0, 1.0, K)
        kappa = rng.normal(math.log(1.5), 0.25, K)
    else:
        gamma = np.ones(K)
        kappa = np.zeros(K)
    beta, eta = np.array(BETA), np.array(ETA)
    mean0 = X @ beta + b
    logv0 = Z @ eta + e
    theta_hi = np.column_stack([mean0, mean0 + gamma])
    sigma2_hi = np.exp(np.column_stack([logv0, logv0 + kappa]))
    return SuperpopParams(setting, beta, eta, X, Z, gamma, kappa, b, e, u_b, u_e, theta_hi, sigma2_hi)


# --------------------------------------------------------------------------- frame


@dataclass(frozen=True)
class FrameConfig:
    """Population and cluster-count targets for the synthetic frame.

    Area populations and urban shares are drawn from the seed unless given.
    ``cluster_size`` sets M_h = max(2, round(stratum population / cluster_size)).
    """

    mean_area_population: float = 20000.0
    population_log_sd: float = 0.6
    urban_share_beta: tuple[float, float] = (1.5, 4.0)
    cluster_size: float = 80.0
    area_population: tuple[float, ...] | None = None
    urban_share: tuple[float, ...] | None = None
    clusters_per_stratum: tuple[int, ...] | None = None
    reenumerate: bool = False
    listed_mean: float = 0.85
    listed_sd: float = 0.2


@dataclass(frozen=True)
class SurveyFrame:
    """One row per cluster, plus per-stratum totals."""

    geography: Geography
    cluster_id: np.ndarray
    stratum: np.ndarray
    area: np.ndarray
    N: np.ndarray
    L: np.ndarray
    urban: np.ndarray
    stratum_population: np.ndarray
    pop_hi: np.ndarray = field(repr=False)  # K x 2 (rural, urban) individuals

    @property
    def M_h(self) -> np.ndarray:
        return np.bincount(self.stratum, minlength=self.geography.H)

    @property
    def n_clusters(self) -> int:
        return len(self.cluster_id)

    def stratum_rows(self, h: int) -> np.ndarray:
        return np.flatnonzero(self.stratum == h)

    def urban_share(self) -> np.ndarray:
        tot = self.pop_hi.sum(axis=1)
        return np.divide(self.pop_hi[:, 1], tot, out=np.zeros(len(tot)), where=tot > 0)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["cluster_id", "stratum", "area", "N", "L", "urban"])
            for row in zip(self.cluster_id, self.stratum, self.area, self.N, self.L, self.urban.astype(int)):
                w.writerow([int(x) for x in row])


def _allocate(total: int, shares: np.ndarray, rng) -> np.ndarray:
    """Integer allocation with expectation total * shares (floor plus systematic remainder)."""
    exact = total * shares / shares.sum()
    base = np.floor(exact).astype(np.int64)
    rem = exact - base
    left = total - base.sum()
    if left:
        cum = np.cumsum(rem)
        picks = rng.uniform() + np.arange(left)
        idx = np.minimum(np.searchsorted(cum, picks, side="right"), len(shares) - 1)
        base += np.bincount(idx, minlength=len(shares))
    return base


def _even_split(total: int, parts: int) -> np.ndarray:
    out = np.full(parts, total // parts, dtype=np.int64)
    out[: total % parts] += 1
    return out


def build_frame(geog: Geography, config: FrameConfig = FrameConfig(), seed: int = 0) -> SurveyFrame:
    rng = derive_rng(seed, "frame")
    K = geog.K
    if config.area_population is None:
        pop = rng.lognormal(math.log(config.mean_area_population), config.population_log_sd, K)
    else:
        pop = np.asarray(config.area_population, dtype=float)
    if config.urban_share is None:
        share = rng.beta(*config.urban_share_beta, K)
    else:
        share = np.asarray(config.urban_share, dtype=float)
    if np.any(pop <= 0) or pop.shape != (K,):
        raise ValueError("area populations must be positive, one per area")
    share = np.where(geog.urban_only[geog.admin1_of_area], 1.0, share)
    pop_int = np.round(pop).astype(np.int64)
    urban_pop = np.round(pop_int * share).astype(np.int64)
    pop_hi = np.column_stack([pop_int - urban_pop, urban_pop])

    cols = {k: [] for k in ("stratum", "area", "N", "urban")}
    strata_pop = []
    for h, (a1, is_urban) in enumerate(geog.strata):
        areas = np.flatnonzero(geog.admin1_of_area == a1)
        p = pop_hi[areas, int(is_urban)].astype(float)
        total_pop = int(p.sum())
        strata_pop.append(total_pop)
        if config.clusters_per_stratum is not None:
            M = int(config.clusters_per_stratum[h])
        else:
            M = max(2, int(round(total_pop / config.cluster_size)))
        if M < 2:
            raise ValueError(f"stratum {h} has M_h={M} < 2")
        if total_pop < M:
            raise ValueError(f"stratum {h} has fewer individuals than clusters")
        counts = _allocate(M, p, rng)
        # every populated stratum-area keeps at least one cluster
        for j in np.flatnonzero((counts == 0) & (p > 0)):
            donor = np.argmax(counts)
            counts[donor] -= 1
            counts[j] += 1
        for area, cnt, pp in zip(areas, counts, p.astype(np.int64)):
            if cnt == 0:
                continue
            sizes = _even_split(int(pp), int(cnt))
            if np.any(sizes < 1):
                raise ValueError(f"area {area} in stratum {h} has more clusters than people")
            cols["N"].extend(sizes)
            cols["stratum"].extend([h] * cnt)
            cols["area"].extend([area] * cnt)
            cols["urban"].extend([is_urban] * cnt)
    N = np.array(cols["N"], dtype=np.int64)
    if config.reenumerate:
        L = np.round(rng.normal(config.listed_mean * N, config.listed_sd * N))
        L = np.maximum(L, 1).astype(np.int64)
    else:
        L = N.copy()
    return SurveyFrame(
        geography=geog,
        cluster_id=np.arange(len(N)),
        stratum=np.array(cols["stratum"], dtype=np.int64),
        area=np.array(cols["area"], dtype=np.int64),
        N=N,
        L=L,
        urban=np.array(cols["urban"], dtype=bool),
        stratum_population=np.array(strata_pop, dtype=np.int64),
        pop_hi=pop_hi,
    )


# --------------------------------------------------------------------------- targets and outcomes


def area_means(frame: SurveyFrame, params: SuperpopParams) -> np.ndarray:
    """Population-weighted superpopulation mean per area (the evaluation target)."""
    w = frame.pop_hi.astype(float)
    tot = w.sum(axis=1)
    return (w * params.theta_hi).sum(axis=1) / np.where(tot > 0, tot, 1.0)


def area_variances(frame: SurveyFrame, params: SuperpopParams) -> np.ndarray:
    """Population-weighted within-stratum variance per area; exp(Z'eta + e) when kappa = 0."""
    w = frame.pop_hi.astype(float)
    tot = w.sum(axis=1)
    return (w * params.sigma2_hi).sum(axis=1) / np.where(tot > 0, tot, 1.0)


def gen_outcomes(frame: SurveyFrame, params: SuperpopParams, kind: OutcomeKind, cluster_id: int, n_draws: int, seed=None):
    """Individual outcomes for one cluster with mean theta_hi and variance sigma2_hi."""
    if n_draws < 1:
        raise ValueError("n_draws must be >= 1")
    if not 0 <= cluster_id < frame.n_clusters:
        raise IndexError(f"no cluster {cluster_id}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    area = frame.area[cluster_id]
    col = int(frame.urban[cluster_id])
    mu = params.theta_hi[area, col]
    sd = math.sqrt(params.sigma2_hi[area, col])
    if kind.kind == "normal":
        z = rng.standard_normal(n_draws)
    elif kind.kind == "student_t":
        z = rng.standard_t(kind.df, n_draws) * math.sqrt((kind.df - 2) / kind.df)
    else:
        shared = rng.standard_normal()
        z = math.sqrt(kind.rho) * shared + math.sqrt(1 - kind.rho) * rng.standard_normal(n_draws)
    return mu + sd * z

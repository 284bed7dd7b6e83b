"""ICAR structure, BYM2 scaling and densities, PC and Beta hyperpriors."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph


class GraphError(ValueError):
    pass


def adjacency_matrix(neighbors) -> np.ndarray:
    """Dense 0/1 adjacency from neighbor lists; checks symmetry and irreflexivity."""
    K = len(neighbors)
    A = np.zeros((K, K), dtype=np.int8)
    for i, nb in enumerate(neighbors):
        for j in nb:
            if j == i:
                raise GraphError(f"self-loop at node {i}")
            A[i, j] = 1
    if not np.array_equal(A, A.T):
        raise GraphError("adjacency is not symmetric")
    return A


def is_connected(A: np.ndarray) -> bool:
    n, _ = csgraph.connected_components(sparse.csr_matrix(A), directed=False)
    return n == 1


def icar_structure(neighbors) -> np.ndarray:
    """Graph Laplacian: degree on the diagonal, -1 for each neighbor pair."""
    A = adjacency_matrix(neighbors) if not isinstance(neighbors, np.ndarray) else np.asarray(neighbors)
    K = A.shape[0]
    if K < 2:
        raise GraphError("ICAR needs at least two areas")
    if not is_connected(A):
        raise GraphError("adjacency graph is disconnected")
    return np.diag(A.sum(axis=1)).astype(float) - A


@dataclass(frozen=True)
class ScaledIcar:
    """Scaled ICAR with its spectral decomposition.

    ``eigvecs[:, k]`` pairs with ``cov_eigvals[k]``, the eigenvalues of the
    constrained generalized inverse; the constant direction has value 0 and
    is stored last.
    """

    structure: np.ndarray
    scale: float
    marginal_variances: np.ndarray
    eigvecs: np.ndarray
    cov_eigvals: np.ndarray

    @property
    def K(self) -> int:
        return self.structure.shape[0]

    def bym2_variances(self, tau: float, phi: float) -> np.ndarray:
        """Eigenvalues (same basis) of Cov(b) = ((1-phi) I + phi Q*^-) / tau."""
        return ((1.0 - phi) + phi * self.cov_eigvals) / tau

    def bym2_covariance(self, tau: float, phi: float) -> np.ndarray:
        E = self.eigvecs
        return (E * self.bym2_variances(tau, phi)) @ E.T

    def bym2_precision(self, tau: float, phi: float) -> np.ndarray:
        if phi >= 1:
            raise ValueError("BYM2 precision is singular at phi = 1")
        E = self.eigvecs
        return (E / self.bym2_variances(tau, phi)) @ E.T


def _constrained_ginv(Q: np.ndarray):
    K = Q.shape[0]
    evals, evecs = np.linalg.eigh(Q)
    # constant null vector goes last
    order = np.argsort(evals)[::-1]
    evals, evecs = evals[order], evecs[:, order]
    null = np.ones(K) / math.sqrt(K)
    evecs[:, -1] = null
    tol = 1e-9 * evals[0]
    if np.count_nonzero(evals[:-1] <= tol):
        raise GraphError("structure matrix has more than one null direction")
    inv = np.zeros(K)
    inv[:-1] = 1.0 / evals[:-1]
    return evecs, inv


def scale_icar(structure: np.ndarray) -> ScaledIcar:
    """Scale so the geometric mean of constrained marginal variances is 1."""
    Q = np.asarray(structure, dtype=float)
    evecs, inv = _constrained_ginv(Q)
    marg = (evecs**2) @ inv
    scale = float(np.exp(np.mean(np.log(marg))))
    return ScaledIcar(
        structure=Q * scale,
        scale=scale,
        marginal_variances=marg / scale,
        eigvecs=evecs,
        cov_eigvals=inv / scale,
    )


def bym2_logdensity(b, tau: float, phi: float, icar: ScaledIcar, constraint_tol: float = 1e-8) -> float:
    """Log density of the combined BYM2 effect b = (sqrt(1-phi) v + sqrt(phi) u) / sqrt(tau).

    At phi = 1 the law is intrinsic: the constant direction is dropped and
    ``b`` must sum to zero.
    """
    if not 0.0 <= phi <= 1.0:
        raise ValueError("phi must lie in [0, 1]")
    if tau <= 0:
        raise ValueError("tau must be positive")
    b = np.asarray(b, dtype=float)
    coef = icar.eigvecs.T @ b
    var = icar.bym2_variances(tau, phi)
    keep = var > 0
    if not np.all(keep) and abs(coef[~keep]).max() > constraint_tol * max(1.0, np.abs(b).max()) * math.sqrt(icar.K):
        return -math.inf
    c, v = coef[keep], var[keep]
    return float(-0.5 * np.sum(np.log(2 * math.pi * v) + c * c / v))


def draw_bym2(icar: ScaledIcar, tau: float, phi: float, rng, size=None):
    """Draw (b, u, v): u scaled-ICAR with exact sum-to-zero, v iid N(0, 1)."""
    shape = () if size is None else (size,)
    z = rng.standard_normal(shape + (icar.K,))
    u = (z * np.sqrt(icar.cov_eigvals)) @ icar.eigvecs.T
    u = u - u.mean(axis=-1, keepdims=True)
    v = rng.standard_normal(shape + (icar.K,))
    b = (math.sqrt(1 - phi) * v + math.sqrt(phi) * u) / math.sqrt(tau)
    return b, u, v


def split_bym2(b, tau: float, phi: float, icar: ScaledIcar, rng):
    """Draw (u, v) from their conditional law given the combined effect b."""
    coef = icar.eigvecs.T @ np.asarray(b, dtype=float)
    lam = icar.cov_eigvals
    a2 = (1 - phi) / tau
    c = math.sqrt(phi / tau)
    tot = a2 + c * c * lam
    mean = c * lam * coef / tot
    var = lam * a2 / tot
    uk = mean + np.sqrt(var) * rng.standard_normal(icar.K)
    u = icar.eigvecs @ uk
    u -= u.mean()
    v = (np.asarray(b) - c * u) / math.sqrt(a2) if a2 > 0 else np.zeros(icar.K)
    return u, v


def pc_rate(u: float, alpha: float) -> float:
    if u <= 0 or not 0 < alpha < 1:
        raise ValueError("PC prior needs u > 0 and 0 < alpha < 1")
    return -math.log(alpha) / u


def pc_prec_logdensity(tau, u: float = 1.0, alpha: float = 0.01):
    """Type-2 Gumbel PC prior on a precision: P(1/sqrt(tau) > u) = alpha."""
    lam = pc_rate(u, alpha)
    tau = np.asarray(tau, dtype=float)
    if np.any(tau <= 0):
        raise ValueError("tau must be positive")
    out = math.log(lam / 2) - 1.5 * np.log(tau) - lam / np.sqrt(tau)
    return float(out) if out.ndim == 0 else out


def pc_prec_tail(u_query: float, u: float = 1.0, alpha: float = 0.01) -> float:
    """Closed-form P(1/sqrt(tau) > u_query) under the PC prior."""
    return math.exp(-pc_rate(u, alpha) * u_query)


def beta_logdensity(phi, a: float = 0.5, b: float = 1.0):
    phi = np.asarray(phi, dtype=float)
    out = (a - 1) * np.log(phi) + (b - 1) * np.log1p(-phi) - (math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b))
    return float(out) if out.ndim == 0 else out


def read_edge_list(path) -> list[list[int]]:
    """Neighbor lists from a CSV edge list with 0-indexed ``i,j`` rows (header optional)."""
    import csv

    edges = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].strip().lower() in {"i", "from", "#"}:
                continue
            edges.append((int(row[0]), int(row[1])))
    K = 1 + max(max(e) for e in edges)
    nb: list[set[int]] = [set() for _ in range(K)]
    for i, j in edges:
        nb[i].add(j)
        nb[j].add(i)
    return [sorted(s) for s in nb]


def write_edge_list(neighbors, path) -> None:
    with open(path, "w") as fh:
        fh.write("i,j\n")
        for i, nb in enumerate(neighbors):
            for j in nb:
                if i < j:
                    fh.write(f"{i},{j}\n")

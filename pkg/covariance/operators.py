"""
Matrix-free covariance operators on state coordinates.

Every operator applies to a single vector (d,) or to a stack of row vectors
(m, d); symmetry makes the two conventions agree.
"""
import math
from typing import Optional

import numpy as np

from core.errors import DegenerateEnsembleError, ShapeError
from core.schemas import CovarianceKind, CovarianceSpec, InflationSpec
from observations.operators import ObservationOperator, OrthogonalProjection


class CovarianceOperator:
    dim: int

    def apply(self, v: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def dense(self) -> np.ndarray:
        return self.apply(np.eye(self.dim))

    def gram(self, basis: np.ndarray) -> np.ndarray:
        """Q^T C Q for orthonormal columns Q."""
        return basis.T @ self.apply(basis.T).T

    def trace(self) -> float:
        return float(np.trace(self.dense()))

    def hs_norm_sq(self) -> float:
        return float(np.sum(self.dense() ** 2))

    def quadratic(self, v: np.ndarray) -> float:
        return float(np.dot(v, self.apply(v)))

    def __mul__(self, factor: float) -> "CovarianceOperator":
        return InflatedCovariance(self, factor=factor)

    __rmul__ = __mul__


class ZeroCovariance(CovarianceOperator):
    def __init__(self, dim: int):
        self.dim = dim

    def apply(self, v: np.ndarray) -> np.ndarray:
        return np.zeros_like(v, dtype=float)

    def trace(self) -> float:
        return 0.0

    def hs_norm_sq(self) -> float:
        return 0.0


class DiagonalCovariance(CovarianceOperator):
    """Diagonal in the Stokes eigenbasis (or the standard basis for Lorenz systems)."""

    def __init__(self, spectrum: np.ndarray):
        self.spectrum = np.asarray(spectrum, dtype=float)
        if np.any(self.spectrum < 0):
            raise ValueError("diagonal covariance must have a non-negative spectrum")
        self.dim = self.spectrum.size

    def apply(self, v: np.ndarray) -> np.ndarray:
        return v * self.spectrum

    def trace(self) -> float:
        return float(np.sum(self.spectrum))

    def hs_norm_sq(self) -> float:
        return float(np.sum(self.spectrum ** 2))


class ProjectionCovariance(CovarianceOperator):
    """C = beta P for an orthogonal projection P."""

    def __init__(self, beta: float, projection: OrthogonalProjection):
        self.beta = float(beta)
        self.projection = projection
        self.dim = projection.dim

    def apply(self, v: np.ndarray) -> np.ndarray:
        return self.beta * self.projection.apply(v)

    def trace(self) -> float:
        return self.beta * self.projection.rank

    def hs_norm_sq(self) -> float:
        return self.beta ** 2 * self.projection.rank


class LowRankCovariance(CovarianceOperator):
    """C = (1/K) sum_k a_k (x) a_k with anchors stored as rows."""

    def __init__(self, anchors: np.ndarray, size: Optional[int] = None):
        self.anchors = np.atleast_2d(np.asarray(anchors, dtype=float))
        self.size = int(size if size is not None else self.anchors.shape[0])
        self.dim = self.anchors.shape[1]

    def apply(self, v: np.ndarray) -> np.ndarray:
        return ((v @ self.anchors.T) @ self.anchors) / self.size

    def trace(self) -> float:
        return float(np.sum(self.anchors ** 2)) / self.size

    def hs_norm_sq(self) -> float:
        G = self.anchors @ self.anchors.T
        return float(np.sum(G ** 2)) / self.size ** 2

    @property
    def rank_bound(self) -> int:
        return max(self.size - 1, 0)


class LocalizedCovariance(CovarianceOperator):
    """P C P for a general base operator."""

    def __init__(self, base: CovarianceOperator, projection: OrthogonalProjection):
        self.base = base
        self.projection = projection
        self.dim = base.dim

    def apply(self, v: np.ndarray) -> np.ndarray:
        P = self.projection
        return P.apply(self.base.apply(P.apply(v)))

    def trace(self) -> float:
        return float(np.trace(self.base.gram(self.projection.basis)))


class InflatedCovariance(CovarianceOperator):
    """factor * C + additive * P (P = identity when no projection is given)."""

    def __init__(self, base: CovarianceOperator, factor: float = 1.0, additive: float = 0.0,
                 projection: Optional[OrthogonalProjection] = None):
        self.base = base
        self.factor = float(factor)
        self.additive = float(additive)
        self.projection = projection
        self.dim = base.dim

    def _target(self, v: np.ndarray) -> np.ndarray:
        return v if self.projection is None else self.projection.apply(v)

    def apply(self, v: np.ndarray) -> np.ndarray:
        out = self.factor * self.base.apply(v)
        if self.additive:
            out = out + self.additive * self._target(v)
        return out

    def trace(self) -> float:
        rank = self.dim if self.projection is None else self.projection.rank
        return self.factor * self.base.trace() + self.additive * rank


def ensemble_cov(members: np.ndarray) -> LowRankCovariance:
    """C(m) = (1/K) sum_k (m_k - mean) (x) (m_k - mean)."""
    members = np.atleast_2d(np.asarray(members, dtype=float))
    K = members.shape[0]
    if K < 2:
        raise DegenerateEnsembleError(f"ensemble covariance needs K >= 2 members, got {K}", K)
    anchors = members - members.mean(axis=0)
    return LowRankCovariance(anchors, K)


def localize(C: CovarianceOperator, projection: OrthogonalProjection, validate: bool = True) -> CovarianceOperator:
    """P C P; low-rank anchors and diagonal spectra are projected in place."""
    if C.dim != projection.dim:
        raise ShapeError("covariance and projection dimensions differ", expected=(C.dim,), actual=(projection.dim,))
    if validate:
        projection.validate()
    if isinstance(C, LowRankCovariance):
        return LowRankCovariance(projection.apply(C.anchors), C.size)
    if isinstance(C, DiagonalCovariance) and projection.mask is not None:
        return DiagonalCovariance(C.spectrum * projection.mask)
    if isinstance(C, ZeroCovariance):
        return C
    return LocalizedCovariance(C, projection)


def inflate(C: CovarianceOperator, spec: InflationSpec,
            projection: Optional[OrthogonalProjection] = None, validate: bool = True) -> CovarianceOperator:
    """
    Effective covariance: s * alpha * (P C P or C) + mu * P, with s = 1/4 when
    `cmu_scaling` is set (the additive-inflation scheme C_mu) and 1 otherwise.
    Callers that checked the projection up front pass validate=False.
    """
    base = localize(C, projection, validate) if spec.localize and projection is not None else C
    factor = spec.multiplicative * (0.25 if spec.cmu_scaling else 1.0)
    if factor == 1.0 and spec.additive == 0.0:
        return base
    return InflatedCovariance(base, factor=factor, additive=spec.additive, projection=projection)


def cmu_covariance(C: CovarianceOperator, projection: OrthogonalProjection, mu: float) -> CovarianceOperator:
    """C_mu = 1/4 P C P + mu P."""
    return inflate(C, InflationSpec(additive=mu, localize=True, cmu_scaling=True), projection)


def hs_norm(C: CovarianceOperator) -> float:
    return math.sqrt(max(C.hs_norm_sq(), 0.0))


def cross_block_norm(C: CovarianceOperator, projection: OrthogonalProjection, iterations: int = 50,
                     tol: float = 1e-8, rng: Optional[np.random.Generator] = None) -> float:
    """Operator norm of P_K C P_{K-perp} by power iteration on its normal operator."""
    rng = rng or np.random.default_rng(0)
    x = projection.apply(rng.standard_normal(C.dim))
    if not np.any(x):
        return 0.0
    x /= np.linalg.norm(x)
    estimate = 0.0
    for _ in range(iterations):
        y = projection.complement(C.apply(projection.apply(x)))
        z = projection.apply(C.apply(projection.complement(y)))
        norm_y = float(np.linalg.norm(y))
        norm_z = float(np.linalg.norm(z))
        if norm_z == 0.0:
            return norm_y
        new = norm_y
        x = z / norm_z
        if abs(new - estimate) <= tol * max(new, 1e-300):
            return new
        estimate = new
    return estimate


class EigenCovariance(CovarianceOperator):
    """C = Q diag(s) Q^T for orthonormal columns Q."""

    def __init__(self, basis: np.ndarray, spectrum: np.ndarray):
        self.basis = np.asarray(basis, dtype=float)
        self.spectrum = np.asarray(spectrum, dtype=float)
        self.dim = self.basis.shape[0]

    def apply(self, v: np.ndarray) -> np.ndarray:
        return ((v @ self.basis) * self.spectrum) @ self.basis.T

    def trace(self) -> float:
        return float(np.sum(self.spectrum))

    def hs_norm_sq(self) -> float:
        return float(np.sum(self.spectrum ** 2))


def background_covariance(spec: CovarianceSpec, op: ObservationOperator,
                          eigenvalues: Optional[np.ndarray] = None) -> CovarianceOperator:
    """Prescribed 3DVar background from its config; `eigenvalues` are those of A (Stokes or A_sys)."""
    dim = op.dim
    if spec.kind == CovarianceKind.ZERO or spec.beta == 0:
        return ZeroCovariance(dim)
    if spec.kind == CovarianceKind.IDENTITY:
        return DiagonalCovariance(np.full(dim, spec.beta))
    if spec.kind == CovarianceKind.PROJECTION:
        return ProjectionCovariance(spec.beta, op.projection)
    if spec.kind == CovarianceKind.DIAGONAL_POWER:
        lam = np.ones(dim) if eigenvalues is None else np.asarray(eigenvalues, dtype=float)
        diag = DiagonalCovariance(spec.beta * lam ** (-spec.power))
        return localize(diag, op.projection)
    if spec.kind == CovarianceKind.EIGEN_BALANCED:
        _, s, vt = np.linalg.svd(op.matrix(), full_matrices=False)
        keep = s > 1e-12 * s[0]
        return EigenCovariance(vt[keep].T, spec.beta / s[keep] ** 2)
    raise ValueError(f"unknown covariance kind {spec.kind}")

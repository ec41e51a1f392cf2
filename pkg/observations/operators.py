"""
Type-1 observation operators acting on state coordinates.

O maps R^d (orthonormal coordinates of H) to R^q; the adjoint is the matrix
transpose. `interpolate` is O*O and `kernel_projection` is the orthogonal
projector onto (ker O)-perp = range(O*).
"""
import math
from functools import cached_property
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import orth

from core.errors import InvalidProjectionError, ObservationError, ShapeError
from core.schemas import ObservationKind
from core.spectral import StokesSpectrum


class OrthogonalProjection:
    """P = Q Q^T for orthonormal columns Q, or a coordinate mask when Q is a subset of the identity."""

    def __init__(self, dim: int, basis: Optional[np.ndarray] = None, indices: Optional[np.ndarray] = None):
        self.dim = dim
        self.indices = None if indices is None else np.asarray(indices, dtype=int)
        self._basis = basis

    @classmethod
    def identity(cls, dim: int) -> "OrthogonalProjection":
        return cls(dim, indices=np.arange(dim))

    @property
    def rank(self) -> int:
        return self.indices.size if self.indices is not None else self._basis.shape[1]

    @cached_property
    def basis(self) -> np.ndarray:
        if self._basis is not None:
            return self._basis
        Q = np.zeros((self.dim, self.indices.size))
        Q[self.indices, np.arange(self.indices.size)] = 1.0
        return Q

    @cached_property
    def mask(self) -> Optional[np.ndarray]:
        if self.indices is None:
            return None
        m = np.zeros(self.dim)
        m[self.indices] = 1.0
        return m

    def apply(self, v: np.ndarray) -> np.ndarray:
        if self.mask is not None:
            return v * self.mask
        return (v @ self.basis) @ self.basis.T

    def complement(self, v: np.ndarray) -> np.ndarray:
        return v - self.apply(v)

    def dense(self) -> np.ndarray:
        return self.apply(np.eye(self.dim))

    def validate(self, rng: Optional[np.random.Generator] = None, tol: float = 1e-10) -> None:
        """Raise InvalidProjectionError unless P is idempotent and symmetric on random vectors."""
        rng = rng or np.random.default_rng(0)
        v = rng.standard_normal((4, self.dim))
        w = rng.standard_normal((4, self.dim))
        Pv = self.apply(v)
        scale = float(np.linalg.norm(v))
        idem = float(np.linalg.norm(self.apply(Pv) - Pv)) / scale
        sym = float(np.max(np.abs(np.sum(Pv * w, axis=1) - np.sum(v * self.apply(w), axis=1)))) / scale ** 2
        residual = max(idem, sym)
        if residual > tol:
            raise InvalidProjectionError(f"operator is not an orthogonal projection (residual {residual:.2e})", residual)


class ObservationOperator:
    kind: ObservationKind

    def __init__(self, dim: int, rank: int, resolution: float):
        self.dim = dim
        self.rank = rank
        self.resolution = resolution

    def observe(self, v: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def adjoint(self, y: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    @property
    def projection(self) -> OrthogonalProjection:
        raise NotImplementedError

    @property
    def is_orthogonal_projection(self) -> bool:
        """True when O*O is itself the projector onto (ker O)-perp."""
        return False

    @property
    def h(self) -> float:
        return self.resolution

    @property
    def epsilon(self) -> float:
        return self.resolution ** 2

    def _check_state(self, v: np.ndarray):
        if v.shape[-1] != self.dim:
            raise ShapeError("state dimension does not match observation operator", expected=(self.dim,), actual=v.shape)

    def _check_obs(self, y: np.ndarray):
        if y.shape[-1] != self.rank:
            raise ObservationError(f"expected {self.rank} observations, got {y.shape[-1]}")

    def interpolate(self, v: np.ndarray) -> np.ndarray:
        return self.adjoint(self.observe(v))

    def kernel_projection(self, v: np.ndarray) -> np.ndarray:
        return self.projection.apply(v)

    def matrix(self) -> np.ndarray:
        """Dense q x d matrix of O."""
        return self.adjoint(np.eye(self.rank))

    def describe(self) -> dict:
        return {"kind": self.kind.value, "rank": self.rank, "dim": self.dim, "h": self.resolution}


class ModalObservation(ObservationOperator):
    """Observe a set of coordinates: O_n(u) = (u, psi_n) with psi_n eigenbasis vectors."""

    kind = ObservationKind.MODAL

    def __init__(self, dim: int, indices: Sequence[int], resolution: float, tail_resolution: Optional[float] = None):
        indices = np.asarray(sorted(set(int(i) for i in indices)), dtype=int)
        if indices.size == 0 or indices[0] < 0 or indices[-1] >= dim:
            raise ObservationError("modal indices must be a non-empty subset of the state coordinates")
        super().__init__(dim, indices.size, resolution)
        self.indices = indices
        self.tail_resolution = tail_resolution

    @classmethod
    def from_shell(cls, spectrum: StokesSpectrum, max_wavenumber_sq: float) -> "ModalObservation":
        """Observe every Stokes mode with |k|^2 <= max_wavenumber_sq; h = lambda_N^{-1/2}."""
        lam_max = spectrum.grid.scale ** 2 * max_wavenumber_sq
        count = spectrum.shell_count(lam_max)
        if count == 0:
            raise ObservationError("no Stokes modes inside the requested shell")
        eigs = spectrum.eigenvalues
        tail = 1.0 / math.sqrt(eigs[count]) if count < eigs.size else 0.0
        return cls(spectrum.dimension, np.arange(count), 1.0 / math.sqrt(eigs[count - 1]), tail)

    @classmethod
    def from_stride(cls, dim: int, stride: int = 1, offset: int = 0, resolution: float = 1.0) -> "ModalObservation":
        return cls(dim, np.arange(offset, dim, stride), resolution)

    def observe(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        self._check_state(v)
        return v[..., self.indices]

    def adjoint(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        self._check_obs(y)
        out = np.zeros(y.shape[:-1] + (self.dim,))
        out[..., self.indices] = y
        return out

    @cached_property
    def projection(self) -> OrthogonalProjection:
        return OrthogonalProjection(self.dim, indices=self.indices)

    @property
    def is_orthogonal_projection(self) -> bool:
        return True

    @property
    def full(self) -> bool:
        return self.rank == self.dim


class VolumeObservation(ObservationOperator):
    """
    Cell averages of each velocity component over an M x M partition,
    psi_n = chi_{D_n}/sqrt(|D_n|). Quadrature is the collocation sum, which is
    exact against the band-limited basis, so O* is the exact transpose.
    """

    kind = ObservationKind.VOLUME

    def __init__(self, spectrum: StokesSpectrum, cells: int):
        grid = spectrum.grid
        if grid.n % cells:
            raise ObservationError(f"grid size {grid.n} is not divisible by {cells} cells")
        L = grid.domain_size
        super().__init__(spectrum.dimension, 2 * cells * cells, L * math.sqrt(2.0) / cells)
        self.spectrum = spectrum
        self.cells = cells
        self._O = self._assemble()

    def _assemble(self) -> np.ndarray:
        sp, g, M = self.spectrum, self.spectrum.grid, self.cells
        n, L = g.n, g.domain_size
        width = n // M
        area = (L / M) ** 2
        ind = np.zeros((M, n))
        for c in range(M):
            ind[c, c * width:(c + 1) * width] = 1.0
        fx = np.fft.rfft(ind, axis=1) / n
        fy = np.fft.fft(ind, axis=1) / n
        # Fourier coefficient at mode p of the indicator of cell (J, I): fy[J, row] * fx[I, col]
        coef = fy[:, sp.row][:, None, :] * fx[:, sp.col][None, :, :] / math.sqrt(area)
        scale = math.sqrt(2.0) * L
        O = np.empty((2, M, M, sp.dimension))
        for comp in range(2):
            z = sp.direction[comp] * coef
            O[comp, :, :, 0::2] = scale * z.real
            O[comp, :, :, 1::2] = -scale * z.imag
        return O.reshape(self.rank, sp.dimension)

    def observe(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        self._check_state(v)
        return v @ self._O.T

    def adjoint(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        self._check_obs(y)
        return y @ self._O

    def matrix(self) -> np.ndarray:
        return self._O.copy()

    def cell_averages(self, values: np.ndarray) -> np.ndarray:
        """Brute-force O applied to physical values (2, n, n); ordering matches `observe`."""
        g, M = self.spectrum.grid, self.cells
        w = g.n // M
        sums = values.reshape(2, M, w, M, w).sum(axis=(2, 4))
        return (sums * g.cell_area / (g.domain_size / M)).reshape(-1)

    @cached_property
    def projection(self) -> OrthogonalProjection:
        return OrthogonalProjection(self.dim, basis=orth(self._O.T))

"""
Periodic 2D pseudo-spectral kernel.

Fields are stored as real-to-complex Fourier coefficients of the two velocity
components, normalised so that u(x) = sum_k u_hat(k) exp(i k.x) over the full
wavevector set. Only wavevectors with |k_x|, |k_y| <= K_max are ever non-zero,
with K_max = ceil(n/3) - 1, so quadratic products are alias-free on the n x n
collocation grid (2/3 rule). Nyquist modes are always zero.
"""
import json
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Any, Dict, Union

import numpy as np

from core.errors import NumericInputError, ShapeError

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class SpectralGrid:
    n: int
    domain_size: float = TWO_PI

    def __post_init__(self):
        if self.n < 4 or self.n % 2:
            raise ShapeError(f"grid size must be even and >= 4, got {self.n}")
        if self.domain_size <= 0:
            raise ShapeError("domain size must be positive")

    @property
    def k_max(self) -> int:
        return math.ceil(self.n / 3) - 1

    @property
    def scale(self) -> float:
        """Physical wavenumber per integer wavenumber, 2 pi / L."""
        return TWO_PI / self.domain_size

    @property
    def coeff_shape(self):
        return (2, self.n, self.n // 2 + 1)

    @cached_property
    def wavenumbers(self):
        """Integer wavenumbers (ky, kx) on the rfft2 layout."""
        ky = np.fft.fftfreq(self.n, 1.0 / self.n)
        kx = np.fft.rfftfreq(self.n, 1.0 / self.n)
        KY, KX = np.meshgrid(ky, kx, indexing="ij")
        return KY, KX

    @cached_property
    def active(self) -> np.ndarray:
        KY, KX = self.wavenumbers
        return (np.abs(KX) <= self.k_max) & (np.abs(KY) <= self.k_max)

    @cached_property
    def k_squared(self) -> np.ndarray:
        KY, KX = self.wavenumbers
        return self.scale ** 2 * (KX ** 2 + KY ** 2)

    @cached_property
    def weights(self) -> np.ndarray:
        # half-plane storage: interior kx columns stand for +kx and -kx
        w = np.full(self.coeff_shape[1:], 2.0)
        w[:, 0] = 1.0
        w[:, -1] = 1.0
        return w

    @property
    def cell_area(self) -> float:
        return (self.domain_size / self.n) ** 2

    def coordinates(self):
        x = np.arange(self.n) * self.domain_size / self.n
        X, Y = np.meshgrid(x, x, indexing="xy")
        return X, Y


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Velocity field on the periodic square, held in Fourier space."""

    coeffs: np.ndarray
    grid: SpectralGrid

    def __post_init__(self):
        if self.coeffs.shape != self.grid.coeff_shape:
            raise ShapeError(
                "coefficient array does not match grid",
                expected=self.grid.coeff_shape,
                actual=self.coeffs.shape,
            )

    @classmethod
    def zeros(cls, grid: SpectralGrid) -> "SpectralField":
        return cls(np.zeros(grid.coeff_shape, dtype=complex), grid)

    @classmethod
    def from_grid(cls, values: np.ndarray, grid: SpectralGrid) -> "SpectralField":
        """Raw transform of physical values, truncated to the active set (no projection)."""
        values = np.asarray(values, dtype=float)
        if values.shape != (2, grid.n, grid.n):
            raise ShapeError("physical field has wrong shape", expected=(2, grid.n, grid.n), actual=values.shape)
        if not np.all(np.isfinite(values)):
            raise NumericInputError("non-finite values in physical field")
        coeffs = np.fft.rfft2(values, axes=(-2, -1)) / grid.n ** 2
        coeffs = np.where(grid.active, coeffs, 0.0)
        return cls(coeffs, grid)

    def to_grid(self) -> np.ndarray:
        n = self.grid.n
        return np.fft.irfft2(self.coeffs * n ** 2, s=(n, n), axes=(-2, -1))

    def divergence_residual(self) -> float:
        KY, KX = self.grid.wavenumbers
        div = KX * self.coeffs[0] + KY * self.coeffs[1]
        denom = np.sqrt(KX ** 2 + KY ** 2) * np.sqrt(np.sum(np.abs(self.coeffs) ** 2, axis=0))
        scale = float(np.max(denom)) if denom.size else 0.0
        return float(np.max(np.abs(div))) / scale if scale > 0 else 0.0

    def _check(self, other: "SpectralField"):
        if other.grid != self.grid:
            raise ShapeError("resolution mismatch", expected=(self.grid.n,), actual=(other.grid.n,))

    def __add__(self, other: "SpectralField") -> "SpectralField":
        self._check(other)
        return SpectralField(self.coeffs + other.coeffs, self.grid)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        self._check(other)
        return SpectralField(self.coeffs - other.coeffs, self.grid)

    def __mul__(self, scalar: float) -> "SpectralField":
        return SpectralField(self.coeffs * scalar, self.grid)

    __rmul__ = __mul__

    def __neg__(self) -> "SpectralField":
        return SpectralField(-self.coeffs, self.grid)


FieldLike = Union[SpectralField, np.ndarray]


def _as_field(f: FieldLike, grid: SpectralGrid = None) -> SpectralField:
    if isinstance(f, SpectralField):
        if not np.all(np.isfinite(f.coeffs)):
            raise NumericInputError("non-finite Fourier coefficients")
        return f
    if grid is None:
        raise ShapeError("a grid is required to interpret physical values")
    return SpectralField.from_grid(f, grid)


def leray_project(f: FieldLike, grid: SpectralGrid = None) -> SpectralField:
    """Orthogonal projection onto divergence-free, mean-zero fields."""
    field = _as_field(f, grid)
    g = field.grid
    KY, KX = g.wavenumbers
    ksq = KX ** 2 + KY ** 2
    safe = np.where(ksq == 0, 1.0, ksq)
    kdotu = (KX * field.coeffs[0] + KY * field.coeffs[1]) / safe
    out = np.empty_like(field.coeffs)
    out[0] = field.coeffs[0] - KX * kdotu
    out[1] = field.coeffs[1] - KY * kdotu
    out[:, 0, 0] = 0.0
    out[:, g.n // 2, :] = 0.0
    out[:, :, -1] = 0.0
    out = np.where(g.active, out, 0.0)
    return SpectralField(out, g)


def stokes_apply(u: SpectralField) -> SpectralField:
    u = _as_field(u)
    return SpectralField(u.coeffs * u.grid.k_squared, u.grid)


def _gradient(component: np.ndarray, grid: SpectralGrid):
    KY, KX = grid.wavenumbers
    n = grid.n
    dx = np.fft.irfft2(1j * grid.scale * KX * component * n ** 2, s=(n, n))
    dy = np.fft.irfft2(1j * grid.scale * KY * component * n ** 2, s=(n, n))
    return dx, dy


def bilinear_B(u: SpectralField, v: SpectralField) -> SpectralField:
    """Leray-projected advection Pi (u . grad) v, alias-free."""
    u = _as_field(u)
    v = _as_field(v)
    if u.grid != v.grid:
        raise ShapeError("resolution mismatch in bilinear term", expected=(u.grid.n,), actual=(v.grid.n,))
    g = u.grid
    ux, uy = u.to_grid()
    adv = np.empty((2, g.n, g.n))
    for c in range(2):
        dx, dy = _gradient(v.coeffs[c], g)
        adv[c] = ux * dx + uy * dy
    return leray_project(adv, g)


def inner(u: SpectralField, v: SpectralField) -> float:
    if u.grid != v.grid:
        raise ShapeError("resolution mismatch in inner product")
    g = u.grid
    terms = g.weights * np.real(np.conj(u.coeffs) * v.coeffs)
    return float(g.domain_size ** 2 * np.sum(terms))


def norm_H(u: SpectralField) -> float:
    g = u.grid
    return math.sqrt(g.domain_size ** 2 * float(np.sum(g.weights * np.abs(u.coeffs) ** 2)))


def norm_V(u: SpectralField) -> float:
    g = u.grid
    return math.sqrt(g.domain_size ** 2 * float(np.sum(g.weights * g.k_squared * np.abs(u.coeffs) ** 2)))


def grid_norm_L2(values: np.ndarray, grid: SpectralGrid) -> float:
    return math.sqrt(float(np.sum(values ** 2)) * grid.cell_area)


def grid_norm_L4(values: np.ndarray, grid: SpectralGrid) -> float:
    speed_sq = np.sum(values ** 2, axis=0)
    return float(np.sum(speed_sq ** 2) * grid.cell_area) ** 0.25


class StokesSpectrum:
    """
    Eigenbasis of the Stokes operator on the truncated space.

    Each half-plane wavevector k contributes two real, L2-orthonormal modes
    sqrt(2)/L * e_k cos(k.x) and sqrt(2)/L * e_k sin(k.x) with
    e_k = (-k_y, k_x)/|k|. Modes are numbered by ascending eigenvalue, so the
    coordinate vector of a field is an orthonormal representation of H.
    """

    def __init__(self, grid: SpectralGrid):
        self.grid = grid
        K = grid.k_max
        kys, kxs = [], []
        for kx in range(0, K + 1):
            for ky in range(-K, K + 1):
                if kx == 0 and ky <= 0:
                    continue
                kys.append(ky)
                kxs.append(kx)
        kys = np.array(kys)
        kxs = np.array(kxs)
        order = np.lexsort((kxs, kys, kxs ** 2 + kys ** 2))
        self.ky = kys[order]
        self.kx = kxs[order]
        self.row = self.ky % grid.n
        self.col = self.kx
        norm = np.sqrt(self.kx ** 2 + self.ky ** 2)
        self.direction = np.stack([-self.ky / norm, self.kx / norm])
        wave_eigs = grid.scale ** 2 * (self.kx ** 2 + self.ky ** 2)
        self.eigenvalues = np.repeat(wave_eigs, 2)
        self._axis_column = self.kx == 0

    @property
    def dimension(self) -> int:
        return self.eigenvalues.size

    @property
    def lambda_1(self) -> float:
        return float(self.eigenvalues[0])

    def shell_count(self, lam_max: float) -> int:
        """Number of modes with eigenvalue <= lam_max (whole shells)."""
        return int(np.searchsorted(self.eigenvalues, lam_max * (1 + 1e-12), side="right"))

    def mode_index(self, kx: int, ky: int, part: str = "cos") -> int:
        if kx < 0 or (kx == 0 and ky < 0):
            kx, ky = -kx, -ky
        hits = np.nonzero((self.kx == kx) & (self.ky == ky))[0]
        if hits.size == 0:
            raise ShapeError(f"wavevector ({kx}, {ky}) is not active at this resolution")
        return 2 * int(hits[0]) + (1 if part == "sin" else 0)

    def unit(self, index: int) -> np.ndarray:
        a = np.zeros(self.dimension)
        a[index] = 1.0
        return a

    def from_coordinates(self, a: np.ndarray) -> SpectralField:
        a = np.asarray(a, dtype=float)
        if a.shape != (self.dimension,):
            raise ShapeError("coordinate vector has wrong size", expected=(self.dimension,), actual=a.shape)
        L = self.grid.domain_size
        amp = (math.sqrt(2.0) / (2.0 * L)) * (a[0::2] - 1j * a[1::2])
        coeffs = np.zeros(self.grid.coeff_shape, dtype=complex)
        coeffs[:, self.row, self.col] = self.direction * amp
        axis = self._axis_column
        coeffs[:, (-self.ky[axis]) % self.grid.n, 0] = self.direction[:, axis] * np.conj(amp[axis])
        return SpectralField(coeffs, self.grid)

    def to_coordinates(self, field: SpectralField) -> np.ndarray:
        """Coordinates of the Leray projection of `field`."""
        if field.grid != self.grid:
            raise ShapeError("resolution mismatch", expected=(self.grid.n,), actual=(field.grid.n,))
        z = np.sum(self.direction * field.coeffs[:, self.row, self.col], axis=0)
        scale = math.sqrt(2.0) * self.grid.domain_size
        a = np.empty(self.dimension)
        a[0::2] = scale * z.real
        a[1::2] = -scale * z.imag
        return a

    def to_grid(self, a: np.ndarray) -> np.ndarray:
        return self.from_coordinates(a).to_grid()

    def from_grid(self, values: np.ndarray) -> np.ndarray:
        return self.to_coordinates(SpectralField.from_grid(values, self.grid))

    def random_coordinates(self, rng: np.random.Generator, slope: float = 1.5, size=None) -> np.ndarray:
        """Gaussian coordinates with variance decaying like lambda^-slope (smooth fields)."""
        shape = (self.dimension,) if size is None else (size, self.dimension)
        return rng.standard_normal(shape) * (self.eigenvalues / self.lambda_1) ** (-slope / 2.0)


# --- serialization ---

def field_header(field: SpectralField) -> Dict[str, Any]:
    return {
        "n": field.grid.n,
        "k_max": field.grid.k_max,
        "domain_size": field.grid.domain_size,
        "components": 2,
    }


def save_field(path: Union[str, Path], field: SpectralField) -> Path:
    """NPZ layout: `coeffs` plus the header entries n, k_max, domain_size, components."""
    path = Path(path)
    np.savez(path, coeffs=field.coeffs, **{k: np.asarray(v) for k, v in field_header(field).items()})
    return path if path.suffix == ".npz" else path.with_suffix(path.suffix + ".npz")


def load_field(path: Union[str, Path]) -> SpectralField:
    with np.load(path) as data:
        grid = SpectralGrid(int(data["n"]), float(data["domain_size"]))
        if int(data["k_max"]) != grid.k_max:
            raise ShapeError("stored K_max does not match grid")
        return SpectralField(np.array(data["coeffs"]), grid)


def field_to_json(field: SpectralField) -> str:
    payload = field_header(field)
    payload["real"] = field.coeffs.real.tolist()
    payload["imag"] = field.coeffs.imag.tolist()
    return json.dumps(payload)


def field_from_json(text: str) -> SpectralField:
    payload = json.loads(text)
    grid = SpectralGrid(int(payload["n"]), float(payload["domain_size"]))
    coeffs = np.array(payload["real"]) + 1j * np.array(payload["imag"])
    return SpectralField(coeffs, grid)

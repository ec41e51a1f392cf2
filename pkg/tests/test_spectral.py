import math

import numpy as np
import pytest

from core.errors import NumericInputError, ShapeError
from core.spectral import (
    SpectralField,
    SpectralGrid,
    StokesSpectrum,
    bilinear_B,
    field_from_json,
    field_to_json,
    inner,
    leray_project,
    load_field,
    norm_H,
    norm_V,
    save_field,
    stokes_apply,
)


def random_field(grid, rng):
    values = rng.standard_normal((2, grid.n, grid.n))
    return leray_project(values, grid)


def test_grid_rejects_odd_size():
    with pytest.raises(ShapeError):
        SpectralGrid(15)


def test_k_max_two_thirds_rule():
    assert SpectralGrid(16).k_max == 5
    assert SpectralGrid(64).k_max == 21
    assert SpectralGrid(128).k_max == 42


def test_leray_projection_is_idempotent_and_divergence_free(grid16, rng):
    u = random_field(grid16, rng)
    again = leray_project(u)
    assert np.allclose(again.coeffs, u.coeffs, atol=1e-14)
    assert u.divergence_residual() < 1e-13


def test_leray_removes_gradients(grid16):
    X, Y = grid16.coordinates()
    gradient = np.stack([np.cos(X) * np.sin(Y), np.sin(X) * np.cos(Y)])
    assert norm_H(leray_project(gradient, grid16)) < 1e-12
    solenoidal = np.stack([np.sin(Y), np.sin(X)])
    projected = leray_project(solenoidal + gradient, grid16)
    assert np.allclose(projected.to_grid(), solenoidal, atol=1e-12)


def test_shear_mode_does_not_self_advect(grid16):
    X, _ = grid16.coordinates()
    shear = leray_project(np.stack([np.zeros_like(X), np.sin(X)]), grid16)
    assert norm_H(shear) > 1.0
    assert norm_H(bilinear_B(shear, shear)) < 1e-12


def test_from_grid_rejects_non_finite(grid16):
    values = np.zeros((2, 16, 16))
    values[0, 3, 3] = np.nan
    with pytest.raises(NumericInputError):
        SpectralField.from_grid(values, grid16)


def test_resolution_mismatch_raises(grid16, grid32):
    with pytest.raises(ShapeError):
        SpectralField.zeros(grid16) + SpectralField.zeros(grid32)


def test_parseval_matches_grid_quadrature(grid16, rng):
    u = random_field(grid16, rng)
    values = u.to_grid()
    quadrature = math.sqrt(float(np.sum(values ** 2)) * grid16.cell_area)
    assert norm_H(u) == pytest.approx(quadrature, rel=1e-12)


def test_stokes_eigenvalue_of_single_mode(grid16):
    spectrum = StokesSpectrum(grid16)
    idx = spectrum.mode_index(1, 2, "cos")
    u = spectrum.from_coordinates(spectrum.unit(idx))
    Au = stokes_apply(u)
    assert np.allclose(Au.coeffs, 5.0 * u.coeffs)
    assert norm_V(u) ** 2 == pytest.approx(5.0)


def test_coordinates_are_orthonormal(grid16, rng):
    spectrum = StokesSpectrum(grid16)
    a = rng.standard_normal(spectrum.dimension)
    b = rng.standard_normal(spectrum.dimension)
    fa, fb = spectrum.from_coordinates(a), spectrum.from_coordinates(b)
    assert inner(fa, fb) == pytest.approx(float(a @ b), rel=1e-12)
    assert np.allclose(spectrum.to_coordinates(fa), a, atol=1e-12)


def test_eigenvalues_sorted_and_paired(grid16):
    spectrum = StokesSpectrum(grid16)
    eigs = spectrum.eigenvalues
    assert np.all(np.diff(eigs) >= 0)
    assert np.allclose(eigs[0::2], eigs[1::2])
    assert spectrum.lambda_1 == pytest.approx(1.0)


def test_bilinear_orthogonality(grid32, rng):
    u = random_field(grid32, rng)
    v = random_field(grid32, rng)
    w = random_field(grid32, rng)
    Buv = bilinear_B(u, v)
    scale = norm_H(Buv) * norm_H(v)
    assert abs(inner(Buv, v)) / scale < 1e-10
    anti = inner(Buv, w) + inner(bilinear_B(u, w), v)
    assert abs(anti) / (norm_H(Buv) * norm_H(w)) < 1e-10


def test_shell_count_counts_whole_shells(grid16):
    spectrum = StokesSpectrum(grid16)
    # |k|^2 = 1 has four wavevectors (two in the half plane), each with a cos and a sin mode
    assert spectrum.shell_count(1.0) == 4
    assert spectrum.shell_count(2.0) == 8


def test_npz_and_json_round_trip(tmp_path, grid16, rng):
    u = random_field(grid16, rng)
    path = save_field(tmp_path / "field", u)
    loaded = load_field(path)
    assert np.array_equal(loaded.coeffs, u.coeffs)
    again = field_from_json(field_to_json(u))
    assert np.allclose(again.coeffs, u.coeffs)

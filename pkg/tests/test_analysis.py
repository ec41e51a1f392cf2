import numpy as np
import pytest

from core.errors import AnalysisError, DegenerateEnsembleError
from core.schemas import FilterKind
from covariance.operators import DiagonalCovariance
from filters.analysis import (
    analysis_update_discrete,
    enkf_update,
    ensrkf_update,
    kalman_gain,
    kalman_update,
    square_root_residual,
    square_root_transform,
)


@pytest.fixture
def problem(rng):
    d, q = 6, 3
    O = rng.standard_normal((q, d))
    L = rng.standard_normal((q, q))
    Gamma = L @ L.T + q * np.eye(q)
    return O, Gamma


def test_kalman_update_matches_closed_form(problem, rng):
    O, Gamma = problem
    B = rng.standard_normal((6, 6))
    C = B @ B.T + np.eye(6)
    m = rng.standard_normal(6)
    y = rng.standard_normal(3)
    result = kalman_update(m, C, O, y, Gamma, posterior_covariance=True)
    K = C @ O.T @ np.linalg.inv(O @ C @ O.T + Gamma)
    assert np.allclose(result.mean, m + K @ (y - O @ m))
    assert np.allclose(result.covariance, (np.eye(6) - K @ O) @ C)
    assert result.condition_number >= 1.0


def test_kalman_gain_accepts_operators(problem):
    O, Gamma = problem
    spectrum = np.linspace(0.5, 2.0, 6)
    dense, _ = kalman_gain(np.diag(spectrum), O, Gamma)
    matrix_free, _ = kalman_gain(DiagonalCovariance(spectrum), O, Gamma)
    assert np.allclose(dense, matrix_free)


def test_singular_innovation_raises(problem):
    O, _ = problem
    with np.errstate(all="ignore"), pytest.raises(AnalysisError):
        kalman_gain(np.zeros((6, 6)), O, np.zeros((3, 3)))


@pytest.mark.parametrize("K", [2, 5, 8])
def test_square_root_property(K, problem, rng):
    O, Gamma = problem
    members = rng.standard_normal((K, 6))
    assert square_root_residual(members, O, Gamma) < 1e-10


def test_square_root_transform_is_symmetric(problem, rng):
    O, Gamma = problem
    members = rng.standard_normal((5, 6))
    T = square_root_transform(members - members.mean(axis=0), O, Gamma)
    assert np.allclose(T, T.T)
    assert np.all(np.linalg.eigvalsh(T) <= 1.0 + 1e-12)


def test_ensrkf_update_preserves_mean_of_anomalies(problem, rng):
    O, Gamma = problem
    members = rng.standard_normal((5, 6))
    y = rng.standard_normal(3)
    result = ensrkf_update(members, O, y, Gamma)
    C_hat = np.cov(members.T, bias=True)
    m = members.mean(axis=0)
    K = C_hat @ O.T @ np.linalg.inv(O @ C_hat @ O.T + Gamma)
    assert np.allclose(result.mean, m + K @ (y - O @ m))
    # the symmetric transform keeps the anomalies centred
    assert np.allclose(result.members.mean(axis=0), result.mean)


def test_enkf_update_with_zero_perturbations_moves_members_by_the_gain(problem, rng):
    O, Gamma = problem
    members = rng.standard_normal((4, 6))
    y = rng.standard_normal(3)
    result = enkf_update(members, O, y, Gamma, np.zeros((4, 3)))
    C_hat = np.cov(members.T, bias=True)
    K = C_hat @ O.T @ np.linalg.inv(O @ C_hat @ O.T + Gamma)
    expected = members + (y - members @ O.T) @ K.T
    assert np.allclose(result.members, expected)
    assert np.allclose(result.mean, expected.mean(axis=0))


def test_ensemble_updates_need_two_members(problem, rng):
    O, Gamma = problem
    single = rng.standard_normal((1, 6))
    with pytest.raises(DegenerateEnsembleError):
        enkf_update(single, O, np.zeros(3), Gamma, np.zeros((1, 3)))
    with pytest.raises(DegenerateEnsembleError):
        ensrkf_update(single, O, np.zeros(3), Gamma)


def test_discrete_dispatch(problem, rng):
    O, Gamma = problem
    with pytest.raises(ValueError):
        analysis_update_discrete(FilterKind.THREEDVAR, np.zeros(6), np.zeros(3), O, Gamma)
    with pytest.raises(ValueError):
        analysis_update_discrete(FilterKind.ENKF, rng.standard_normal((3, 6)), np.zeros(3), O, Gamma)
    with pytest.raises(ValueError):
        analysis_update_discrete(FilterKind.NUDGING, np.zeros(6), np.zeros(3), O, Gamma)
    result = analysis_update_discrete(FilterKind.THREEDVAR, np.zeros(6), np.ones(3), O, Gamma, C=np.eye(6))
    assert result.mean.shape == (6,)

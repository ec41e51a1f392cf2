import numpy as np
import pytest

from core.errors import ConfigurationError
from core.rng import NoiseStreams
from core.schemas import FilterKind, InflationSpec
from covariance.operators import ProjectionCovariance
from dynamics.trajectory import integrate
from filters.base_filter import initial_condition
from filters.continuum import DiscreteFilter, continuum_consistency
from filters.enkf import EnKFFilter
from filters.ensrkf import EnSRKFFilter
from filters.threedvar import ThreeDVarFilter
from observations.noise import ObservationPath
from observations.operators import ModalObservation


@pytest.fixture
def fine_path(lorenz63):
    truth = integrate(lorenz63, np.array([1.0, 1.0, -20.0]), 2000, 1e-4)
    op = ModalObservation.from_stride(3)
    return ObservationPath(op, truth.states, 1e-4, 0.1, NoiseStreams(21), members=4)


def test_discrete_3dvar_converges_to_continuous(lorenz63, fine_path):
    C = ProjectionCovariance(0.5, fine_path.op.projection)
    continuous = ThreeDVarFilter(lorenz63, fine_path.op, 0.1, C)
    discrete = DiscreteFilter(FilterKind.THREEDVAR, lorenz63, fine_path.op, 0.1, covariance=C)
    initial = fine_path.truth[0] + np.array([1.0, -1.0, 0.5])
    levels = []
    report = continuum_consistency(continuous, discrete, fine_path, initial, strides=(16, 8, 4, 2, 1),
                                   on_level=lambda dt, diff: levels.append(dt))
    assert report.kind == FilterKind.THREEDVAR
    assert len(report.dts) == 5
    assert levels == pytest.approx([1.6e-3, 8e-4, 4e-4, 2e-4, 1e-4])
    assert report.monotone
    assert report.order >= 0.5
    assert report.passed


@pytest.fixture
def lorenz96_path(lorenz96):
    u0 = 2.0 + 3.0 * np.random.default_rng(9).standard_normal(lorenz96.dim)
    truth = integrate(lorenz96, u0, 2000, 1e-4)
    op = ModalObservation.from_stride(lorenz96.dim)
    return ObservationPath(op, truth.states, 1e-4, 0.1, NoiseStreams(22), members=4)


@pytest.mark.parametrize("kind, continuous_cls", [(FilterKind.ENKF, EnKFFilter), (FilterKind.ENSRKF, EnSRKFFilter)])
def test_discrete_ensemble_filters_converge_to_continuous(kind, continuous_cls, lorenz96, lorenz96_path):
    path = lorenz96_path
    continuous = continuous_cls(lorenz96, path.op, 0.1)
    discrete = DiscreteFilter(kind, lorenz96, path.op, 0.1)
    initial = initial_condition(lorenz96, path.truth[0], NoiseStreams(4), offset=1.0, spread=0.5, members=4)
    report = continuum_consistency(continuous, discrete, path, initial)
    assert report.kind == kind
    assert report.monotone, report.sup_differences
    assert report.order >= 0.5
    assert report.passed


@pytest.mark.parametrize("kind", [FilterKind.ENKF, FilterKind.ENSRKF])
def test_discrete_ensemble_filters_cycle(kind, lorenz63, fine_path):
    path = fine_path.coarsened(10)
    f = DiscreteFilter(kind, lorenz63, path.op, 0.1, inflation=InflationSpec(additive=0.1))
    initial = initial_condition(lorenz63, path.truth[0], NoiseStreams(4), offset=1.0, spread=0.5, members=4)
    run = f.run(initial, path)
    assert not run.diverged
    assert run.final.shape == (4, 3)
    assert run.series["err_H2"][-1] < run.series["err_H2"][0]


def test_discrete_filter_validation(lorenz63):
    op = ModalObservation.from_stride(3)
    with pytest.raises(ConfigurationError):
        DiscreteFilter(FilterKind.NUDGING, lorenz63, op, 0.1)
    with pytest.raises(ConfigurationError):
        DiscreteFilter(FilterKind.THREEDVAR, lorenz63, op, 0.1)


def test_discrete_gamma_scales_with_dt(lorenz63):
    op = ModalObservation.from_stride(3)
    f = DiscreteFilter(FilterKind.ENSRKF, lorenz63, op, 0.2)
    assert np.allclose(f.gamma(0.01), 4.0 * np.eye(3))

from unittest.mock import patch

import numpy as np
import pytest

from core.errors import ConfigurationError, ObservationError
from core.rng import NoiseStreams
from core.schemas import FilterKind, InflationSpec
from diagnostics.stability import stability_check
from covariance.operators import DiagonalCovariance, ProjectionCovariance, ZeroCovariance
from dynamics.trajectory import integrate
from filters.base_filter import SERIES_COLUMNS, initial_condition
from filters.continuum import DiscreteFilter
from filters.enkf import EnKFFilter
from filters.ensrkf import EnSRKFFilter
from filters.nudging import NudgingFilter
from filters.threedvar import ThreeDVarFilter
from observations.noise import ObservationPath
from observations.operators import ModalObservation, OrthogonalProjection


def lorenz_path(system, n=200, dt=0.005, members=0, sigma=0.1):
    truth = integrate(system, np.array([1.0, 1.0, -20.0]), n, dt)
    op = ModalObservation.from_stride(system.dim)
    return ObservationPath(op, truth.states, dt, sigma, NoiseStreams(5), members=members)


def test_zero_covariance_3dvar_is_a_pure_forecast(lorenz63):
    path = lorenz_path(lorenz63, n=5)
    f = ThreeDVarFilter(lorenz63, path.op, 0.1, ZeroCovariance(3))
    m = np.array([2.0, -1.0, -15.0])
    inc = path.increment(0)
    assert np.allclose(f.step(m, inc), lorenz63.step(m, inc.dt))


def test_nudging_equals_3dvar_with_scaled_identity(lorenz63):
    path = lorenz_path(lorenz63, n=100)
    initial = path.truth[0] + np.array([3.0, -2.0, 1.0])
    nudging = NudgingFilter(lorenz63, path.op, sigma=0.1, mu=20.0)
    threedvar = ThreeDVarFilter(lorenz63, path.op, 0.1, DiagonalCovariance(np.full(3, nudging.equivalent_background)))
    a = nudging.run(initial, path, keep_means=True)
    b = threedvar.run(initial, path, keep_means=True)
    assert np.allclose(a.means, b.means, rtol=1e-9, atol=1e-9)


def test_nudging_rejects_negative_strength(lorenz63):
    op = ModalObservation.from_stride(3)
    with pytest.raises(ValueError):
        NudgingFilter(lorenz63, op, sigma=0.1, mu=-1.0)
    NudgingFilter(lorenz63, op, sigma=0.0, mu=0.0)


def test_positive_sigma_required(lorenz63):
    op = ModalObservation.from_stride(3)
    with pytest.raises(ValueError):
        ThreeDVarFilter(lorenz63, op, 0.0, ZeroCovariance(3))
    with pytest.raises(ValueError):
        EnKFFilter(lorenz63, op, 0.0)
    with pytest.raises(ConfigurationError):
        DiscreteFilter(FilterKind.ENSRKF, lorenz63, op, 0.0)


def test_threedvar_error_step_matches_state_step(lorenz63):
    path = lorenz_path(lorenz63, n=3)
    f = ThreeDVarFilter(lorenz63, path.op, 0.1, ProjectionCovariance(0.5, path.op.projection))
    m = path.truth[0] + np.array([0.5, 0.3, -0.2])
    inc = path.increment(0)
    direct = f.step(m, inc) - path.truth[1]
    via_error = f.error_step(m - path.truth[0], inc)
    assert np.allclose(direct, via_error, atol=1e-10)


def test_enkf_error_step_matches_state_step(lorenz63):
    path = lorenz_path(lorenz63, n=3, members=4)
    f = EnKFFilter(lorenz63, path.op, 0.1, InflationSpec(additive=0.2))
    members = path.truth[0] + np.random.default_rng(3).standard_normal((4, 3))
    inc = path.increment(0)
    direct = f.step(members, inc) - path.truth[1]
    via_error = f.error_step(members - path.truth[0], inc)
    assert np.allclose(direct, via_error, atol=1e-10)


def test_enkf_needs_perturbation_increments(lorenz63):
    path = lorenz_path(lorenz63, n=3, members=0)
    f = EnKFFilter(lorenz63, path.op, 0.1)
    members = np.tile(path.truth[0], (3, 1)) + np.eye(3)
    with pytest.raises(ObservationError):
        f.step(members, path.increment(0))


def test_threedvar_pulls_estimate_towards_truth(lorenz63):
    path = lorenz_path(lorenz63, n=400)
    f = ThreeDVarFilter(lorenz63, path.op, 0.1, ProjectionCovariance(1.0, path.op.projection))
    initial = initial_condition(lorenz63, path.truth[0], NoiseStreams(5), offset=10.0)
    run = f.run(initial, path)
    assert run.series["err_H2"][0] == pytest.approx(100.0)
    assert not run.diverged
    assert np.mean(run.series["err_H2"][-100:]) < 10.0
    assert set(SERIES_COLUMNS) <= set(run.series)


@pytest.mark.parametrize("filter_cls", [EnKFFilter, EnSRKFFilter])
def test_ensemble_damping_term_is_non_positive(filter_cls, lorenz63):
    path = lorenz_path(lorenz63, n=100, dt=0.002, members=6)
    f = filter_cls(lorenz63, path.op, 0.1, InflationSpec(additive=0.5))
    streams = NoiseStreams(8)
    initial = initial_condition(lorenz63, path.truth[0], streams, offset=1.0, spread=1.0, members=6)
    run = f.run(initial, path)
    assert not run.diverged
    assert np.all(run.series["damping"] <= 0.0)
    assert np.any(run.series["damping"] < 0.0)
    assert np.all(run.series["spread"] > 0.0)


def test_divergence_is_detected_and_truncates_the_run(lorenz63):
    path = lorenz_path(lorenz63, n=50)
    f = ThreeDVarFilter(lorenz63, path.op, 0.1, ZeroCovariance(3), divergence_factor=2.0)
    initial = path.truth[0] + np.array([1000.0, 0.0, 0.0])
    run = f.run(initial, path)
    assert run.diverged
    assert run.divergence["step"] == 0
    assert run.divergence["threshold"] == pytest.approx(2.0 * lorenz63.absorbing_radius)
    assert run.steps_completed == 0
    frame = run.to_frame(replica=3)
    assert bool(frame["diverged"].iloc[-1])
    assert (frame["replica"] == 3).all()


def test_record_every_thins_the_series(lorenz63):
    path = lorenz_path(lorenz63, n=100)
    f = ThreeDVarFilter(lorenz63, path.op, 0.1, ProjectionCovariance(0.5, path.op.projection))
    run = f.run(path.truth[0], path, record_every=10)
    assert len(run.times) == 11
    assert run.times[-1] == pytest.approx(100 * path.dt)
    assert run.lineage == (5, 0)


def test_initial_condition_is_reproducible(lorenz96):
    u0 = np.zeros(40)
    a = initial_condition(lorenz96, u0, NoiseStreams(2), offset=1.0, spread=0.5, members=4)
    b = initial_condition(lorenz96, u0, NoiseStreams(2), offset=1.0, spread=0.5, members=4)
    assert a.shape == (4, 40)
    assert np.array_equal(a, b)
    centre = initial_condition(lorenz96, u0, NoiseStreams(2), offset=1.0)
    assert np.linalg.norm(centre) == pytest.approx(1.0)


def test_deterministic_nudging_error_decays_exponentially(lorenz63):
    path = lorenz_path(lorenz63, n=100, dt=0.001)
    f = NudgingFilter(lorenz63, path.op, sigma=0.0, mu=200.0)
    run = f.run(path.truth[0] + np.array([3.0, -4.0, 0.0]), path)
    err = run.series["err_H2"]
    assert err[0] == pytest.approx(25.0)
    assert np.all(np.diff(err) < 0.0)
    rate = -np.polyfit(run.times, np.log(err), 1)[0] / 2.0
    assert rate >= 0.5 * f.mu


def test_ensrkf_error_step_matches_state_step(lorenz63):
    path = lorenz_path(lorenz63, n=3)
    f = EnSRKFFilter(lorenz63, path.op, 0.1, InflationSpec(additive=0.2))
    members = path.truth[0] + np.random.default_rng(4).standard_normal((4, 3))
    inc = path.increment(0)
    direct = f.step(members, inc) - path.truth[1]
    via_error = f.error_step(members - path.truth[0], inc)
    assert np.allclose(direct, via_error, atol=1e-10)


def test_collapsed_ensrkf_is_3dvar_with_the_inflation(lorenz63):
    path = lorenz_path(lorenz63, n=3)
    inc = path.increment(0)
    m = path.truth[0] + np.array([0.5, -0.3, 0.2])
    collapsed = np.tile(m, (4, 1))

    inflated = EnSRKFFilter(lorenz63, path.op, 0.1, InflationSpec(additive=0.3)).step(collapsed, inc)
    threedvar = ThreeDVarFilter(lorenz63, path.op, 0.1, ProjectionCovariance(0.3, path.op.projection)).step(m, inc)
    assert np.allclose(inflated, threedvar, atol=1e-12)
    assert np.allclose(inflated, inflated[0], atol=1e-12)

    bare = EnSRKFFilter(lorenz63, path.op, 0.1).step(collapsed, inc)
    assert np.allclose(bare, lorenz63.step(collapsed, inc.dt), atol=1e-12)


def test_forecast_only_runs_do_not_contract(lorenz63):
    path = lorenz_path(lorenz63, n=2000)
    f = ThreeDVarFilter(lorenz63, path.op, 0.1, ZeroCovariance(3))
    a = f.run(path.truth[0] + np.array([1e-3, 0.0, 0.0]), path, keep_means=True)
    b = f.run(path.truth[0], path, keep_means=True)
    assert not a.diverged and not b.diverged
    assert stability_check(a, b).contraction_rate <= 0.0


def test_paired_3dvar_runs_forget_their_initial_condition(lorenz63):
    path = lorenz_path(lorenz63, n=400)
    f = ThreeDVarFilter(lorenz63, path.op, 0.1, ProjectionCovariance(1.0, path.op.projection))
    a = f.run(initial_condition(lorenz63, path.truth[0], NoiseStreams(5), offset=1.0), path, keep_means=True)
    b = f.run(initial_condition(lorenz63, path.truth[0], NoiseStreams(6), offset=1.0), path, keep_means=True)
    energy = float(np.mean(a.series["err_H2"][200:]))
    result = stability_check(a, b, energy_bound=energy)
    assert result.contraction_rate > 0.0
    assert result.tail_mean < 1e-6
    assert result.passed


@pytest.mark.parametrize("filter_cls", [EnKFFilter, EnSRKFFilter])
def test_localization_projection_is_validated_once(filter_cls, lorenz63):
    path = lorenz_path(lorenz63, n=10, dt=0.002, members=4)
    initial = initial_condition(lorenz63, path.truth[0], NoiseStreams(8), offset=1.0, spread=0.5, members=4)
    with patch.object(OrthogonalProjection, "validate") as validate:
        f = filter_cls(lorenz63, path.op, 0.1, InflationSpec(additive=0.1, localize=True))
        f.run(initial, path)
    assert validate.call_count == 1


def test_discrete_localization_projection_is_validated_once(lorenz63):
    path = lorenz_path(lorenz63, n=10, dt=0.002, members=4)
    initial = initial_condition(lorenz63, path.truth[0], NoiseStreams(8), offset=1.0, spread=0.5, members=4)
    with patch.object(OrthogonalProjection, "validate") as validate:
        f = DiscreteFilter(FilterKind.ENKF, lorenz63, path.op, 0.1,
                           inflation=InflationSpec(additive=0.1, localize=True))
        f.run(initial, path)
    assert validate.call_count == 1

import numpy as np
import pytest

from core.errors import InvalidComparisonError, SeriesTooShortError
from core.schemas import BoundInputs, BoundKind, BoundReport, EstimateSummary, ReplicaFault, RunStatus
from core.rng import NoiseStreams
from covariance.operators import DiagonalCovariance, ProjectionCovariance
from diagnostics.aggregate import ReplicaAggregator, ReplicaOutcome
from diagnostics.calibration import calibrate_constants
from diagnostics.identities import VOLUME_IDENTITY_CONSTANT, run_identity_suite, volume_identity_ratios
from diagnostics.limsup import limsup_estimate, tail_average
from diagnostics.ou import ou_bound_check, simulate_ou
from diagnostics.stability import stability_check
from filters.base_filter import FilterRun
from observations.operators import ModalObservation


def make_run(values, lineage=(1, 0), means=None, steps=None):
    values = np.asarray(values, dtype=float)
    times = np.arange(values.size) * 0.01
    series = {"err_H2": values, "err_V2": 2 * values, "mean_err_H2": values, "spread": 0 * values,
              "damping": 0 * values}
    return FilterRun(name="3dvar", times=times, series=series, final=np.zeros(3),
                     steps_completed=steps if steps is not None else values.size - 1, means=means, lineage=lineage)


def report(guaranteed=True, bound=1.0):
    inputs = BoundInputs(nu=0.1, lambda_1=1.0, grashof=1.0, sigma=0.1, h=0.1, q=3)
    return BoundReport(kind=BoundKind.THREEDVAR_LOCALIZED, inputs=inputs, epsilon=0.01, gamma=1.0, kappa=0.1,
                       bound=bound, guaranteed=guaranteed)


def fault(replica, kind="SYSTEM_ERROR"):
    return ReplicaFault(fault_type=kind, replica=replica, message="boom")


# --- limsup ---

def test_limsup_needs_enough_samples():
    with pytest.raises(SeriesTooShortError) as exc:
        limsup_estimate(np.ones(50))
    assert exc.value.length == 50


def test_limsup_of_a_settled_series():
    series = np.concatenate([np.linspace(10, 1, 200), np.ones(200)])
    est = limsup_estimate(series)
    assert est.limsup == pytest.approx(1.0)
    assert est.tail_mean == pytest.approx(1.0)
    assert est.window == 20
    assert tail_average(series) == pytest.approx(1.0)


def test_limsup_picks_the_worst_window():
    series = np.ones(400)
    series[350:370] = 5.0
    est = limsup_estimate(series)
    assert est.limsup == pytest.approx(5.0)
    assert est.tail_mean < est.limsup


# --- OU ---

def test_ou_bound_holds(nse16, modal_nse16):
    C = ProjectionCovariance(0.5, modal_nse16.projection)
    result = ou_bound_check(C, modal_nse16, nse16.spectrum.eigenvalues, nu=0.1, sigma=0.2, n_samples=512,
                            alpha=0.0, seed=3)
    assert result.expected <= result.bound
    assert result.passed
    assert abs(result.estimate - result.expected) < 5 * result.standard_error


def test_ou_finite_horizon_is_below_stationary(nse16, modal_nse16):
    C = ProjectionCovariance(0.5, modal_nse16.projection)
    eigs = nse16.spectrum.eigenvalues
    short = ou_bound_check(C, modal_nse16, eigs, nu=0.1, sigma=0.2, horizon=0.5)
    stationary = ou_bound_check(C, modal_nse16, eigs, nu=0.1, sigma=0.2)
    assert short.expected < stationary.expected
    assert stationary.expected == pytest.approx(stationary.bound)


def test_ou_rejects_bad_parameters(nse16, modal_nse16):
    C = ProjectionCovariance(0.5, modal_nse16.projection)
    eigs = nse16.spectrum.eigenvalues
    with pytest.raises(ValueError):
        ou_bound_check(C, modal_nse16, eigs, nu=0.1, sigma=0.0)
    with pytest.raises(ValueError):
        ou_bound_check(C, modal_nse16, eigs, nu=0.1, sigma=0.1, alpha=0.7)
    with pytest.raises(ValueError):
        ou_bound_check(C, modal_nse16, eigs, nu=0.1, sigma=0.1, dt=0.01)


def test_single_mode_ou_matches_closed_form():
    eigenvalues = np.array([1.0, 2.0, 4.0, 8.0])
    nu, sigma, c, k = 0.5, 0.5, 1.0, 2
    C = DiagonalCovariance(np.where(np.arange(4) == k, c, 0.0))
    op = ModalObservation(4, [k], resolution=1.0)
    stationary = c ** 2 / (2 * nu * eigenvalues[k] * sigma ** 2)

    exact = ou_bound_check(C, op, eigenvalues, nu=nu, sigma=sigma, n_samples=2000, alpha=0.0, seed=5)
    assert exact.expected / sigma ** 2 == pytest.approx(stationary)

    paths = ou_bound_check(C, op, eigenvalues, nu=nu, sigma=sigma, n_samples=2000, alpha=0.0, seed=5,
                           horizon=5.0, dt=0.01)
    assert paths.expected / sigma ** 2 == pytest.approx(stationary, rel=1e-6)
    assert abs(paths.estimate - paths.expected) < 4 * paths.standard_error


def test_integrated_paths_agree_with_exact_law(nse16, modal_nse16):
    C = ProjectionCovariance(0.5, modal_nse16.projection)
    eigs = nse16.spectrum.eigenvalues
    result = ou_bound_check(C, modal_nse16, eigs, nu=0.1, sigma=0.2, n_samples=400, horizon=5.0, dt=0.02,
                            alpha=0.0, seed=9)
    assert abs(result.estimate - result.expected) < 4 * result.standard_error + 0.02 * result.expected
    assert result.passed


def test_simulate_ou_starts_at_rest_and_validates():
    G = np.array([[1.0], [0.0]])
    z = simulate_ou(G, np.array([1.0, 2.0]), nu=1.0, sigma=1.0, horizon=0.5, dt=0.1, n_paths=50,
                    streams=NoiseStreams(2))
    assert z.shape == (50, 2)
    assert np.all(z[:, 1] == 0.0)
    with pytest.raises(ValueError):
        simulate_ou(G, np.array([1.0, 2.0]), 1.0, 1.0, horizon=0.5, dt=0.0, n_paths=5, streams=NoiseStreams(2))


# --- stability ---

def test_stability_requires_shared_lineage():
    means = np.zeros((5, 3))
    with pytest.raises(InvalidComparisonError):
        stability_check(make_run(np.ones(5), (1, 0), means), make_run(np.ones(5), (1, 1), means))
    with pytest.raises(InvalidComparisonError):
        stability_check(make_run(np.ones(5)), make_run(np.ones(5)))
    with pytest.raises(InvalidComparisonError):
        stability_check([make_run(np.ones(5), means=means)], [])


def test_stability_of_contracting_runs():
    t = np.arange(300) * 0.01
    gap = np.exp(-2.0 * t)[:, None] * np.array([1.0, 0.0, 0.0])
    a = make_run(np.ones(300), means=np.zeros((300, 3)))
    b = make_run(np.ones(300), means=gap)
    result = stability_check(a, b, energy_bound=1.0)
    assert result.passed
    assert result.bound == pytest.approx(2.0)
    assert result.contraction_rate == pytest.approx(4.0, rel=1e-6)


# --- aggregation ---

def test_status_priority():
    ok = [ReplicaOutcome(0, make_run(np.full(400, 0.5))), ReplicaOutcome(1, make_run(np.full(400, 0.5)))]
    passed = EstimateSummary(passed=True)
    assert ReplicaAggregator.status(ok, report(), passed) == RunStatus.SUCCESS
    assert ReplicaAggregator.status(ok, report(), EstimateSummary(passed=False)) == RunStatus.BOUND_VIOLATED
    assert ReplicaAggregator.status(ok, report(guaranteed=False), passed) == RunStatus.BOUND_NOT_GUARANTEED

    diverged = [ok[0], ReplicaOutcome(1, make_run(np.ones(3)), fault(1, "DIVERGED"))]
    assert ReplicaAggregator.status(diverged, report(), passed) == RunStatus.FILTER_DIVERGED
    assert ReplicaAggregator.status(diverged, report(guaranteed=False), passed) == RunStatus.BOUND_NOT_GUARANTEED

    partial = [ok[0], ReplicaOutcome(1, None, fault(1))]
    assert ReplicaAggregator.status(partial, report(guaranteed=False), passed) == RunStatus.PARTIAL_FAILURE
    broken = [ReplicaOutcome(0, None, fault(0)), ReplicaOutcome(1, None, fault(1, "ANALYSIS_ERROR"))]
    assert ReplicaAggregator.status(broken, report(), passed) == RunStatus.SYSTEM_ERROR


def test_aggregate_compares_limsup_with_bound():
    outcomes = [ReplicaOutcome(1, make_run(np.full(400, 0.6))), ReplicaOutcome(0, make_run(np.full(400, 0.4)))]
    est = ReplicaAggregator.aggregate(outcomes, report(bound=1.0), nu=0.1)
    assert est.limsup == pytest.approx(0.5)
    assert est.passed
    assert est.standard_error == pytest.approx(0.1)
    assert est.enstrophy_average == pytest.approx(0.1)
    violated = ReplicaAggregator.aggregate(outcomes, report(bound=0.2))
    assert violated.passed is False


def test_aggregate_short_series_falls_back_to_tail_mean():
    est = ReplicaAggregator.aggregate([ReplicaOutcome(0, make_run(np.full(20, 0.3)))], None)
    assert est.limsup is None
    assert est.tail_mean == pytest.approx(0.3)
    assert est.passed is None


def test_aggregate_skips_faulted_replicas():
    outcomes = [ReplicaOutcome(0, make_run(np.full(400, 0.4))),
                ReplicaOutcome(1, make_run(np.full(400, 99.0)), fault(1, "DIVERGED"))]
    est = ReplicaAggregator.aggregate(outcomes, None)
    assert est.limsup == pytest.approx(0.4)
    rows = ReplicaAggregator.replica_results(outcomes)
    assert [r.replica for r in rows] == [0, 1]
    assert rows[1].fault.fault_type == "DIVERGED"


def test_series_frame_is_ordered_by_replica():
    outcomes = [ReplicaOutcome(2, make_run(np.ones(4))), ReplicaOutcome(0, make_run(np.zeros(4)))]
    frame = ReplicaAggregator.series_frame(outcomes)
    assert list(frame["replica"].unique()) == [0, 2]
    assert {"t", "err_H2", "diverged"} <= set(frame.columns)
    assert ReplicaAggregator.series_frame([]).empty


# --- calibration ---

def test_modal_calibration(nse16, modal_nse16):
    result = calibrate_constants(nse16, modal_nse16, corpus_size=500, seed=1)
    assert result.c1 == 1.0
    assert result.h == pytest.approx(modal_nse16.tail_resolution)
    assert 0.0 < result.c2 <= 1.0 + 1e-12
    assert result.c_L > 0.0
    assert result.corpus_size == 500


def test_full_observation_calibration_of_lorenz(lorenz63):
    result = calibrate_constants(lorenz63, ModalObservation.from_stride(3), seed=0)
    assert result.c2 == 0.0
    assert result.c_L == pytest.approx(1.0)


def test_calibration_corpus_minimum(lorenz63):
    with pytest.raises(ValueError):
        calibrate_constants(lorenz63, ModalObservation.from_stride(3), corpus_size=10)


def test_calibration_is_deterministic(nse16, modal_nse16):
    a = calibrate_constants(nse16, modal_nse16, seed=4)
    b = calibrate_constants(nse16, modal_nse16, seed=4)
    assert a == b


# --- identity suite ---

def test_identity_suite_passes_on_small_problems():
    result = run_identity_suite(seed=0, resolutions=(16,), samples=20, ensemble_sizes=(2, 5), ranks=(4, 8))
    assert result.passed, [c for c in result.checks if not c.passed]
    names = {c.name for c in result.checks}
    assert {"bilinear_nse_16", "bilinear_lorenz63", "trace_cancellation", "square_root_property",
            "modal_approximation_of_identity", "volume_approximation_of_identity"} <= names


def test_volume_interpolant_error_scales_with_cell_size():
    rng = np.random.default_rng(3)
    cells = (4, 8, 16, 32)
    ratios = np.asarray(volume_identity_ratios(rng, cells, samples=6)).reshape(len(cells), 6)
    worst = ratios.max(axis=1)
    # one constant for every partition
    assert np.all(worst < VOLUME_IDENTITY_CONSTANT)
    assert np.all(ratios > 1e-3)
    assert worst.max() / worst.min() < 10.0


def test_volume_ratios_skip_partitions_that_do_not_divide_the_grid():
    rng = np.random.default_rng(4)
    assert len(volume_identity_ratios(rng, (4, 12), samples=3, n=16)) == 3

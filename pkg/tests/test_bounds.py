import pytest

from core.errors import ConfigurationError, MissingCalibrationError
from core.schemas import BoundInputs, BoundKind, CovarianceKind, CovarianceSpec, FilterKind, FilterSpec
from diagnostics.bounds import bound_kind_for, check_conditions, inflation_threshold


def threedvar_inputs(**overrides):
    values = dict(nu=0.1, lambda_1=1.0, grashof=2.0, sigma=0.1, h=0.1, q=20, c1=1.0, c2=1.0, c_L=1.0,
                  beta=0.02, trace_CIhC=0.5, horizon=10.0)
    values.update(overrides)
    return BoundInputs(**values)


def ensemble_inputs(**overrides):
    values = dict(nu=0.1, lambda_1=1.0, grashof=2.0, sigma=0.1, h=0.01, q=3, c2=1.0, c_L=1.0, M_u=2.0, mu=1.0)
    values.update(overrides)
    return BoundInputs(**values)


def test_localized_3dvar_bound():
    report = check_conditions(BoundKind.THREEDVAR_LOCALIZED, threedvar_inputs())
    assert report.guaranteed
    assert report.gamma == pytest.approx(3.2)
    assert report.kappa == pytest.approx(0.06)
    assert report.bound == pytest.approx(50.0 / 3.2)
    assert report.enstrophy_bound == pytest.approx((1 / 0.06) * (1 / 32.0 + 1.0) * 50.0)
    assert report.epsilon == pytest.approx(0.01)


def test_general_3dvar_uses_half_the_upper_window():
    report = check_conditions(BoundKind.THREEDVAR, threedvar_inputs())
    assert report.guaranteed
    assert report.kappa == pytest.approx(0.01)
    # ratio 2 fits under nu / (4 c2^2 h^2) = 2.5 but ratio 3 does not
    too_strong = check_conditions(BoundKind.THREEDVAR, threedvar_inputs(beta=0.03))
    assert not too_strong.flags["upper_condition"]
    assert not too_strong.guaranteed
    assert too_strong.notes


def test_cross_block_raises_the_lower_limit():
    plain = check_conditions(BoundKind.THREEDVAR, threedvar_inputs())
    coupled = check_conditions(BoundKind.THREEDVAR, threedvar_inputs(cross_norm=0.01))
    assert coupled.gamma < plain.gamma


def test_weak_variance_inflation_fails_the_lower_condition():
    report = check_conditions(BoundKind.THREEDVAR_LOCALIZED, threedvar_inputs(beta=0.001))
    assert not report.flags["lower_condition"]
    assert not report.guaranteed


def test_missing_calibration_raises():
    with pytest.raises(MissingCalibrationError) as exc:
        check_conditions(BoundKind.THREEDVAR, threedvar_inputs(c1=None, c2=None))
    assert exc.value.missing == ["c1", "c2"]


def test_sigma_and_mu_are_required():
    with pytest.raises(ConfigurationError):
        check_conditions(BoundKind.THREEDVAR_LOCALIZED, threedvar_inputs(sigma=0.0))
    with pytest.raises(ConfigurationError):
        check_conditions(BoundKind.ENKF, ensemble_inputs(mu=None))
    with pytest.raises(ConfigurationError):
        check_conditions(BoundKind.ENSRKF, ensemble_inputs(M_u=None))


def test_enkf_threshold_zeroes_gamma():
    inputs = ensemble_inputs()
    threshold = inflation_threshold(BoundKind.ENKF, inputs)
    assert threshold == pytest.approx(0.01 * 4.0 / 0.15)
    at = check_conditions(BoundKind.ENKF, ensemble_inputs(mu=threshold))
    assert at.gamma == pytest.approx(0.0, abs=1e-9)
    assert at.flags["inflation_condition"]


def test_enkf_above_threshold_is_guaranteed():
    threshold = inflation_threshold(BoundKind.ENKF, ensemble_inputs())
    mu = 2 * threshold
    report = check_conditions(BoundKind.ENKF, ensemble_inputs(mu=mu))
    assert report.guaranteed
    assert report.gamma >= mu / (2 * 0.01)
    assert report.bound == pytest.approx(mu ** 2 * 3 / (report.gamma * 0.01))


def test_ensrkf_threshold_is_three_times_enkf():
    inputs = ensemble_inputs()
    assert inflation_threshold(BoundKind.ENSRKF, inputs) == pytest.approx(3 * inflation_threshold(BoundKind.ENKF, inputs))


def test_enkf_below_threshold_not_guaranteed():
    report = check_conditions(BoundKind.ENKF, ensemble_inputs(mu=0.01))
    assert not report.flags["inflation_condition"]
    assert not report.guaranteed
    assert report.bound is None


def test_strong_inflation_breaks_kappa():
    report = check_conditions(BoundKind.ENKF, ensemble_inputs(mu=100.0, h=0.1))
    assert not report.flags["kappa_condition"]
    assert report.kappa < 0


def test_nudging_reduces_to_3dvar_with_ratio_mu():
    report = check_conditions(BoundKind.NUDGING, threedvar_inputs(mu=2.0, beta=0.02, c1=None))
    threedvar = check_conditions(BoundKind.THREEDVAR, threedvar_inputs())
    assert report.gamma == pytest.approx(threedvar.gamma)
    assert report.kind == BoundKind.NUDGING


def test_bound_kind_for_filter_specs():
    projection = FilterSpec(kind=FilterKind.THREEDVAR, covariance=CovarianceSpec(kind=CovarianceKind.PROJECTION))
    identity = FilterSpec(kind=FilterKind.THREEDVAR, covariance=CovarianceSpec(kind=CovarianceKind.IDENTITY))
    assert bound_kind_for(projection) == BoundKind.THREEDVAR_LOCALIZED
    assert bound_kind_for(identity) == BoundKind.THREEDVAR
    assert bound_kind_for(FilterSpec(kind=FilterKind.ENSRKF)) == BoundKind.ENSRKF
    assert bound_kind_for(FilterSpec(kind=FilterKind.NUDGING)) == BoundKind.NUDGING


def test_report_table_lists_flags():
    table = check_conditions(BoundKind.THREEDVAR_LOCALIZED, threedvar_inputs()).table()
    assert "flag:gamma_positive" in table
    assert "guaranteed" in table

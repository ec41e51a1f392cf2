"""
Sufficient conditions and accuracy bounds for 3DVar, localized 3DVar, EnKF,
EnSRKF and nudging.

Every quantity is evaluated from a BoundInputs record; a report is only
marked guaranteed when every condition flag holds.
"""
import logging
import math
from typing import Dict, List, Optional

import numpy as np

from core.errors import ConfigurationError, MissingCalibrationError
from core.schemas import (
    BoundInputs,
    BoundKind,
    BoundReport,
    CalibrationResult,
    CovarianceKind,
    FilterKind,
    FilterSpec,
)
from covariance.identities import trace_CIhC
from covariance.operators import CovarianceOperator, cross_block_norm
from dynamics.base import DissipativeSystem
from observations.operators import ObservationOperator

logger = logging.getLogger("bounds")

REQUIRED_CONSTANTS = {
    BoundKind.THREEDVAR: ("c1", "c2", "c_L"),
    BoundKind.THREEDVAR_LOCALIZED: ("c2", "c_L"),
    BoundKind.NUDGING: ("c2", "c_L"),
    BoundKind.ENKF: ("c2", "c_L"),
    BoundKind.ENSRKF: ("c2", "c_L"),
}

# w in kappa = nu - w mu c2^2 eps / sigma^2 and gamma = w mu / sigma^2 - c_L^2 M_u^2 / nu
ENSEMBLE_WEIGHTS = {BoundKind.ENKF: 1.5, BoundKind.ENSRKF: 0.5}


def _positive_ratio(numerator: float, denominator: float) -> float:
    return math.inf if denominator == 0 else numerator / denominator


def _check_inputs(kind: BoundKind, inputs: BoundInputs):
    missing = [name for name in REQUIRED_CONSTANTS[kind] if getattr(inputs, name) is None]
    if missing:
        raise MissingCalibrationError(missing)
    if kind != BoundKind.NUDGING and inputs.sigma <= 0:
        raise ConfigurationError(f"{kind.value} bounds need sigma > 0")
    if kind in (BoundKind.THREEDVAR, BoundKind.THREEDVAR_LOCALIZED) and inputs.beta is None:
        raise ConfigurationError(f"{kind.value} bounds need beta")
    if kind in (BoundKind.NUDGING, BoundKind.ENKF, BoundKind.ENSRKF) and inputs.mu is None:
        raise ConfigurationError(f"{kind.value} bounds need mu")
    if kind in ENSEMBLE_WEIGHTS and inputs.M_u is None:
        raise ConfigurationError(f"{kind.value} bounds need M_u from the spin-up")


def _threedvar(kind: BoundKind, inputs: BoundInputs, ratio: float, trace_ratio: Optional[float],
               cross_ratio: float) -> BoundReport:
    """
    ratio = beta / sigma^2, trace_ratio = Tr(C I_h C) / sigma^2, cross_ratio = |P_K C P_Kp| / sigma^2.
    """
    nu, h, c2, c_L = inputs.nu, inputs.h, inputs.c2, inputs.c_L
    forcing_term = c_L ** 2 * nu * inputs.lambda_1 * inputs.grashof ** 2
    c2h2 = c2 ** 2 * h ** 2
    notes: List[str] = []
    if kind == BoundKind.THREEDVAR_LOCALIZED:
        upper = _positive_ratio(nu, 2.0 * c2h2)
        lower = forcing_term
        gamma = 2.0 * ratio - 2.0 * forcing_term
        kappa = nu - 2.0 * ratio * c2h2
    else:
        c1 = inputs.c1 if inputs.c1 is not None else 1.0
        cross_term = c1 ** 2 * c2h2 * cross_ratio ** 2 / nu
        upper = _positive_ratio(nu, 4.0 * c2h2)
        lower = cross_term + forcing_term
        gamma = 2.0 * ratio - 2.0 * cross_term - 2.0 * forcing_term
        kappa = nu / 2.0 - 2.0 * ratio * c2h2

    flags = {
        "upper_condition": ratio <= upper,
        "lower_condition": ratio >= lower,
        "gamma_positive": gamma > 0,
        "kappa_positive": kappa > 0,
    }
    bound = enstrophy = None
    if trace_ratio is not None and gamma > 0:
        bound = trace_ratio / gamma
        if inputs.horizon and kappa > 0:
            enstrophy = (1.0 / kappa) * (1.0 / (gamma * inputs.horizon) + 1.0) * trace_ratio
    elif trace_ratio is None:
        notes.append("Tr(C I_h C) not supplied; bound not evaluated")
    if not flags["upper_condition"]:
        notes.append(f"beta/sigma^2 = {ratio:.4g} exceeds the upper limit {upper:.4g}")
    if not flags["lower_condition"]:
        notes.append(f"beta/sigma^2 = {ratio:.4g} is below the lower limit {lower:.4g}")
    return BoundReport(
        kind=kind,
        inputs=inputs,
        epsilon=inputs.epsilon if inputs.epsilon is not None else h ** 2,
        gamma=gamma,
        kappa=kappa,
        bound=bound,
        enstrophy_bound=enstrophy,
        flags=flags,
        guaranteed=all(flags.values()),
        notes=notes,
    )


def _ensemble(kind: BoundKind, inputs: BoundInputs) -> BoundReport:
    w = ENSEMBLE_WEIGHTS[kind]
    nu, mu, s2 = inputs.nu, inputs.mu, inputs.sigma ** 2
    eps = inputs.epsilon if inputs.epsilon is not None else inputs.h ** 2
    c2, c_L, M_u = inputs.c2, inputs.c_L, inputs.M_u
    damping = w * mu * c2 ** 2 * eps / s2
    threshold = c_L ** 2 * s2 * M_u ** 2 / (w * nu)
    kappa = nu - damping
    gamma = w * mu / s2 - c_L ** 2 * M_u ** 2 / nu
    flags = {
        "kappa_condition": damping <= nu,
        "inflation_condition": mu >= threshold,
        "gamma_positive": gamma > 0,
    }
    notes = []
    if not flags["inflation_condition"]:
        notes.append(f"additive inflation mu = {mu:.4g} is below the threshold {threshold:.4g}")
    if not flags["kappa_condition"]:
        notes.append(f"inflation too strong for the observation resolution (kappa = {kappa:.4g})")
    bound = mu ** 2 * inputs.q / (gamma * s2) if gamma > 0 else None
    return BoundReport(
        kind=kind,
        inputs=inputs,
        epsilon=eps,
        gamma=gamma,
        kappa=kappa,
        bound=bound,
        flags=flags,
        guaranteed=all(flags.values()),
        notes=notes,
    )


def inflation_threshold(kind: BoundKind, inputs: BoundInputs) -> float:
    """Smallest additive inflation mu meeting the ensemble inflation condition."""
    w = ENSEMBLE_WEIGHTS[kind]
    return inputs.c_L ** 2 * inputs.sigma ** 2 * inputs.M_u ** 2 / (w * inputs.nu)


def check_conditions(kind: BoundKind, inputs: BoundInputs) -> BoundReport:
    """Evaluate condition flags, gamma, kappa and the accuracy bound for one filter kind."""
    _check_inputs(kind, inputs)
    if kind in ENSEMBLE_WEIGHTS:
        report = _ensemble(kind, inputs)
    elif kind == BoundKind.NUDGING:
        # nudging is 3DVar with C = mu sigma^2 I, so beta / sigma^2 = mu and the cross block vanishes
        s2 = inputs.sigma ** 2
        trace_ratio = None
        if inputs.trace_CIhC is not None:
            trace_ratio = inputs.trace_CIhC / s2 if s2 > 0 else 0.0
        report = _threedvar(BoundKind.NUDGING, inputs, inputs.mu, trace_ratio, 0.0)
    else:
        s2 = inputs.sigma ** 2
        trace_ratio = None if inputs.trace_CIhC is None else inputs.trace_CIhC / s2
        report = _threedvar(kind, inputs, inputs.beta / s2, trace_ratio, inputs.cross_norm / s2)

    verdict = "guaranteed" if report.guaranteed else "NOT guaranteed"
    log = logger.info if report.guaranteed else logger.warning
    log(f"{kind.value}: gamma={report.gamma:.4g}, kappa={report.kappa:.4g}, bound={report.bound}, {verdict}")
    return report


# --- inputs from a configured experiment ---

def bound_kind_for(spec: FilterSpec) -> BoundKind:
    if spec.kind == FilterKind.THREEDVAR:
        if spec.covariance.kind == CovarianceKind.PROJECTION:
            return BoundKind.THREEDVAR_LOCALIZED
        return BoundKind.THREEDVAR
    return BoundKind(spec.kind.value)


def build_bound_inputs(system: DissipativeSystem, op: ObservationOperator, spec: FilterSpec, sigma: float,
                       calibration: CalibrationResult, M_u: float, horizon: Optional[float] = None,
                       covariance: Optional[CovarianceOperator] = None) -> BoundInputs:
    """Collect every bound input; Lorenz systems map through the finite-dimensional profile."""
    values: Dict[str, Optional[float]] = dict(
        nu=system.nu,
        lambda_1=system.lambda_1,
        grashof=system.grashof,
        sigma=sigma,
        h=calibration.h,
        q=op.rank,
        c1=calibration.c1,
        c2=calibration.c2,
        c_L=calibration.c_L,
        epsilon=calibration.h ** 2,
        M_u=M_u,
        horizon=horizon,
    )
    if spec.kind == FilterKind.THREEDVAR:
        values["beta"] = spec.covariance.beta
        if covariance is not None:
            values["cross_norm"] = cross_block_norm(covariance, op.projection)
            values["trace_CIhC"] = trace_CIhC(covariance, op)
    elif spec.kind == FilterKind.NUDGING:
        c = spec.nudging_mu * sigma ** 2
        values["mu"] = spec.nudging_mu
        values["beta"] = c
        values["trace_CIhC"] = c ** 2 * float(np.sum(op.matrix() ** 2))
    else:
        values["mu"] = spec.inflation.additive
    return BoundInputs(**values)

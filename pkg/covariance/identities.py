"""
Trace functionals of covariance operators and the algebraic identities the
ensemble error analysis relies on. Residual helpers return raw differences;
callers scale them.
"""
from typing import Dict, Tuple

import numpy as np

from core.errors import UnsupportedOperatorError
from covariance.operators import CovarianceOperator, cmu_covariance, ensemble_cov, localize
from observations.operators import ObservationOperator, OrthogonalProjection


def trace_CIhC(C: CovarianceOperator, op: ObservationOperator) -> float:
    """Tr(C O*O C) = sum_n |C O* e_n|^2 over the q observation directions."""
    CO = C.apply(op.matrix())
    return float(np.sum(CO ** 2))


def trace_CIhC_dense(C: CovarianceOperator, op: ObservationOperator) -> float:
    """Dense oracle: Tr(C I_h C) from the materialised d x d matrices."""
    Cd = C.dense()
    O = op.matrix()
    return float(np.trace(Cd @ O.T @ O @ Cd))


def _require_projection(op: ObservationOperator) -> OrthogonalProjection:
    if not op.is_orthogonal_projection:
        raise UnsupportedOperatorError(
            f"identity requires O*O to be an orthogonal projection (got {op.kind.value})", op.kind.value
        )
    return op.projection


def trace_cancellation_terms(errors: np.ndarray, op: ObservationOperator) -> Tuple[float, float]:
    """
    Both sides of
        (1/K) sum_k (C~ O*O e_k, e_k) - Tr(C~ O*O C~) = (C~ e_bar, e_bar),
    with C~ the localised ensemble covariance of the errors.
    """
    P = _require_projection(op)
    errors = np.atleast_2d(np.asarray(errors, dtype=float))
    Ct = localize(ensemble_cov(errors), P)
    K = errors.shape[0]
    Ie = op.interpolate(errors)
    quad = float(np.sum(Ct.apply(Ie) * errors)) / K
    lhs = quad - trace_CIhC(Ct, op)
    mean = errors.mean(axis=0)
    rhs = Ct.quadratic(mean)
    return lhs, rhs


def trace_cancellation_residual(errors: np.ndarray, op: ObservationOperator) -> float:
    lhs, rhs = trace_cancellation_terms(errors, op)
    return lhs - rhs


def localized_trace(errors: np.ndarray, projection: OrthogonalProjection) -> Tuple[float, float]:
    """Tr(C~) computed from the operator and from (1/K) sum |P e_k|^2 - |P e_bar|^2."""
    errors = np.atleast_2d(np.asarray(errors, dtype=float))
    Ct = localize(ensemble_cov(errors), projection)
    Pe = projection.apply(errors)
    direct = float(np.sum(Pe ** 2)) / errors.shape[0] - float(np.sum(Pe.mean(axis=0) ** 2))
    return Ct.trace(), direct


def localized_quadratic_residual(C: CovarianceOperator, op: ObservationOperator, v: np.ndarray) -> float:
    """(C~ O*O v, v) - (C P v, P v) for a modal operator."""
    P = _require_projection(op)
    Ct = localize(C, P)
    Pv = P.apply(v)
    return float(np.dot(Ct.apply(op.interpolate(v)), v)) - C.quadratic(Pv)


def additive_inflation_terms(errors: np.ndarray, op: ObservationOperator, mu: float) -> Dict[str, float]:
    """
    Tr(C_mu O*O C_mu) for C_mu = 1/4 C~ + mu P, directly and as
    (1/16) Tr(C~^2 P) + mu^2 Tr(P) + (1/2) mu Tr(C~ P).
    """
    P = _require_projection(op)
    C = ensemble_cov(errors)
    Ct = localize(C, P)
    Cmu = cmu_covariance(C, P, mu)
    terms = {
        "quadratic": Ct.hs_norm_sq() / 16.0,
        "additive": mu ** 2 * P.rank,
        "cross": 0.5 * mu * Ct.trace(),
    }
    terms["total"] = terms["quadratic"] + terms["additive"] + terms["cross"]
    terms["direct"] = trace_CIhC(Cmu, op)
    return terms

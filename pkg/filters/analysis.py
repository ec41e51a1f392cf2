"""
Discrete analysis steps: Kalman/3DVar mean update, EnKF with perturbed
observations, and the symmetric square-root (EnSRKF) transform.

Ensembles are stored as rows (K, d); the anomaly matrix S_hat of the
formulas is the transpose of the centred rows.
"""
import logging
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve, eigh

from core.errors import AnalysisError, DegenerateEnsembleError
from core.schemas import FilterKind
from covariance.operators import CovarianceOperator, ensemble_cov

logger = logging.getLogger("analysis")

CONDITION_LIMIT = 1e14

Covariance = Union[CovarianceOperator, np.ndarray]


@dataclass
class AnalysisResult:
    mean: np.ndarray
    gain: np.ndarray
    members: Optional[np.ndarray] = None
    covariance: Optional[np.ndarray] = None
    condition_number: float = 1.0


def _apply(C: Covariance, X: np.ndarray) -> np.ndarray:
    """C applied to the rows of X."""
    if isinstance(C, np.ndarray):
        return X @ C
    return C.apply(X)


def kalman_gain(C: Covariance, O: np.ndarray, Gamma: np.ndarray):
    """K = C O^T (O C O^T + Gamma)^{-1}; returns (K, cond(O C O^T + Gamma))."""
    OC = _apply(C, O)
    S = O @ OC.T + Gamma
    S = 0.5 * (S + S.T)
    try:
        cond = float(np.linalg.cond(S))
        if not np.isfinite(cond) or cond > CONDITION_LIMIT:
            raise AnalysisError(f"innovation matrix is singular (condition number {cond:.3e})", cond)
        factor = cho_factor(S)
    except LinAlgError as e:
        raise AnalysisError(f"innovation matrix could not be factorised: {e}", float("inf")) from e
    gain = cho_solve(factor, OC).T
    return gain, cond


def kalman_update(mean: np.ndarray, C: Covariance, O: np.ndarray, y: np.ndarray, Gamma: np.ndarray,
                  posterior_covariance: bool = False) -> AnalysisResult:
    """m = m_hat + K (y - O m_hat); C is held fixed for 3DVar."""
    gain, cond = kalman_gain(C, O, Gamma)
    post = mean + gain @ (y - O @ mean)
    cov = None
    if posterior_covariance:
        Cd = C if isinstance(C, np.ndarray) else C.dense()
        cov = Cd - gain @ O @ Cd
    return AnalysisResult(post, gain, covariance=cov, condition_number=cond)


def enkf_update(members: np.ndarray, O: np.ndarray, y: np.ndarray, Gamma: np.ndarray,
                perturbations: np.ndarray, C: Optional[Covariance] = None) -> AnalysisResult:
    """
    Perturbed-observation EnKF: m_k = m_hat_k + K (y + Gamma^{1/2} xi_k - O m_hat_k).
    `perturbations` holds the standard-normal xi_k as rows; `C` overrides the
    raw forecast covariance (localised or inflated).
    """
    members = np.atleast_2d(members)
    K = members.shape[0]
    if K < 2:
        raise DegenerateEnsembleError(f"EnKF analysis needs K >= 2 members, got {K}", K)
    C = ensemble_cov(members) if C is None else C
    gain, cond = kalman_gain(C, O, Gamma)
    root = np.linalg.cholesky(Gamma)
    observed = y + perturbations @ root.T
    posterior = members + (observed - members @ O.T) @ gain.T
    return AnalysisResult(posterior.mean(axis=0), gain, members=posterior, condition_number=cond)


def square_root_transform(anomalies: np.ndarray, O: np.ndarray, Gamma: np.ndarray) -> np.ndarray:
    """T = (I + (1/K) S_hat^T O^T Gamma^{-1} O S_hat)^{-1/2}, symmetric."""
    K = anomalies.shape[0]
    Y = anomalies @ O.T
    try:
        Gi_Y = cho_solve(cho_factor(Gamma), Y.T)
    except LinAlgError as e:
        raise AnalysisError(f"observation covariance is not positive definite: {e}", float("inf")) from e
    M = np.eye(K) + (Y @ Gi_Y) / K
    w, V = eigh(0.5 * (M + M.T))
    return (V * w ** -0.5) @ V.T


def ensrkf_update(members: np.ndarray, O: np.ndarray, y: np.ndarray, Gamma: np.ndarray) -> AnalysisResult:
    """
    Mean by the Kalman update with the raw ensemble covariance; anomalies by
    S = S_hat T so that (1/K) S S^T = (I - K O) C_hat.
    """
    members = np.atleast_2d(members)
    K = members.shape[0]
    if K < 2:
        raise DegenerateEnsembleError(f"EnSRKF analysis needs K >= 2 members, got {K}", K)
    mean = members.mean(axis=0)
    anomalies = members - mean
    C = ensemble_cov(members)
    gain, cond = kalman_gain(C, O, Gamma)
    post_mean = mean + gain @ (y - O @ mean)
    T = square_root_transform(anomalies, O, Gamma)
    post_anomalies = T @ anomalies
    return AnalysisResult(post_mean, gain, members=post_mean + post_anomalies, condition_number=cond)


def square_root_residual(members: np.ndarray, O: np.ndarray, Gamma: np.ndarray) -> float:
    """Relative residual of S T (S T)^T = K (I - K O) C_hat."""
    anomalies = members - members.mean(axis=0)
    K = anomalies.shape[0]
    C_hat = anomalies.T @ anomalies / K
    gain, _ = kalman_gain(C_hat, O, Gamma)
    ST = (square_root_transform(anomalies, O, Gamma) @ anomalies).T
    lhs = ST @ ST.T
    rhs = K * (C_hat - gain @ O @ C_hat)
    return float(np.linalg.norm(lhs - rhs) / max(np.linalg.norm(rhs), 1e-300))


def analysis_update_discrete(kind: FilterKind, prior: np.ndarray, y: np.ndarray, O: np.ndarray,
                             Gamma: np.ndarray, C: Optional[Covariance] = None,
                             perturbations: Optional[np.ndarray] = None) -> AnalysisResult:
    """Dispatch on filter kind; `prior` is a mean for 3DVar and an ensemble otherwise."""
    if kind == FilterKind.THREEDVAR:
        if C is None:
            raise ValueError("3DVar analysis needs a background covariance")
        return kalman_update(prior, C, O, y, Gamma)
    if kind == FilterKind.ENKF:
        if perturbations is None:
            raise ValueError("EnKF analysis needs observation perturbations")
        return enkf_update(prior, O, y, Gamma, perturbations, C)
    if kind == FilterKind.ENSRKF:
        return ensrkf_update(prior, O, y, Gamma)
    raise ValueError(f"no discrete analysis for {kind.value}")

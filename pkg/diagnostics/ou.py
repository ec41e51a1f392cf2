"""
Monte Carlo check of the auxiliary Ornstein-Uhlenbeck bound

    dz + nu A z dt = sigma^-1 C O* dW,   sigma^2 E|A^alpha z|^2 <= lambda_1^(2 alpha - 1) Tr(C O*O C) / (2 nu).

A must be diagonal in the state coordinates. z(T) is sampled from its exact
Gaussian law by default, so that estimate carries no time-stepping bias; the
step-by-step path integrator gives an independent estimate of the same moment.
"""
import logging
from typing import Optional

import numpy as np
from scipy.linalg import eigh

from core.rng import NoiseStreams
from core.schemas import OUBoundReport
from covariance.operators import CovarianceOperator
from observations.operators import ObservationOperator

logger = logging.getLogger("ou")


def ou_covariance(G: np.ndarray, eigenvalues: np.ndarray, nu: float, sigma: float,
                  horizon: Optional[float] = None) -> np.ndarray:
    """Covariance of z(T) started from 0: sigma^-2 (G G^T)_ij (1 - e^{-nu (l_i + l_j) T}) / (nu (l_i + l_j))."""
    rates = nu * (eigenvalues[:, None] + eigenvalues[None, :])
    decay = 1.0 if horizon is None else -np.expm1(-rates * horizon)
    return (G @ G.T) * decay / (rates * sigma ** 2)


def simulate_ou(G: np.ndarray, eigenvalues: np.ndarray, nu: float, sigma: float, horizon: float, dt: float,
                n_paths: int, streams: NoiseStreams) -> np.ndarray:
    """
    Integrate n_paths copies of dz = -nu A z dt + sigma^-1 G dW from z = 0 with the
    integrating factor, injecting each increment at mid-step. Returns z(horizon) row-wise.
    """
    if dt <= 0 or horizon <= 0:
        raise ValueError("path integration needs dt > 0 and a finite horizon > 0")
    n_steps = max(int(round(horizon / dt)), 1)
    dt = horizon / n_steps
    decay = np.exp(-nu * eigenvalues * dt)
    half = np.exp(-0.5 * nu * eigenvalues * dt)
    z = np.zeros((n_paths, G.shape[0]))
    for n in range(n_steps):
        dW = streams.increment("ou", 1, n, (n_paths, G.shape[1]), dt)
        z = z * decay + (dW @ G.T) * half / sigma
    return z


def ou_bound_check(C: CovarianceOperator, op: ObservationOperator, eigenvalues: np.ndarray, nu: float,
                   sigma: float, n_samples: int = 256, horizon: Optional[float] = None, alpha: float = 0.5,
                   seed: int = 0, dt: Optional[float] = None) -> OUBoundReport:
    """
    Estimate sigma^2 E|A^alpha z(T)|^2 and compare it with the bound. By default z(T) is
    drawn from its exact law; with `dt` the paths are integrated step by step instead.
    """
    if sigma <= 0:
        raise ValueError("OU bound needs sigma > 0")
    if not 0.0 <= alpha <= 0.5:
        raise ValueError("alpha must lie in [0, 1/2]")
    if dt is not None and horizon is None:
        raise ValueError("path integration needs a finite horizon")
    eigenvalues = np.asarray(eigenvalues, dtype=float)
    G = C.apply(op.matrix()).T
    bound = eigenvalues.min() ** (2 * alpha - 1) * float(np.sum(G ** 2)) / (2.0 * nu)
    support = np.nonzero(np.linalg.norm(G, axis=1) > 0)[0]
    if support.size == 0:
        return OUBoundReport(estimate=0.0, standard_error=0.0, bound=bound, expected=0.0, alpha=alpha,
                             horizon=horizon, n_samples=n_samples, passed=True)

    lam = eigenvalues[support]
    cov = ou_covariance(G[support], lam, nu, sigma, horizon)
    if dt is None:
        w, V = eigh(0.5 * (cov + cov.T))
        root = V * np.sqrt(np.clip(w, 0.0, None))
        xi = NoiseStreams(seed).generator("ou", 0, 0).standard_normal((n_samples, support.size))
        z = xi @ root.T
    else:
        z = simulate_ou(G[support], lam, nu, sigma, horizon, dt, n_samples, NoiseStreams(seed))
    weights = lam ** (2 * alpha)
    samples = sigma ** 2 * (z ** 2 @ weights)
    estimate = float(samples.mean())
    se = float(samples.std(ddof=1) / np.sqrt(n_samples)) if n_samples > 1 else 0.0
    expected = sigma ** 2 * float(np.diag(cov) @ weights)
    passed = estimate <= bound + 3.0 * se
    logger.info(f"OU check: estimate {estimate:.4e} +/- {se:.2e}, bound {bound:.4e}, passed={passed}")
    return OUBoundReport(estimate=estimate, standard_error=se, bound=bound, expected=expected, alpha=alpha,
                         horizon=horizon, n_samples=n_samples, passed=passed)

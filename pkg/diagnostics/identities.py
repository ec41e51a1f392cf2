"""
Exact-algebra identity suite: bilinear-term cancellation, trace identities of
the localized ensemble covariance, the square-root property and the modal and
volume-element approximation-of-identity inequalities.
"""
import logging
from typing import Callable, List, Sequence

import numpy as np

from core.rng import NoiseStreams
from core.schemas import IdentityCheck, IdentitySuiteReport
from core.spectral import SpectralGrid
from covariance.identities import (
    additive_inflation_terms,
    localized_quadratic_residual,
    localized_trace,
    trace_cancellation_terms,
)
from covariance.operators import ensemble_cov
from dynamics.lorenz import Lorenz63, Lorenz96
from dynamics.navier_stokes import NavierStokes2D
from filters.analysis import square_root_residual
from observations.operators import ModalObservation, VolumeObservation

logger = logging.getLogger("identities")

BILINEAR_TOL = 1e-10
CANCELLATION_TOL = 1e-11
SQUARE_ROOT_TOL = 1e-10
TRACE_TOL = 1e-12
# |u - I_h u| <= c h |u|_V with one c for every partition
VOLUME_IDENTITY_CONSTANT = 1.0
VOLUME_GRID = 64


def _relative(diff: float, *scales: float) -> float:
    scale = max(sum(abs(s) for s in scales), 1e-300)
    return abs(diff) / scale


def _check(name: str, residuals: Sequence[float], tol: float) -> IdentityCheck:
    worst = float(max(residuals)) if len(residuals) else 0.0
    passed = bool(np.isfinite(worst) and worst < tol)
    log = logger.info if passed else logger.error
    log(f"{name}: worst residual {worst:.3e} (tol {tol:.0e})")
    return IdentityCheck(name=name, residual=worst, tolerance=tol, passed=passed)


def bilinear_residuals(system, draw: Callable[[], np.ndarray], samples: int) -> List[float]:
    """max of the relative residuals of <B(u,v),v> = 0 and <B(u,v),w> = -<B(u,w),v>."""
    out = []
    for _ in range(samples):
        u, v, w = draw(), draw(), draw()
        Buv = system.bilinear(u, v)
        Buw = system.bilinear(u, w)
        orth = _relative(float(np.dot(Buv, v)), np.linalg.norm(Buv) * np.linalg.norm(v))
        anti = _relative(float(np.dot(Buv, w) + np.dot(Buw, v)),
                         np.linalg.norm(Buv) * np.linalg.norm(w), np.linalg.norm(Buw) * np.linalg.norm(v))
        out.append(max(orth, anti))
    return out


def volume_identity_ratios(rng: np.random.Generator, cells: Sequence[int], samples: int,
                           n: int = VOLUME_GRID) -> List[float]:
    """|u - I_h u| / (h |u|_V) for volume-element interpolants on M x M partitions of an n-grid."""
    spectrum = NavierStokes2D(SpectralGrid(n), nu=1.0).spectrum
    u = spectrum.random_coordinates(rng, size=samples)
    norm_V = np.sqrt(np.einsum("sd,d,sd->s", u, spectrum.eigenvalues, u))
    out = []
    for M in cells:
        if n % M:
            logger.warning(f"skipping {M} x {M} partition: does not divide the {n}-grid")
            continue
        op = VolumeObservation(spectrum, cells=M)
        ratios = np.linalg.norm(u - op.interpolate(u), axis=1) / (op.h * norm_V)
        logger.info(f"volume interpolant M={M} (h={op.h:.3e}): worst ratio {ratios.max():.3e}")
        out.extend(float(r) for r in ratios)
    return out


def run_identity_suite(seed: int = 0, resolutions: Sequence[int] = (64, 128), samples: int = 200,
                       ensemble_sizes: Sequence[int] = (2, 5, 10), ranks: Sequence[int] = (4, 16, 64),
                       volume_cells: Sequence[int] = (4, 8, 16, 32)) -> IdentitySuiteReport:
    streams = NoiseStreams(seed)
    rng = streams.generator("identities", 0, 0)
    checks: List[IdentityCheck] = []

    for n in resolutions:
        nse = NavierStokes2D(SpectralGrid(n), nu=1.0)
        checks.append(_check(
            f"bilinear_nse_{n}",
            bilinear_residuals(nse, lambda: nse.spectrum.random_coordinates(rng), samples),
            BILINEAR_TOL,
        ))
    for system in (Lorenz63(), Lorenz96()):
        checks.append(_check(
            f"bilinear_{system.name}",
            bilinear_residuals(system, lambda: rng.standard_normal(system.dim), samples),
            BILINEAR_TOL,
        ))

    cancel, trcompute, infl, local = [], [], [], []
    per_cell = max(samples // (len(ensemble_sizes) * len(ranks)), 1)
    for K in ensemble_sizes:
        for q in ranks:
            op = ModalObservation(2 * q, np.arange(q), resolution=1.0)
            for _ in range(per_cell):
                errors = rng.standard_normal((K, op.dim)) + rng.standard_normal(op.dim)
                lhs, rhs = trace_cancellation_terms(errors, op)
                cancel.append(_relative(lhs - rhs, lhs, rhs))
                from_op, direct = localized_trace(errors, op.projection)
                trcompute.append(_relative(from_op - direct, from_op, direct))
                terms = additive_inflation_terms(errors, op, mu=float(rng.uniform(0.1, 2.0)))
                infl.append(_relative(terms["direct"] - terms["total"], terms["direct"], terms["total"]))
                v = rng.standard_normal(op.dim)
                C = ensemble_cov(errors)
                local.append(_relative(localized_quadratic_residual(C, op, v), C.quadratic(op.projection.apply(v))))
    checks.append(_check("trace_cancellation", cancel, CANCELLATION_TOL))
    checks.append(_check("localized_trace", trcompute, TRACE_TOL))
    checks.append(_check("additive_inflation_trace", infl, TRACE_TOL))
    checks.append(_check("localized_quadratic_form", local, TRACE_TOL))

    sqrt_res = []
    for _ in range(samples):
        K = int(rng.integers(2, 9))
        q = int(rng.integers(1, 7))
        d = q + int(rng.integers(1, 6))
        members = rng.standard_normal((K, d))
        O = rng.standard_normal((q, d))
        L = rng.standard_normal((q, q))
        Gamma = L @ L.T + q * np.eye(q)
        sqrt_res.append(square_root_residual(members, O, Gamma))
    checks.append(_check("square_root_property", sqrt_res, SQUARE_ROOT_TOL))

    approx = []
    for n in resolutions:
        spectrum = NavierStokes2D(SpectralGrid(n), nu=1.0).spectrum
        op = ModalObservation.from_shell(spectrum, max_wavenumber_sq=8.0)
        for _ in range(max(samples // len(resolutions), 1)):
            u = spectrum.random_coordinates(rng)
            lhs = float(np.linalg.norm(u - op.interpolate(u)))
            rhs = op.tail_resolution * float(np.sqrt(np.dot(u, spectrum.eigenvalues * u)))
            approx.append(max(lhs - rhs, 0.0) / rhs)
    checks.append(_check("modal_approximation_of_identity", approx, TRACE_TOL))
    checks.append(_check(
        "volume_approximation_of_identity",
        volume_identity_ratios(rng, volume_cells, max(samples // len(volume_cells), 1)),
        VOLUME_IDENTITY_CONSTANT,
    ))

    return IdentitySuiteReport(seed=seed, checks=checks)

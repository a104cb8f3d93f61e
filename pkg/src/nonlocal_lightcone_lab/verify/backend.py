from __future__ import annotations

import logging
import math
from typing import Optional, Sequence

import numpy as np

from ..cutoff import AnalyticExtension, GaussianFunction, HSResolution, SmoothFunction
from ..models import InequalityReport
from ..opcalc import HermitianOperator, apply_function_dense, hs_apply
from .reports import spectral_norm


logger = logging.getLogger(__name__)

HS_TOLERANCE = 1e-6
# Share of cases whose reported quadrature error must cover the observed one.
MIN_COVERAGE = 0.9
MAX_SIZE = 30
SPECTRAL_RADIUS = 1.5
# Extension order above p; the extension measure then vanishes like |Im z|^(p+4) at the real axis.
EXTENSION_MARGIN = 3
# Errors below this are roundoff and count as covered.
ROUNDOFF_FLOOR = 1e-12


def random_hermitian(size: int, rng: np.random.Generator, radius: float = SPECTRAL_RADIUS) -> HermitianOperator:
    G = rng.standard_normal((size, size)) + 1j * rng.standard_normal((size, size))
    A = 0.5 * (G + G.conj().T)
    return HermitianOperator(A * (radius / spectral_norm(A)), f"random{size}")


def _reference(A: HermitianOperator, f: SmoothFunction, p: int) -> np.ndarray:
    return apply_function_dense(A, lambda v: np.asarray(f.derivative(v, p)) / math.factorial(p)).matrix


def hs_backend_check(
    trials: int,
    seed: int = 0,
    *,
    f: Optional[SmoothFunction] = None,
    orders: Sequence[int] = (0, 1),
    max_size: int = MAX_SIZE,
    tolerance: float = HS_TOLERANCE,
    resolution: Optional[HSResolution] = None,
) -> InequalityReport:
    """
    Helffer-Sjostrand quadrature against eigendecomposition on random Hermitian matrices.

    f defaults to a unit-width Gaussian: it decays on both sides, so the p = 0 integral
    converges, and its derivatives stay moderate. The last margin is the coverage of the
    reported error estimate.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    fn: SmoothFunction = f if f is not None else GaussianFunction(width=1.0)
    rng = np.random.default_rng(seed)
    margins, samples = [], []
    errors, covered = [], 0
    for trial in range(trials):
        A = random_hermitian(int(rng.integers(4, max_size + 1)), rng)
        for p in orders:
            res = hs_apply(A, AnalyticExtension(fn, p + EXTENSION_MARGIN), p, resolution)
            observed = spectral_norm(np.asarray(res.operator) - _reference(A, fn, p))
            errors.append(observed)
            covered += int(res.error_estimate + ROUNDOFF_FLOOR >= observed)
            margins.append(tolerance - observed)
            samples.append(float(trial))
    coverage = covered / len(errors)
    margins.append(coverage - MIN_COVERAGE)
    samples.append(float(trials))
    logger.info("hs backend: max error %.3e, estimate coverage %.2f", max(errors), coverage)
    return InequalityReport.from_margins(
        "hs_backend",
        margins,
        tolerance=0.0,
        samples=samples,
        details={"orders": list(orders), "max_error": max(errors), "coverage": coverage, "cases": len(errors)},
    )

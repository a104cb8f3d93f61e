from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional, Union

import numpy as np
import scipy.linalg

from ..errors import EigensolverError, HypothesisError


logger = logging.getLogger(__name__)

# Operator inequalities: min-eig(RHS - LHS) >= -OPERATOR_RTOL * ||RHS||.
OPERATOR_RTOL = 1e-8
STABILITY_TOLERANCE = 0.2
# Below this a fitted constant counts as zero in stability comparisons.
ZERO_CONSTANT = 1e-12


@dataclass(frozen=True)
class ProofParameters:
    """delta = (c - kappa)/3 and c' = kappa + delta unless overridden."""

    kappa: float
    c: float
    delta: float
    c_prime: float


def proof_parameters(kappa: float, c: float, delta: Optional[float] = None) -> ProofParameters:
    if not (c > kappa):
        raise HypothesisError(f"light-cone speed c={c} must exceed kappa={kappa}", c=c, kappa=kappa)
    d = (c - kappa) / 3.0 if delta is None else float(delta)
    if not (0 < d < c - kappa):
        raise ValueError(f"delta must lie in (0, c - kappa) = (0, {c - kappa}), got {d}")
    return ProofParameters(kappa=float(kappa), c=float(c), delta=d, c_prime=float(kappa) + d)


def min_eigenvalue(M: np.ndarray) -> float:
    if M.size == 0:
        return 0.0
    herm = 0.5 * (M + M.conj().T)
    try:
        return float(scipy.linalg.eigvalsh(herm, subset_by_index=[0, 0])[0])
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError, ValueError) as e:
        raise EigensolverError("min eigenvalue computation failed", size=M.shape[0], cause=str(e)) from e


def spectral_norm(M: np.ndarray) -> float:
    return float(np.linalg.norm(M, 2)) if M.size else 0.0


def smallest_constant(A: np.ndarray, B: Union[np.ndarray, float], tol: float = 0.0) -> float:
    """
    Smallest C >= 0 with A + C B >= 0, for B positive definite (matrix or positive scalar).

    Zero when A is already within half of `tol` of positivity. Otherwise C closes the gap
    to zero, so the margins recomputed at C sit at round-off rather than on the -tol edge.
    Matrix B goes through the generalized problem (-A, B).
    """
    herm = 0.5 * (A + A.conj().T)
    if min_eigenvalue(herm) >= -0.5 * tol:
        return 0.0
    if np.isscalar(B) or np.ndim(B) == 0:
        b = float(B)
        if b <= 0:
            raise ValueError("the constant's coefficient must be positive")
        return max(0.0, -min_eigenvalue(herm) / b)
    Bh = 0.5 * (B + B.conj().T)
    n = herm.shape[0]
    try:
        top = scipy.linalg.eigh(-herm, Bh, eigvals_only=True, subset_by_index=[n - 1, n - 1])
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError, ValueError) as e:
        raise EigensolverError("generalized eigenproblem for the fitted constant failed", size=n, cause=str(e)) from e
    return max(0.0, float(top[0]))


def scalar_constant(excess: float, coef: float, tol: float = 0.0) -> float:
    """Smallest C >= 0 with excess <= C coef; zero when excess is within half of `tol`."""
    if excess <= 0.5 * tol:
        return 0.0
    return math.inf if coef <= 0 else excess / coef


def stability_verdict(values: Iterable[float], tolerance: float = STABILITY_TOLERANCE) -> bool:
    """True when all values are finite and agree within +/- tolerance of the largest."""
    vals = [float(v) for v in values]
    if not vals or not all(math.isfinite(v) for v in vals):
        return False
    hi, lo = max(vals), min(vals)
    if hi <= ZERO_CONSTANT:
        return True
    return (hi - lo) <= tolerance * hi


def scale_uniformity_verdict(by_scale: Mapping[float, float], tolerance: float = STABILITY_TOLERANCE) -> bool:
    """
    True when all constants are finite and none exceeds the one fitted at the smallest scale
    by more than +tolerance. Constants that shrink as the scale grows stay uniform.
    """
    vals = [float(by_scale[s]) for s in sorted(by_scale)]
    if not vals or not all(math.isfinite(v) for v in vals):
        return False
    hi = max(vals)
    if hi <= ZERO_CONSTANT:
        return True
    return hi <= (1.0 + tolerance) * vals[0]


def operator_tolerance(rhs_norms: Iterable[float], rtol: float = OPERATOR_RTOL) -> float:
    return rtol * max([1.0, *[float(v) for v in rhs_norms]])

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate

from .errors import DivergenceError, QuadratureError


logger = logging.getLogger(__name__)

DEFAULT_EPSABS = 1e-13
DEFAULT_EPSREL = 1e-11
DEFAULT_LIMIT = 200
# Dyadic tail: stop once a piece is this small relative to the running total.
TAIL_RTOL = 1e-12
TAIL_MAX_PIECES = 64
# Piece ratios at or above this are treated as non-decaying.
DIVERGENT_RATIO = 1.0 - 1e-3


@dataclass(frozen=True)
class QuadResult:
    value: float
    error: float

    def __float__(self) -> float:
        return float(self.value)

    def __add__(self, other: "QuadResult") -> "QuadResult":
        return QuadResult(self.value + other.value, self.error + other.error)

    def scaled(self, factor: float) -> "QuadResult":
        return QuadResult(self.value * factor, self.error * abs(factor))


ZERO = QuadResult(0.0, 0.0)


def integrate_interval(
    f: Callable[[float], float],
    a: float,
    b: float,
    *,
    points: Optional[Sequence[float]] = None,
    epsabs: float = DEFAULT_EPSABS,
    epsrel: float = DEFAULT_EPSREL,
    limit: int = DEFAULT_LIMIT,
) -> QuadResult:
    """Adaptive quadrature of f over [a, b] with the error estimate QUADPACK reports."""
    if b <= a:
        return ZERO
    inner = None
    if points is not None:
        inner = sorted(float(p) for p in points if a < p < b)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        out = integrate.quad(f, a, b, points=inner or None, epsabs=epsabs, epsrel=epsrel, limit=limit, full_output=1)
    value, error = float(out[0]), float(out[1])
    if not (np.isfinite(value) and np.isfinite(error)):
        raise QuadratureError("quadrature produced a non-finite value", a=a, b=b, value=value, error=error)
    if len(out) > 3:
        # QUADPACK flagged trouble; accept only if the reported error is still small.
        if error > max(1e3 * epsabs, 1e-6 * abs(value)):
            raise QuadratureError("adaptive quadrature did not converge", a=a, b=b, value=value, error=error)
        logger.debug("quad warning accepted on [%s, %s] (error=%.3e)", a, b, error)
    return QuadResult(value, error)


def dyadic_tail(
    f: Callable[[float], float],
    start: float,
    *,
    rtol: float = TAIL_RTOL,
    max_pieces: int = TAIL_MAX_PIECES,
    what: str = "integral",
) -> QuadResult:
    """
    Integral of f over [start, inf) summed over dyadic pieces [start 2^k, start 2^(k+1)].

    If the pieces have not dropped below rtol * total after max_pieces, the remainder is
    extrapolated geometrically from the ratio of the last two pieces; a ratio near or above
    one is reported as divergence.
    """
    if start <= 0:
        raise ValueError(f"dyadic_tail start must be > 0, got {start}")
    total = ZERO
    pieces: list[float] = []
    lo = float(start)
    for _ in range(max_pieces):
        hi = 2.0 * lo
        piece = integrate_interval(f, lo, hi)
        total = total + piece
        pieces.append(abs(piece.value))
        lo = hi
        if abs(piece.value) <= rtol * abs(total.value) or (piece.value == 0.0 and total.value == 0.0):
            return total

    prev, last = pieces[-2], pieces[-1]
    ratio = last / prev if prev > 0 else 0.0
    if ratio >= DIVERGENT_RATIO:
        raise DivergenceError(
            f"{what} diverges: dyadic pieces do not decay",
            ratio=ratio,
            partial_sum=total.value,
            last_piece=last,
        )
    extra = last * ratio / (1.0 - ratio)
    logger.debug("%s tail extrapolated (ratio=%.4f extra=%.3e)", what, ratio, extra)
    return QuadResult(total.value + np.sign(total.value or 1.0) * extra, total.error + extra)

from __future__ import annotations

import logging
from typing import Callable, Optional, Sequence

import numpy as np

from ..cutoff import CutoffFunction
from ..errors import HypothesisError
from ..lattice import Lattice, RealField
from ..models import InequalityReport


logger = logging.getLogger(__name__)

SANDWICH_TOLERANCE = 1e-14


def sandwich_scale(f_height: Callable[[float], float], c_prime: float, delta: float, t: float) -> float:
    """s = delta^-1 (f(t) - c'|t|)."""
    gap = float(f_height(t)) - c_prime * abs(t)
    if not (gap > 0):
        raise HypothesisError("height function must satisfy f(t) > c'|t|", t=t, f=float(f_height(t)), c_prime=c_prime)
    return gap / delta


def geometric_sandwich_check(
    phi: RealField,
    chi: CutoffFunction,
    xi: CutoffFunction,
    f_height: Callable[[float], float],
    c_prime: float,
    times: Sequence[float],
    tolerance: float = SANDWICH_TOLERANCE,
) -> InequalityReport:
    """
    Entrywise check, for eta in (chi, xi), of

        ||eta||^-1 eta(phi/s) <= P_0   and   P_f(t) <= ||eta||^-1 eta((phi - c'|t|)/s)

    with s = delta^-1 (f(t) - c'|t|), delta the cutoffs' transition width.
    """
    if chi.delta != xi.delta:
        raise ValueError("chi and xi must share delta")
    values = phi.values
    p0 = (values > 0).astype(float)
    margins: list[float] = []
    worst_sites: list[int] = []
    for t in times:
        s = sandwich_scale(f_height, c_prime, chi.delta, t)
        pf = (values > float(f_height(t))).astype(float)
        per_t = np.inf
        for eta in (chi, xi):
            height = eta.sup_norm
            lower = eta(values / s) / height
            upper = eta((values - c_prime * abs(t)) / s) / height
            slack = np.minimum(p0 - lower, upper - pf)
            idx = int(np.argmin(slack))
            if slack[idx] < per_t:
                per_t = float(slack[idx])
                worst = idx
        margins.append(per_t)
        worst_sites.append(worst)
    report = InequalityReport.from_margins(
        "geometric_sandwich",
        margins,
        tolerance=tolerance,
        samples=[float(t) for t in times],
        details={"c_prime": c_prime, "delta": chi.delta, "worst_sites": worst_sites},
    )
    if not report.passed:
        logger.warning("geometric sandwich violated (worst margin=%.3e)", report.worst_margin)
    return report


def random_lipschitz_field(lat: Lattice, rng: np.random.Generator) -> RealField:
    """u.x - m + a sin(k.x + theta) with |u| <= 1 and a|k| <= 1, so the field is 2-Lipschitz."""
    coords = lat.coordinates
    u = rng.standard_normal(lat.dim)
    u = u / max(float(np.linalg.norm(u)), 1e-12) * rng.uniform(0.1, 1.0)
    k = rng.uniform(0.2, 2.0, lat.dim)
    amp = rng.uniform(0.0, 1.0) / float(np.linalg.norm(k))
    base = coords @ u + amp * np.sin(coords @ k + rng.uniform(0.0, 2.0 * np.pi))
    return RealField(base - float(np.median(base)))


def randomized_sandwich_check(
    lat: Lattice,
    chi: CutoffFunction,
    xi: CutoffFunction,
    f_height: Callable[[float], float],
    c_prime: float,
    times: Sequence[float],
    trials: int,
    seed: int = 0,
    phi: Optional[RealField] = None,
    tolerance: float = SANDWICH_TOLERANCE,
) -> InequalityReport:
    """The sandwich over `trials` random Lipschitz fields (and `phi` first, when given); one margin per field."""
    rng = np.random.default_rng(seed)
    fields = ([phi] if phi is not None else []) + [random_lipschitz_field(lat, rng) for _ in range(trials)]
    margins, failed = [], []
    for idx, field in enumerate(fields):
        report = geometric_sandwich_check(field, chi, xi, f_height, c_prime, times, tolerance)
        margins.append(float(report.worst_margin))
        if not report.passed:
            failed.append(idx)
    return InequalityReport.from_margins(
        "geometric_sandwich",
        margins,
        tolerance=tolerance,
        samples=[float(i) for i in range(len(fields))],
        details={"c_prime": c_prime, "delta": chi.delta, "fields": len(fields), "failed_fields": failed, "times": len(times)},
    )

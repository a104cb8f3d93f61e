from __future__ import annotations

import logging
from typing import Optional, Sequence

import numpy as np

from ..errors import HypothesisError
from ..kernelop import NonlocalOperator, schur_kappa
from ..lattice import Lattice, RealField, RegionSet, State, gaussian_state, normalized, restrict_state
from ..models import InequalityReport
from ..propagate import PotentialSpec, heisenberg_evolve
from .monotonicity import evolution_operators
from .reports import min_eigenvalue, operator_tolerance, scalar_constant, smallest_constant


logger = logging.getLogger(__name__)

# Operator check samples t in [MIN_TIME, t_max].
MIN_TIME = 1.0
VARIANTS = ("reflect", "shift")


def _require_speed(H0: NonlocalOperator, phi: RealField, c: float, what: str) -> float:
    kappa = schur_kappa(H0, phi, 1)
    if not (c > kappa):
        raise HypothesisError(f"{what} needs c > kappa (c={c}, kappa={kappa})", c=c, kappa=kappa)
    return kappa


def _variant_field(phi: RealField, variant: str, shift_b: float) -> RealField:
    if variant == "base":
        return phi
    if variant == "reflect":
        return phi.reflected()
    if variant == "shift":
        return phi.shifted(shift_b)
    raise ValueError(f"unknown variant {variant!r} (expected one of {VARIANTS})")


def default_states(lat: Lattice, phi: RealField) -> list[State]:
    """Normalized states supported in {phi <= 0}: the flat indicator and a narrow packet at the phi minimum."""
    inside = RegionSet(phi.values <= 0, "phi <= 0", allow_empty=True)
    if inside.is_empty:
        raise ValueError("default states need sites with phi <= 0")
    flat = normalized(State(inside.mask.astype(complex)), lat)
    center = lat.coordinates[int(np.argmin(phi.values))]
    packet = restrict_state(gaussian_state(lat, center, 2.0 * lat.spacing), inside, lat)
    return [flat, packet]


def _check_times(times: Sequence[float], min_time: float) -> list[float]:
    ts = sorted({float(t) for t in times if float(t) >= min_time})
    if not ts:
        raise ValueError(f"need sample times t >= {min_time}")
    return ts


def localization_state_check(
    H0: NonlocalOperator,
    V: PotentialSpec,
    phi: RealField,
    c: float,
    n: int,
    times: Sequence[float],
    states: Optional[Sequence[State]] = None,
    *,
    C_V: float = 0.0,
    dt: Optional[float] = None,
    min_time: float = MIN_TIME,
    propagators: Optional[dict[float, np.ndarray]] = None,
) -> InequalityReport:
    """
    ||P_{c|t|} psi_t||^2 <= <P_0>_0 + C (<P_0>_0 + C_V ||psi_0||^2) |t|^-1 + C |t|^-n ||psi_0||^2

    for each state in the batch, fitted C.
    """
    _require_speed(H0, phi, c, "localization_state_check")
    lat = H0.lattice
    vol = lat.cell_volume
    ts = _check_times(times, min_time)
    batch = list(states) if states is not None else default_states(lat, phi)
    for psi in batch:
        if len(psi) != lat.site_count:
            raise ValueError(f"state has {len(psi)} sites, operator has {lat.site_count}")
    U = propagators if propagators is not None else evolution_operators(H0, V, ts, dt)

    p0 = phi.values > 0
    cases = []
    for psi in batch:
        amps = psi.amplitudes
        norm0 = vol * float(np.sum(np.abs(amps) ** 2))
        mass0 = vol * float(np.sum(np.abs(amps[p0]) ** 2))
        for t in ts:
            evolved = U[t] @ amps
            lhs = vol * float(np.sum(np.abs(evolved[phi.values > c * t]) ** 2))
            coef = (mass0 + C_V * norm0) / t + t ** (-n) * norm0
            cases.append((lhs, mass0, coef))
    tol = operator_tolerance(mass0 + coef for _, mass0, coef in cases)
    C = max((scalar_constant(lhs - mass0, coef, tol) for lhs, mass0, coef in cases), default=0.0)
    margins = [mass0 + C * coef - lhs for lhs, mass0, coef in cases]
    return InequalityReport.from_margins(
        "localization_state",
        margins,
        tolerance=tol,
        samples=[t for _ in batch for t in ts],
        smallest_C=C,
        details={"states": len(batch), "c": c, "n": n, "C_V": C_V},
    )


def main_inequality_check(
    H0: NonlocalOperator,
    V: PotentialSpec,
    phi: RealField,
    c: float,
    n: int,
    times: Sequence[float],
    *,
    C_V: float = 0.0,
    variants: Sequence[str] = VARIANTS,
    shift_b: float = 1.0,
    states: Optional[Sequence[State]] = None,
    dt: Optional[float] = None,
    min_time: float = MIN_TIME,
) -> InequalityReport:
    """
    alpha_t(P_{c|t|}) <= P_0 + C (P_0 + C_V) |t|^-1 + C |t|^-n

    with one C fitted over phi and the requested variants (-phi, phi - b); the
    per-variant constants go to details together with the state-level check.
    """
    kappa = _require_speed(H0, phi, c, "main_inequality_check")
    if C_V < 0:
        raise ValueError("C_V must be >= 0")
    ts = _check_times(times, min_time)
    U = evolution_operators(H0, V, ts, dt)
    size = len(phi)
    eye = np.eye(size)

    cases: dict[str, list[tuple[np.ndarray, np.ndarray]]] = {}
    rhs_norms = []
    for variant in ("base", *variants):
        ref = _variant_field(phi, variant, shift_b).values
        p0 = (ref > 0).astype(float)
        rows = []
        for t in ts:
            lhs = heisenberg_evolve(U[t], np.diag((ref > c * t).astype(float)))
            A = np.diag(p0) - lhs
            B = np.diag(p0 + C_V) / t + t ** (-n) * eye
            rows.append((A, B))
            rhs_norms.append(1.0 + (1.0 + C_V) / t + t ** (-n))
        cases[variant] = rows
    tol = operator_tolerance(rhs_norms)
    per_variant = {v: max(smallest_constant(A, B, tol) for A, B in rows) for v, rows in cases.items()}
    C = max(per_variant.values())
    margins = [min_eigenvalue(A + C * B) for rows in cases.values() for A, B in rows]
    samples = [t for _ in cases for t in ts]

    state_report = localization_state_check(
        H0, V, phi, c, n, ts, states, C_V=C_V, min_time=min_time, propagators=U
    )
    consistent = state_report.smallest_C is not None and state_report.smallest_C <= C * (1.0 + 1e-6) + tol
    if not consistent:
        logger.warning("state-level constant %.4e exceeds the operator constant %.4e", state_report.smallest_C, C)
    logger.info("main_inequality_check kappa=%.4f c=%.4f C=%.4e variants=%s", kappa, c, C, per_variant)
    return InequalityReport.from_margins(
        "main_inequality",
        margins,
        tolerance=tol,
        samples=samples,
        smallest_C=C,
        details={
            "kappa": kappa,
            "c": c,
            "n": n,
            "C_V": C_V,
            "shift_b": shift_b,
            "variant_C": per_variant,
            "state_check": {
                "smallest_C": state_report.smallest_C,
                "passed": state_report.passed,
                "worst_margin": state_report.worst_margin,
                "consistent": consistent,
            },
        },
    )


def maximal_velocity_check(
    H0: NonlocalOperator,
    V: PotentialSpec,
    phi: RealField,
    c: float,
    n: int,
    times: Sequence[float],
    states: Optional[Sequence[State]] = None,
    *,
    c_f: Optional[float] = None,
    f0: float = 1.0,
    dt: Optional[float] = None,
) -> InequalityReport:
    """
    ||1_{phi > f(t)} psi_t||^2 <= (1 + C g^-1) ||1_{phi > 0} psi_0||^2 + C |t| g^-(n+1) ||psi_0||^2

    with f(t) = c_f |t| + f0 and g = f(t) - c|t|.
    """
    kappa = _require_speed(H0, phi, c, "maximal_velocity_check")
    speed = c if c_f is None else float(c_f)
    if speed < c or f0 <= 0:
        raise HypothesisError("need f(t) > c|t|: c_f >= c and f0 > 0", c_f=speed, c=c, f0=f0)
    lat = H0.lattice
    vol = lat.cell_volume
    ts = sorted({abs(float(t)) for t in times})
    batch = list(states) if states is not None else default_states(lat, phi)
    U = evolution_operators(H0, V, ts, dt)
    p0 = phi.values > 0

    cases = []
    for psi in batch:
        amps = psi.amplitudes
        norm0 = vol * float(np.sum(np.abs(amps) ** 2))
        mass0 = vol * float(np.sum(np.abs(amps[p0]) ** 2))
        for t in ts:
            f = speed * t + f0
            g = f - c * t
            evolved = U[t] @ amps
            lhs = vol * float(np.sum(np.abs(evolved[phi.values > f]) ** 2))
            coef = mass0 / g + t * g ** (-(n + 1)) * norm0
            cases.append((lhs, mass0, coef))
    tol = operator_tolerance(mass0 + coef for _, mass0, coef in cases)
    C = max((scalar_constant(lhs - mass0, coef, tol) for lhs, mass0, coef in cases), default=0.0)
    margins = [mass0 + (C * coef if coef > 0 else 0.0) - lhs for lhs, mass0, coef in cases]
    return InequalityReport.from_margins(
        "maximal_velocity",
        margins,
        tolerance=tol,
        samples=[t for _ in batch for t in ts],
        smallest_C=C,
        details={"kappa": kappa, "c": c, "c_f": speed, "f0": f0, "n": n},
    )

from __future__ import annotations

import logging
import math
from typing import Optional, Sequence

import numpy as np

from ..cutoff import CutoffFunction, combine_cutoffs
from ..errors import HypothesisError
from ..kernelop import NonlocalOperator, schur_kappa
from ..lattice import RealField
from ..models import InequalityReport
from ..opcalc import AstloFamily, astlo, commutator, potential_commutator_bound, spectral_norm
from ..propagate import PotentialKind, PotentialSpec, StateTrajectory, heisenberg_evolve, propagator_path
from .reports import (
    min_eigenvalue,
    operator_tolerance,
    scalar_constant,
    scale_uniformity_verdict,
    smallest_constant,
    stability_verdict,
)


logger = logging.getLogger(__name__)

FD_RELATIVE_STEP = 1e-4


def _phi_field(family: AstloFamily) -> RealField:
    if not isinstance(family.phi, RealField):
        raise ValueError("this check needs a multiplication reference operator (RealField phi)")
    return family.phi


def intermediate_cutoffs(chi: CutoffFunction, xi: CutoffFunction, kappas: Sequence[float], n: int) -> list[CutoffFunction]:
    """xi_k for k = 2..n, each dominating chi' + (kappa_k/k!) xi'."""
    out = []
    for k in range(2, n + 1):
        weight = float(kappas[k - 1]) / math.factorial(k) if len(kappas) >= k else 1.0
        out.append(combine_cutoffs(chi, xi, weight))
    return out


def _commutator_rhs(
    family: AstloFamily,
    t: float,
    kappa: float,
    xis: Sequence[CutoffFunction],
) -> np.ndarray:
    """s^-1 kappa A_s(chi') + sum_k s^-k A_s(xi_k')."""
    s = family.scale_s
    rhs = (kappa / s) * astlo(family, t, order=1).matrix
    for k, xik in enumerate(xis, start=2):
        rhs = rhs + s ** (-k) * astlo(family, t, cutoff=xik, order=1).matrix
    return rhs


def commutator_bound_check(
    H0: NonlocalOperator,
    family: AstloFamily,
    xi: CutoffFunction,
    n: int,
    times: Sequence[float],
    scales: Optional[Sequence[float]] = None,
) -> InequalityReport:
    """
    i[H, A_s(t, chi)] <= s^-1 kappa A_s(t, chi') + sum_{k=2}^n s^-k A_s(t, xi_k') + C s^-(n+1).
    """
    phi = _phi_field(family)
    kappas = [schur_kappa(H0, phi, p) for p in range(1, n + 2)]
    kappa = kappas[0]
    xis = intermediate_cutoffs(family.chi, xi, kappas, n)
    Hm = H0.matrix
    cases, samples = [], []
    for s in scales or (family.scale_s,):
        fam = family.with_scale(float(s))
        for t in times:
            A = astlo(fam, t).matrix
            lhs = 1j * commutator(Hm, A)
            rhs = _commutator_rhs(fam, t, kappa, xis)
            cases.append((rhs - lhs, float(s) ** (-(n + 1)), spectral_norm(rhs)))
            samples.append(float(t))
    tol = operator_tolerance(c[2] for c in cases)
    C = max((smallest_constant(D, b, tol) for D, b, _ in cases), default=0.0)
    margins = [min_eigenvalue(D) + C * b for D, b, _ in cases]
    return InequalityReport.from_margins(
        "commutator_bound",
        margins,
        tolerance=tol,
        samples=samples,
        smallest_C=C,
        details={"kappa": kappa, "n": n, "scales": [float(s) for s in (scales or (family.scale_s,))]},
    )


def evolution_operators(H0: NonlocalOperator, V: PotentialSpec, times: Sequence[float], dt: Optional[float]) -> dict[float, np.ndarray]:
    """U(t, 0) keyed by time."""
    ts = sorted({float(t) for t in times})
    return dict(zip(ts, propagator_path(H0, V, ts, dt)))


def _commutator_norm(phi: RealField, V: PotentialSpec, t: float) -> float:
    """G(t) = ||[phi, V(t)]||."""
    if V.kind in (PotentialKind.NONE, PotentialKind.STATIC):
        return 0.0
    Vt = V.at(t, len(phi))
    if Vt.is_diagonal:
        return 0.0
    return spectral_norm(commutator(np.diag(phi.values), Vt.matrix))


def rme_check(
    H0: NonlocalOperator,
    V: PotentialSpec,
    family: AstloFamily,
    xi: CutoffFunction,
    n: int,
    times: Sequence[float],
    dt: Optional[float] = None,
    fd_step: Optional[float] = None,
) -> InequalityReport:
    """
    d/dt alpha_t(A_s(t, chi)) <= -delta s^-1 alpha_t(A_s(t, chi')) + sum_k s^-k alpha_t(A_s(t, xi_k'))
                                 + C s^-(n+1) (+ C s^-1 G(t)),

    delta = c - kappa. The derivative of alpha_t(A_s(t, chi)) is the Richardson extrapolation
    of central differences at steps h and h/2; the constant is fitted with base steps h and
    h/2 and disagreement beyond 20% marks it unstable.
    """
    phi = _phi_field(family)
    kappas = [schur_kappa(H0, phi, p) for p in range(1, n + 2)]
    kappa = kappas[0]
    c = family.speed_c
    if not (c > kappa):
        raise HypothesisError(f"rme_check needs c > kappa (c={c}, kappa={kappa})", c=c, kappa=kappa)
    delta = c - kappa
    s = family.scale_s
    h = fd_step if fd_step is not None else FD_RELATIVE_STEP * s
    sample_times = [float(t) for t in times if t > h]
    if not sample_times:
        raise ValueError("rme_check needs sample times t > fd_step")
    xis = intermediate_cutoffs(family.chi, xi, kappas, n)

    needed = [0.0]
    for t in sample_times:
        needed.extend([t, t - h, t + h, t - h / 2, t + h / 2, t - h / 4, t + h / 4])
    U = evolution_operators(H0, V, needed, dt)

    def evolved(tau: float) -> np.ndarray:
        return heisenberg_evolve(U[float(tau)], astlo(family, tau))

    def central(tau: float, step: float) -> np.ndarray:
        return (evolved(tau + step) - evolved(tau - step)) / (2 * step)

    cases: dict[float, list] = {h: [], h / 2: []}
    richardson = []
    for t in sample_times:
        d1, d2, d4 = central(t, h), central(t, h / 2), central(t, h / 4)
        d_full = (4.0 * d2 - d1) / 3.0
        d_half = (4.0 * d4 - d2) / 3.0
        richardson.append(spectral_norm(d1 - d_full))
        Ut = U[t]
        rhs = -(delta / s) * heisenberg_evolve(Ut, astlo(family, t, order=1))
        for k, xik in enumerate(xis, start=2):
            rhs = rhs + s ** (-k) * heisenberg_evolve(Ut, astlo(family, t, cutoff=xik, order=1))
        b = s ** (-(n + 1)) + s ** (-1) * _commutator_norm(phi, V, t)
        norm_rhs = spectral_norm(rhs)
        cases[h].append((rhs - d_full, b, norm_rhs))
        cases[h / 2].append((rhs - d_half, b, norm_rhs))

    tol = operator_tolerance(cs[2] for cs in cases[h])
    fitted = {step: max(smallest_constant(D, b, tol) for D, b, _ in cs) for step, cs in cases.items()}
    C = fitted[h]
    margins = [min_eigenvalue(D) + C * b for D, b, _ in cases[h]]
    # ||[V, A_s]|| against s^-1 ||[phi, V]||; zero when both are multiplications
    v_ratio = 0.0
    if V.kind != PotentialKind.NONE:
        v_ratio = max(potential_commutator_bound(V.at(t, len(phi)), family, t).ratio for t in sample_times)
    stable = stability_verdict(fitted.values())
    logger.info("rme_check kappa=%.4f c=%.4f s=%.3g C=%.4e (C at h/2=%.4e)", kappa, c, s, C, fitted[h / 2])
    return InequalityReport.from_margins(
        "rme",
        margins,
        tolerance=tol,
        samples=sample_times,
        smallest_C=C,
        stable=stable,
        details={
            "kappa": kappa,
            "delta": delta,
            "s": s,
            "fd_step": h,
            "C_half_step": fitted[h / 2],
            "richardson_max": max(richardson),
            "v_commutator_ratio": v_ratio,
        },
    )


def envelope_constant(
    traj: StateTrajectory,
    family: AstloFamily,
    xi: CutoffFunction,
    n: int,
    C_V: float = 0.0,
    at_least: float = 0.0,
) -> tuple[float, list[float], float, list[float]]:
    """
    (smallest C, margins at max(C, at_least), tolerance, observed <A_s(t, chi)>_t) for the
    state form of the monotone envelope.
    """
    s = family.scale_s
    psi0 = traj.initial.amplitudes
    vol = traj.cell_volume
    norm0 = float(traj.norms[0]) ** 2
    base = astlo(family, 0.0).expectation(psi0, vol) + astlo(family, 0.0, cutoff=xi).expectation(psi0, vol) / s
    lhs, coef = [], []
    for t, state in zip(traj.times, traj.states):
        lhs.append(astlo(family, float(t)).expectation(state.amplitudes, vol))
        coef.append(abs(float(t)) * s ** (-(n + 1)) * norm0 + C_V * norm0 / s)
    tol = operator_tolerance([base, *lhs])
    C = max((scalar_constant(value - base, b, tol) for value, b in zip(lhs, coef)), default=0.0)
    used = max(C, at_least)
    margins = [base + (used * b if b > 0 else 0.0) - value for value, b in zip(lhs, coef)]
    return C, margins, tol, lhs


def envelope_check(
    traj: StateTrajectory,
    family: AstloFamily,
    xi: CutoffFunction,
    n: int,
    C_V: float = 0.0,
    stability_factors: Sequence[float] = (2.0,),
) -> InequalityReport:
    """
    <A_s(t, chi)>_t <= <A_s(0, chi)>_0 + s^-1 <A_s(0, xi)>_0 + C |t| s^-(n+1) ||psi_0||^2 (+ C s^-1 C_V).

    C is fitted at the family's scale and at scale_s * factor for each stability factor; the
    reported constant is the largest of them and the margins are taken with it. The sweep is
    stable when no scale needs more than the smallest scale's constant plus 20%.
    """
    if family.size != len(traj.initial):
        raise ValueError("trajectory and family live on different lattices")
    s = family.scale_s
    others = {
        s * float(f): envelope_constant(traj, family.with_scale(s * float(f)), xi, n, C_V)[0] for f in stability_factors
    }
    fitted, _, _, _ = envelope_constant(traj, family, xi, n, C_V)
    by_scale = {s: fitted, **others}
    C = max(by_scale.values())
    _, margins, tol, observed = envelope_constant(traj, family, xi, n, C_V, at_least=C)
    stable = scale_uniformity_verdict(by_scale) if others else None
    return InequalityReport.from_margins(
        "envelope",
        margins,
        tolerance=tol,
        samples=[float(t) for t in traj.times],
        smallest_C=C,
        stable=stable,
        details={
            "s": s,
            "C_at_s": fitted,
            "C_other_scales": list(others.values()),
            "C_by_scale": [[scale, by_scale[scale]] for scale in sorted(by_scale)],
            "stability_factors": [float(f) for f in stability_factors],
            "observed": observed,
        },
    )

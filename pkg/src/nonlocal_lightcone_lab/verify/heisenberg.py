from __future__ import annotations

import logging
from typing import Callable, Optional, Sequence, Union

import numpy as np

from ..kernelop import NonlocalOperator
from ..models import InequalityReport
from ..opcalc import HermitianOperator
from ..propagate import Method, PotentialSpec, StateTrajectory, heisenberg_evolve, heisenberg_expectation
from ..lattice import State
from .monotonicity import evolution_operators
from .reports import min_eigenvalue, operator_tolerance, spectral_norm


logger = logging.getLogger(__name__)

DUALITY_TOLERANCE = 1e-10

Observable = Union[HermitianOperator, Callable[[float], HermitianOperator]]


def random_psd(size: int, count: int, seed: int = 0) -> list[np.ndarray]:
    """Unit-norm positive semidefinite matrices G G*, G complex Gaussian of rank size // 2 + 1."""
    rng = np.random.default_rng(seed)
    rank = size // 2 + 1
    out = []
    for _ in range(count):
        G = rng.standard_normal((size, rank)) + 1j * rng.standard_normal((size, rank))
        A = G @ G.conj().T
        out.append(A / spectral_norm(A))
    return out


def positivity_preservation_check(
    H0: NonlocalOperator,
    V: PotentialSpec,
    times: Sequence[float],
    observables: Optional[Sequence[np.ndarray]] = None,
    *,
    count: int = 4,
    seed: int = 0,
    dt: Optional[float] = None,
) -> InequalityReport:
    """A >= 0 implies U(t)* A U(t) >= 0; margins are the smallest eigenvalues of the evolved observables."""
    size = H0.matrix.shape[0]
    mats = list(observables) if observables is not None else random_psd(size, count, seed)
    for A in mats:
        if min_eigenvalue(A) < -operator_tolerance([spectral_norm(A)]):
            raise ValueError("positivity_preservation_check needs positive semidefinite observables")
    ts = sorted({abs(float(t)) for t in times})
    U = evolution_operators(H0, V, ts, dt)
    margins, samples = [], []
    for t in ts:
        for A in mats:
            margins.append(min_eigenvalue(heisenberg_evolve(U[t], A)))
            samples.append(t)
    tol = operator_tolerance(spectral_norm(A) for A in mats)
    return InequalityReport.from_margins(
        "positivity_preservation",
        margins,
        tolerance=tol,
        samples=samples,
        details={"observables": len(mats), "seed": seed},
    )


def duality_check(
    H0: NonlocalOperator,
    V: PotentialSpec,
    psi0: State,
    obs: Observable,
    times: Sequence[float],
    *,
    dt: Optional[float] = None,
    tolerance: float = DUALITY_TOLERANCE,
) -> InequalityReport:
    """<psi_0, alpha_t(A(t)) psi_0> = <psi_t, A(t) psi_t> at every sample; margins are -|difference|."""
    vol = H0.lattice.cell_volume
    ts = sorted({abs(float(t)) for t in times})
    U = evolution_operators(H0, V, ts, dt)
    amps = psi0.amplitudes
    traj = StateTrajectory(
        times=ts,
        states=[State(U[t] @ amps, t) for t in ts],
        method=Method.EIGEN,
        dt=0.0 if dt is None else dt,
        cell_volume=vol,
    )
    schrodinger = heisenberg_expectation(traj, obs)
    heisenberg = []
    for t in ts:
        A = obs if isinstance(obs, HermitianOperator) else obs(t)
        evolved = heisenberg_evolve(U[t], A)
        heisenberg.append(vol * float(np.real(np.vdot(amps, evolved @ amps))))
    scale = max([1.0, *np.abs(schrodinger).tolist()])
    diffs = np.abs(np.asarray(heisenberg) - schrodinger)
    return InequalityReport.from_margins(
        "duality",
        [-float(d) for d in diffs],
        tolerance=tolerance * scale,
        samples=ts,
        details={"max_difference": float(diffs.max(initial=0.0))},
    )

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Callable, Optional, Sequence, Union

import numpy as np
import scipy.linalg
from scipy.sparse.linalg import expm_multiply

from .errors import BlowUpError
from .kernelop import NonlocalOperator, operator_norm_estimate
from .lattice import Lattice, RealField, RegionSet, State, region_mass
from .opcalc import HermitianOperator
from .util.tables import write_csv


logger = logging.getLogger(__name__)

DEFAULT_DT = 1e-2
DEFAULT_SAMPLES = 51

Hamiltonian = Union[NonlocalOperator, HermitianOperator]
PotentialValue = Union[RealField, HermitianOperator, np.ndarray]


class PotentialKind(str, Enum):
    NONE = "none"
    STATIC = "static"
    TIME_DEPENDENT = "time_dependent"
    NLS = "nls"


class Method(str, Enum):
    EIGEN = "eigen"
    MIDPOINT = "midpoint"
    STRANG = "strang"


def _as_hermitian(value: PotentialValue, label: str) -> HermitianOperator:
    if isinstance(value, HermitianOperator):
        return value
    if isinstance(value, RealField):
        return HermitianOperator(value.values, label)
    return HermitianOperator(np.asarray(value), label)


@dataclass(frozen=True, eq=False)
class PotentialSpec:
    """
    V(t) in H(t) = H0 + V(t).

    static: multiplication by W; time_dependent: t -> field or Hermitian matrix;
    nls: W + f(|psi|^2), frozen along the solution.
    """

    kind: PotentialKind = PotentialKind.NONE
    W: Optional[RealField] = None
    V: Optional[Callable[[float], PotentialValue]] = None
    nonlinearity: Optional[Callable[[np.ndarray], np.ndarray]] = None
    bound: Optional[float] = None

    def __post_init__(self) -> None:
        kind = PotentialKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind == PotentialKind.STATIC and self.W is None:
            raise ValueError("static potential needs W")
        if kind == PotentialKind.TIME_DEPENDENT and self.V is None:
            raise ValueError("time_dependent potential needs a callable V(t)")
        if kind == PotentialKind.NLS and self.nonlinearity is None:
            raise ValueError("nls potential needs a nonlinearity f")
        if self.bound is not None and not math.isfinite(self.bound):
            raise ValueError("potential bound sup_t ||V(t)|| must be finite")
        if kind == PotentialKind.STATIC and self.bound is None:
            object.__setattr__(self, "bound", float(np.max(np.abs(self.W.values), initial=0.0)))
        if kind == PotentialKind.NONE:
            object.__setattr__(self, "bound", 0.0)

    @classmethod
    def none(cls) -> "PotentialSpec":
        return cls(PotentialKind.NONE)

    @classmethod
    def static(cls, W: RealField) -> "PotentialSpec":
        return cls(PotentialKind.STATIC, W=W)

    @classmethod
    def time_dependent(cls, V: Callable[[float], PotentialValue], bound: Optional[float] = None) -> "PotentialSpec":
        return cls(PotentialKind.TIME_DEPENDENT, V=V, bound=bound)

    @classmethod
    def nls(cls, W: Optional[RealField], f: Callable[[np.ndarray], np.ndarray]) -> "PotentialSpec":
        return cls(PotentialKind.NLS, W=W, nonlinearity=f)

    @property
    def is_zero(self) -> bool:
        return self.kind == PotentialKind.NONE

    def at(self, t: float, size: int) -> HermitianOperator:
        if self.kind == PotentialKind.NONE:
            return HermitianOperator(np.zeros(size), "V=0")
        if self.kind == PotentialKind.STATIC:
            return HermitianOperator(self.W.values, "W")
        if self.kind == PotentialKind.TIME_DEPENDENT:
            op = _as_hermitian(self.V(t), f"V({t:g})")
            if op.size != size:
                raise ValueError(f"V({t:g}) has size {op.size}, expected {size}")
            return op
        raise ValueError("nls potentials depend on the state; use evolve_nls")

    def measured_bound(self, times: Sequence[float], size: int) -> float:
        return max((self.at(t, size).norm() for t in times), default=0.0)


def _hamiltonian_parts(H0: Hamiltonian) -> tuple[np.ndarray, float]:
    if isinstance(H0, NonlocalOperator):
        return H0.matrix, H0.lattice.cell_volume
    return H0.matrix, 1.0


def _eigh(H0: Hamiltonian) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(H0, NonlocalOperator):
        return H0.spectrum
    return H0.eigh


@dataclass(frozen=True, eq=False)
class StateTrajectory:
    times: np.ndarray
    states: list[State]
    method: Method
    dt: float
    cell_volume: float = 1.0
    norms: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        times = np.array(self.times, dtype=float).reshape(-1)
        if times.size != len(self.states):
            raise ValueError(f"{times.size} times but {len(self.states)} states")
        if times.size > 1 and np.any(np.diff(times) <= 0):
            raise ValueError("trajectory times must be strictly increasing")
        times.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "method", Method(self.method))
        norms = np.array([math.sqrt(self.cell_volume * float(np.sum(np.abs(s.amplitudes) ** 2))) for s in self.states])
        norms.setflags(write=False)
        object.__setattr__(self, "norms", norms)

    def __len__(self) -> int:
        return int(self.times.size)

    @property
    def amplitudes(self) -> np.ndarray:
        """(samples, sites) complex array."""
        return np.stack([s.amplitudes for s in self.states])

    @property
    def initial(self) -> State:
        return self.states[0]

    def norm_drift(self) -> np.ndarray:
        """| ||psi_t||^2 - ||psi_0||^2 | per sample."""
        sq = self.norms**2
        return np.abs(sq - sq[0])

    def mass(self, region: RegionSet, lat: Lattice) -> np.ndarray:
        return np.array([region_mass(s, region, lat) for s in self.states])

    def to_csv(self, path: Union[str, Path], observables: Optional[dict[str, Sequence[float]]] = None) -> Path:
        obs = observables or {}
        for name, series in obs.items():
            if len(series) != len(self):
                raise ValueError(f"observable {name!r} has {len(series)} samples, trajectory has {len(self)}")
        names = sorted(obs)
        header = ["time", "norm", *names]
        rows = ([float(t), float(nrm), *[float(obs[k][i]) for k in names]] for i, (t, nrm) in enumerate(zip(self.times, self.norms)))
        return write_csv(path, header, rows)

    def save(self, path: Union[str, Path]) -> Path:
        out = Path(path)
        out.parent.mkdir(parents=True, exist_ok=True)
        with out.open("wb") as fh:
            np.savez(
                fh,
                times=self.times,
                amplitudes=self.amplitudes,
                method=np.array(self.method.value),
                dt=np.array(self.dt),
                cell_volume=np.array(self.cell_volume),
            )
        return out

    @classmethod
    def load(cls, path: Union[str, Path]) -> "StateTrajectory":
        with np.load(Path(path), allow_pickle=False) as data:
            times = data["times"]
            amps = data["amplitudes"]
            return cls(
                times=times,
                states=[State(a, float(t)) for a, t in zip(amps, times)],
                method=Method(str(data["method"])),
                dt=float(data["dt"]),
                cell_volume=float(data["cell_volume"]),
            )


def default_time_step(H0: Hamiltonian) -> float:
    """min(1e-2, 0.1 / ||H0||_est), the norm estimate being the p=0 Schur row sum."""
    if isinstance(H0, NonlocalOperator):
        est = operator_norm_estimate(H0)
    else:
        est = float(np.abs(H0.matrix).sum(axis=1).max()) if H0.size else 0.0
    if est <= 0:
        return DEFAULT_DT
    return min(DEFAULT_DT, 0.1 / est)


def _sample_times(t_final: float, sample_times: Optional[Sequence[float]]) -> np.ndarray:
    if sample_times is None:
        return np.linspace(0.0, t_final, DEFAULT_SAMPLES)
    out = np.asarray(sorted(float(t) for t in sample_times))
    if out.size == 0 or out[0] < 0 or out[-1] > t_final * (1 + 1e-12):
        raise ValueError("sample times must lie in [0, t_final]")
    if out[0] != 0.0:
        out = np.concatenate([[0.0], out])
    return out


def _check_state(H_size: int, psi0: State) -> None:
    if len(psi0) != H_size:
        raise ValueError(f"initial state has {len(psi0)} sites, operator has {H_size}")


def evolve_autonomous(H0: Hamiltonian, psi0: State, times: Sequence[float]) -> StateTrajectory:
    """psi_t = exp(-i t H0) psi0 from one eigendecomposition."""
    matrix, vol = _hamiltonian_parts(H0)
    _check_state(matrix.shape[0], psi0)
    ts = np.asarray(list(times), dtype=float)
    evals, evecs = _eigh(H0)
    coeffs = evecs.conj().T @ psi0.amplitudes
    states = [State(evecs @ (np.exp(-1j * evals * t) * coeffs), float(t)) for t in ts]
    return StateTrajectory(times=ts, states=states, method=Method.EIGEN, dt=0.0, cell_volume=vol)


def propagator(H0: Hamiltonian, t: float, V: Optional[HermitianOperator] = None) -> np.ndarray:
    """U(t, 0) = exp(-i t (H0 + V)) for a time-independent V."""
    if V is None:
        evals, evecs = _eigh(H0)
    else:
        matrix, _ = _hamiltonian_parts(H0)
        evals, evecs = HermitianOperator(matrix + V.matrix, "H0+V").eigh
    return (evecs * np.exp(-1j * evals * t)[None, :]) @ evecs.conj().T


def _substeps(times: np.ndarray, dt: float):
    """(t_start, h, count) per interval between consecutive samples, with h <= dt."""
    for t0, t1 in zip(times[:-1], times[1:]):
        count = max(1, int(math.ceil((t1 - t0) / dt - 1e-9)))
        yield float(t0), (t1 - t0) / count, count


def propagator_path(
    H0: Hamiltonian,
    V: PotentialSpec,
    times: Sequence[float],
    dt: Optional[float] = None,
) -> list[np.ndarray]:
    """U(t, 0) at each sample time: eigendecomposition when V is static, midpoint stepping otherwise."""
    ts = np.asarray(sorted(float(t) for t in times))
    matrix, _ = _hamiltonian_parts(H0)
    size = matrix.shape[0]
    if V.kind in (PotentialKind.NONE, PotentialKind.STATIC):
        if V.is_zero:
            return [propagator(H0, float(t)) for t in ts]
        Htot = HermitianOperator(matrix + V.at(0.0, size).matrix, "H0+W")
        return [propagator(Htot, float(t)) for t in ts]
    if V.kind != PotentialKind.TIME_DEPENDENT:
        raise ValueError("propagator_path supports none/static/time_dependent potentials")
    step = dt or default_time_step(H0)
    grid = ts if ts[0] == 0.0 else np.concatenate([[0.0], ts])
    U = np.eye(size, dtype=complex)
    path = [U.copy()]
    for t0, h, count in _substeps(grid, step):
        for j in range(count):
            tm = t0 + (j + 0.5) * h
            U = scipy.linalg.expm(-1j * h * (matrix + V.at(tm, size).matrix)) @ U
        path.append(U.copy())
    return path if ts[0] == 0.0 else path[1:]


def evolve_nonautonomous(
    H0: Hamiltonian,
    V: PotentialSpec,
    psi0: State,
    t_final: float,
    dt: float,
    sample_times: Optional[Sequence[float]] = None,
) -> StateTrajectory:
    """Midpoint exponential stepping psi <- exp(-i h (H0 + V(t + h/2))) psi."""
    if not (dt > 0):
        raise ValueError(f"dt must be > 0, got {dt}")
    if V.kind not in (PotentialKind.STATIC, PotentialKind.TIME_DEPENDENT, PotentialKind.NONE):
        raise ValueError(f"evolve_nonautonomous does not handle {V.kind.value} potentials")
    matrix, vol = _hamiltonian_parts(H0)
    size = matrix.shape[0]
    _check_state(size, psi0)
    samples = _sample_times(t_final, sample_times)
    psi = np.array(psi0.amplitudes)
    states = [State(psi, 0.0)]
    static_cache: dict[float, np.ndarray] = {}
    for t0, h, count in _substeps(samples, dt):
        for j in range(count):
            tm = t0 + (j + 0.5) * h
            if V.kind == PotentialKind.TIME_DEPENDENT:
                Ht = matrix + V.at(tm, size).matrix
                psi = expm_multiply(-1j * h * Ht, psi)
            else:
                key = round(h, 15)
                if key not in static_cache:
                    static_cache[key] = propagator(H0, h, None if V.is_zero else V.at(0.0, size))
                psi = static_cache[key] @ psi
        states.append(State(psi, t0 + count * h))
    logger.debug("midpoint run finished (steps<=%s dt=%s)", int(math.ceil(t_final / dt)), dt)
    return StateTrajectory(times=samples, states=states, method=Method.MIDPOINT, dt=dt, cell_volume=vol)


def evolve_nls(
    H0: Hamiltonian,
    W: Optional[RealField],
    f: Callable[[np.ndarray], np.ndarray],
    psi0: State,
    t_final: float,
    dt: float,
    sample_times: Optional[Sequence[float]] = None,
) -> StateTrajectory:
    """
    Strang splitting for i d/dt psi = H0 psi + W psi + f(|psi|^2) psi.

    Half step of the diagonal phase, full step of exp(-i h H0), half step of the phase.
    """
    if not (dt > 0):
        raise ValueError(f"dt must be > 0, got {dt}")
    matrix, vol = _hamiltonian_parts(H0)
    size = matrix.shape[0]
    _check_state(size, psi0)
    w = np.zeros(size) if W is None else W.values
    evals, evecs = _eigh(H0)
    samples = _sample_times(t_final, sample_times)
    psi = np.array(psi0.amplitudes)
    states = [State(psi, 0.0)]
    linear: dict[float, np.ndarray] = {}

    def phase(v: np.ndarray, h: float) -> np.ndarray:
        pot = w + np.asarray(f(np.abs(v) ** 2), dtype=float)
        return np.exp(-0.5j * h * pot) * v

    for t0, h, count in _substeps(samples, dt):
        key = round(h, 15)
        if key not in linear:
            linear[key] = np.exp(-1j * evals * h)
        for j in range(count):
            psi = phase(psi, h)
            psi = evecs @ (linear[key] * (evecs.conj().T @ psi))
            psi = phase(psi, h)
            if not np.all(np.isfinite(psi)):
                raise BlowUpError("NLS solution is no longer finite", time=t0 + (j + 1) * h, dt=h)
        states.append(State(psi, t0 + count * h))
    return StateTrajectory(times=samples, states=states, method=Method.STRANG, dt=dt, cell_volume=vol)


def nls_energy(
    H0: Hamiltonian,
    W: Optional[RealField],
    F: Callable[[np.ndarray], np.ndarray],
    psi: State,
) -> float:
    """<psi, H0 psi> + <psi, W psi> + int F(|psi|^2), with F' = f."""
    matrix, vol = _hamiltonian_parts(H0)
    amps = psi.amplitudes
    rho = np.abs(amps) ** 2
    kinetic = float(np.real(np.vdot(amps, matrix @ amps)))
    potential = 0.0 if W is None else float(np.sum(W.values * rho))
    return vol * (kinetic + potential + float(np.sum(np.asarray(F(rho), dtype=float))))


def heisenberg_evolve(U: np.ndarray, A: Union[HermitianOperator, np.ndarray]) -> np.ndarray:
    """alpha_t(A) = U* A U."""
    mat = A.matrix if isinstance(A, HermitianOperator) else np.asarray(A)
    if U.shape != mat.shape:
        raise ValueError(f"propagator shape {U.shape} does not match observable shape {mat.shape}")
    out = U.conj().T @ mat @ U
    return 0.5 * (out + out.conj().T)


def heisenberg_expectation(
    traj: StateTrajectory,
    obs: Union[HermitianOperator, Callable[[float], HermitianOperator]],
) -> np.ndarray:
    """<psi_t, A(t) psi_t> (weight h^d) at every trajectory time."""
    out = np.empty(len(traj))
    for i, (t, state) in enumerate(zip(traj.times, traj.states)):
        A = obs if isinstance(obs, HermitianOperator) else obs(float(t))
        if A.size != len(state):
            raise ValueError(f"observable size {A.size} does not match state length {len(state)}")
        out[i] = A.expectation(state.amplitudes, traj.cell_volume)
    return out


def eigenstate(H0: Hamiltonian, index: int = 0) -> tuple[float, State]:
    """(lambda, psi) for the index-th eigenpair, psi normalized in the h^d-weighted norm."""
    _, vol = _hamiltonian_parts(H0)
    evals, evecs = _eigh(H0)
    vec = evecs[:, index] / math.sqrt(vol)
    return float(evals[index]), State(vec)

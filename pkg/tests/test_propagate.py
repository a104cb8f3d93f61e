from __future__ import annotations

import numpy as np
import pytest

from nonlocal_lightcone_lab.errors import BlowUpError
from nonlocal_lightcone_lab.kernelop import KernelSpec, assemble_operator
from nonlocal_lightcone_lab.lattice import RealField, State, build_lattice, gaussian_state, norm_squared
from nonlocal_lightcone_lab.opcalc import HermitianOperator
from nonlocal_lightcone_lab.propagate import (
    PotentialSpec,
    StateTrajectory,
    default_time_step,
    eigenstate,
    evolve_autonomous,
    evolve_nls,
    evolve_nonautonomous,
    heisenberg_evolve,
    heisenberg_expectation,
    nls_energy,
    propagator,
    propagator_path,
)


def _setup():
    lat = build_lattice(1, 8.0, 32)
    op = assemble_operator(lat, KernelSpec(family="power_law", a=4.0))
    psi0 = gaussian_state(lat, [0.0], 0.7, momentum=[1.0])
    return lat, op, psi0


def test_autonomous_evolution_is_unitary() -> None:
    _, op, psi0 = _setup()
    traj = evolve_autonomous(op, psi0, np.linspace(0.0, 5.0, 11))
    assert len(traj) == 11
    assert traj.norms[0] == pytest.approx(1.0, rel=1e-12)
    assert np.max(traj.norm_drift()) < 1e-12


def test_time_reversal_recovers_initial_state() -> None:
    _, op, psi0 = _setup()
    forward = propagator(op, 3.0) @ psi0.amplitudes
    back = propagator(op, -3.0) @ forward
    assert np.max(np.abs(back - psi0.amplitudes)) < 1e-6


def test_nls_with_zero_nonlinearity_matches_linear_flow() -> None:
    _, op, psi0 = _setup()
    times = np.linspace(0.0, 2.0, 5)
    linear = evolve_autonomous(op, psi0, times)
    nls = evolve_nls(op, None, lambda rho: np.zeros_like(rho), psi0, 2.0, 1e-2, times)
    assert np.max(np.abs(linear.amplitudes - nls.amplitudes)) < 1e-6


def test_static_potential_midpoint_matches_eigendecomposition() -> None:
    lat, op, psi0 = _setup()
    W = RealField(0.3 * np.cos(lat.coordinates[:, 0]))
    times = np.linspace(0.0, 2.0, 5)
    stepped = evolve_nonautonomous(op, PotentialSpec.static(W), psi0, 2.0, 0.05, times)
    exact = evolve_autonomous(HermitianOperator(op.matrix + np.diag(W.values)), psi0, times)
    assert np.max(np.abs(stepped.amplitudes - exact.amplitudes)) < 1e-10


def test_constant_time_dependent_potential_matches_static() -> None:
    lat, op, psi0 = _setup()
    W = RealField(0.3 * np.cos(lat.coordinates[:, 0]))
    times = [0.0, 0.5, 1.0]
    driven = evolve_nonautonomous(op, PotentialSpec.time_dependent(lambda t: W, bound=0.3), psi0, 1.0, 0.05, times)
    static = evolve_nonautonomous(op, PotentialSpec.static(W), psi0, 1.0, 0.05, times)
    assert np.max(np.abs(driven.amplitudes - static.amplitudes)) < 1e-8


def test_propagator_path_is_unitary_for_driven_potential() -> None:
    lat, op, _ = _setup()
    x = lat.coordinates[:, 0]
    V = PotentialSpec.time_dependent(lambda t: RealField(0.5 * np.cos(2 * t) * np.exp(-x * x)), bound=0.5)
    path = propagator_path(op, V, [0.0, 0.5, 1.0], dt=0.05)
    assert len(path) == 3
    assert np.allclose(path[0], np.eye(op.size))
    for U in path:
        assert np.allclose(U.conj().T @ U, np.eye(op.size), atol=1e-10)


def test_nls_energy_is_nearly_conserved() -> None:
    _, op, psi0 = _setup()
    g = 1.0
    traj = evolve_nls(op, None, lambda rho: g * rho, psi0, 1.0, 1e-2, [0.0, 1.0])
    F = lambda rho: 0.5 * g * rho**2  # noqa: E731
    e0 = nls_energy(op, None, F, traj.states[0])
    e1 = nls_energy(op, None, F, traj.states[-1])
    assert abs(e1 - e0) <= 1e-3 * max(1.0, abs(e0))
    assert np.max(traj.norm_drift()) < 1e-10


def test_nls_blow_up_is_reported() -> None:
    _, op, psi0 = _setup()
    with np.errstate(invalid="ignore", over="ignore"):
        with pytest.raises(BlowUpError) as exc:
            evolve_nls(op, None, lambda rho: np.full_like(rho, np.inf), psi0, 0.1, 1e-2)
    assert exc.value.time > 0


def test_heisenberg_picture_matches_schrodinger_picture() -> None:
    lat, op, psi0 = _setup()
    A = HermitianOperator((lat.coordinates[:, 0] > 1.0).astype(float), "P")
    traj = evolve_autonomous(op, psi0, [0.0, 1.5])
    schrodinger = heisenberg_expectation(traj, A)
    U = propagator(op, 1.5)
    heis = lat.cell_volume * np.real(np.vdot(psi0.amplitudes, heisenberg_evolve(U, A) @ psi0.amplitudes))
    assert schrodinger[-1] == pytest.approx(heis, abs=1e-12)


def test_potential_spec_validation() -> None:
    with pytest.raises(ValueError, match="static potential needs W"):
        PotentialSpec("static")
    nls = PotentialSpec.nls(None, lambda rho: rho)
    with pytest.raises(ValueError, match="use evolve_nls"):
        nls.at(0.0, 4)
    assert PotentialSpec.static(RealField(np.array([0.5, -2.0]))).bound == 2.0


def test_default_time_step_respects_norm_estimate() -> None:
    _, op, _ = _setup()
    dt = default_time_step(op)
    assert 0 < dt <= 1e-2


def test_trajectory_save_and_observable_length(tmp_path) -> None:
    _, op, psi0 = _setup()
    traj = evolve_autonomous(op, psi0, [0.0, 1.0, 2.0])
    loaded = StateTrajectory.load(traj.save(tmp_path / "traj.npz"))
    assert np.array_equal(loaded.amplitudes, traj.amplitudes)
    with pytest.raises(ValueError, match="has 2 samples"):
        traj.to_csv(tmp_path / "t.csv", {"mass": [1.0, 2.0]})
    with pytest.raises(ValueError, match="strictly increasing"):
        StateTrajectory(times=[0.0, 0.0], states=[State(np.ones(2)), State(np.ones(2))], method="eigen", dt=0.0)


def test_eigenstate_density_is_stationary() -> None:
    lat, op, _ = _setup()
    energy, psi = eigenstate(op, 0)
    assert norm_squared(psi, lat) == pytest.approx(1.0, rel=1e-12)
    traj = evolve_autonomous(op, psi, np.linspace(0.0, 3.0, 4))
    density0 = np.abs(psi.amplitudes) ** 2
    for state in traj.states:
        assert np.allclose(np.abs(state.amplitudes) ** 2, density0, atol=1e-10)
    assert np.isfinite(energy)

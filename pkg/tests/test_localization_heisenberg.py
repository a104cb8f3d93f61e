from __future__ import annotations

import numpy as np
import pytest

from nonlocal_lightcone_lab.errors import HypothesisError
from nonlocal_lightcone_lab.kernelop import KernelSpec, assemble_operator, schur_kappa
from nonlocal_lightcone_lab.lattice import RealField, build_lattice, distance_function, gaussian_state, norm_squared, region_from_box
from nonlocal_lightcone_lab.opcalc import spectral_projection
from nonlocal_lightcone_lab.propagate import PotentialSpec
from nonlocal_lightcone_lab.verify import (
    default_states,
    duality_check,
    localization_state_check,
    main_inequality_check,
    maximal_velocity_check,
    positivity_preservation_check,
    random_psd,
)


def _setup():
    lat = build_lattice(1, 8.0, 32)
    op = assemble_operator(lat, KernelSpec(family="power_law", a=5.0))
    phi = distance_function(lat, region_from_box(lat, [-1.0], [1.0]))
    kappa = schur_kappa(op, phi, 1)
    return lat, op, phi, kappa


def test_default_states_live_in_x() -> None:
    lat, _, phi, _ = _setup()
    states = default_states(lat, phi)
    assert len(states) == 2
    for psi in states:
        assert norm_squared(psi, lat) == pytest.approx(1.0)
        assert np.all(psi.amplitudes[phi.values > 0] == 0)


def test_main_inequality_fits_one_constant_over_variants() -> None:
    _, op, phi, kappa = _setup()
    report = main_inequality_check(op, PotentialSpec.none(), phi, 1.5 * kappa, 2, [1.0, 2.0, 3.0], variants=["reflect", "shift"])
    assert report.passed
    assert set(report.details["variant_C"]) == {"base", "reflect", "shift"}
    assert report.smallest_C == pytest.approx(max(report.details["variant_C"].values()))
    assert report.details["state_check"]["consistent"]
    assert len(report.margins) == 9


def test_main_inequality_drops_times_below_one() -> None:
    _, op, phi, kappa = _setup()
    report = main_inequality_check(op, PotentialSpec.none(), phi, 1.5 * kappa, 2, [0.0, 0.5, 2.0], variants=[])
    assert report.samples == [2.0]
    with pytest.raises(ValueError, match="need sample times"):
        main_inequality_check(op, PotentialSpec.none(), phi, 1.5 * kappa, 2, [0.5], variants=[])


def test_checks_reject_speed_below_kappa() -> None:
    _, op, phi, kappa = _setup()
    with pytest.raises(HypothesisError, match="c > kappa"):
        main_inequality_check(op, PotentialSpec.none(), phi, 0.5 * kappa, 2, [1.0])
    with pytest.raises(HypothesisError, match="c > kappa"):
        maximal_velocity_check(op, PotentialSpec.none(), phi, kappa, 2, [1.0])


def test_localization_state_check_with_static_potential() -> None:
    lat, op, phi, kappa = _setup()
    W = RealField(0.2 * np.cos(0.5 * lat.coordinates[:, 0]))
    report = localization_state_check(op, PotentialSpec.static(W), phi, 1.5 * kappa, 2, [1.0, 2.0], C_V=0.2)
    assert report.passed
    assert report.details["states"] == 2


def test_maximal_velocity_bound() -> None:
    _, op, phi, kappa = _setup()
    report = maximal_velocity_check(op, PotentialSpec.none(), phi, 1.5 * kappa, 2, [0.0, 1.0, 2.0])
    assert report.passed
    with pytest.raises(HypothesisError, match="f\\(t\\) > c\\|t\\|"):
        maximal_velocity_check(op, PotentialSpec.none(), phi, 1.5 * kappa, 2, [1.0], f0=0.0)


def test_positivity_is_preserved() -> None:
    lat, op, _, _ = _setup()
    x = lat.coordinates[:, 0]
    V = PotentialSpec.time_dependent(lambda t: RealField(0.5 * np.cos(2 * t) * np.exp(-x * x)), bound=0.5)
    report = positivity_preservation_check(op, V, [0.0, 0.5, 1.0], count=3, seed=1, dt=0.05)
    assert report.passed
    assert len(report.margins) == 9


def test_positivity_rejects_indefinite_observable() -> None:
    _, op, _, _ = _setup()
    with pytest.raises(ValueError, match="positive semidefinite"):
        positivity_preservation_check(op, PotentialSpec.none(), [1.0], observables=[-np.eye(op.size)])


def test_random_psd_is_seeded_and_normalized() -> None:
    a = random_psd(6, 2, seed=4)
    b = random_psd(6, 2, seed=4)
    assert all(np.array_equal(x, y) for x, y in zip(a, b))
    assert np.linalg.norm(a[0], 2) == pytest.approx(1.0)


def test_duality_of_pictures() -> None:
    lat, op, phi, _ = _setup()
    psi0 = gaussian_state(lat, [0.0], 0.5)
    report = duality_check(op, PotentialSpec.none(), psi0, spectral_projection(phi, 0.0), [0.0, 1.0, 2.0])
    assert report.passed
    assert report.details["max_difference"] < 1e-10

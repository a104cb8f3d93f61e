from __future__ import annotations

import math

import numpy as np
import pytest

from nonlocal_lightcone_lab.cutoff import combine_cutoffs, make_cutoff
from nonlocal_lightcone_lab.errors import HypothesisError
from nonlocal_lightcone_lab.kernelop import KernelSpec, assemble_operator, schur_kappa
from nonlocal_lightcone_lab.lattice import RealField, build_lattice, distance_function, gaussian_state, region_from_box
from nonlocal_lightcone_lab.opcalc import AstloFamily
from nonlocal_lightcone_lab.propagate import PotentialSpec, evolve_autonomous
from nonlocal_lightcone_lab.verify import (
    commutator_bound_check,
    envelope_check,
    geometric_sandwich_check,
    random_lipschitz_field,
    randomized_sandwich_check,
    rme_check,
    sandwich_scale,
)


def _setup(points: int = 24):
    lat = build_lattice(1, 6.0, points, "truncated")
    op = assemble_operator(lat, KernelSpec(family="gaussian", sigma=0.7))
    phi = distance_function(lat, region_from_box(lat, [-1.0], [1.0]))
    chi = make_cutoff(0.5, 2)
    xi = combine_cutoffs(chi, chi, 1.0)
    return lat, op, phi, chi, xi


def test_sandwich_scale_needs_height_above_cone() -> None:
    assert sandwich_scale(lambda t: 2 * t + 1, 1.0, 0.5, 2.0) == pytest.approx(6.0)
    with pytest.raises(HypothesisError, match="f\\(t\\) > c'\\|t\\|"):
        sandwich_scale(lambda t: t, 1.0, 0.5, 2.0)


def test_geometric_sandwich_holds_for_distance_reference() -> None:
    lat, _, phi, chi, xi = _setup()
    report = geometric_sandwich_check(phi, chi, xi, lambda t: 2.0 * abs(t) + 1.0, 1.5, np.linspace(0.0, 4.0, 9))
    assert report.passed
    assert report.name == "geometric_sandwich"
    assert len(report.margins) == 9
    assert min(report.margins) >= -1e-14


def test_random_lipschitz_fields_are_two_lipschitz() -> None:
    from nonlocal_lightcone_lab.lattice import lipschitz_constant

    lat = build_lattice(1, 6.0, 24, "truncated")
    rng = np.random.default_rng(7)
    for _ in range(3):
        assert lipschitz_constant(lat, random_lipschitz_field(lat, rng)) <= 2.0 + 1e-12


def test_randomized_sandwich_counts_fields_and_is_seeded() -> None:
    lat, _, phi, chi, xi = _setup()
    times = np.linspace(0.0, 3.0, 7)
    first = randomized_sandwich_check(lat, chi, xi, lambda t: 2.0 * abs(t) + 1.0, 1.5, times, trials=4, seed=3, phi=phi)
    again = randomized_sandwich_check(lat, chi, xi, lambda t: 2.0 * abs(t) + 1.0, 1.5, times, trials=4, seed=3, phi=phi)
    assert first.passed
    assert first.details["fields"] == 5
    assert first.details["failed_fields"] == []
    assert first.margins == again.margins


def test_commutator_bound_fits_a_finite_constant() -> None:
    lat, op, phi, chi, xi = _setup()
    family = AstloFamily(phi, chi, 0.0, 2.0)
    report = commutator_bound_check(op, family, xi, 2, [0.0], scales=[2.0, 4.0])
    assert report.passed
    assert report.smallest_C is not None and math.isfinite(report.smallest_C) and report.smallest_C >= 0
    assert report.details["kappa"] == pytest.approx(schur_kappa(op, phi, 1))
    assert len(report.margins) == 2


def test_rme_requires_speed_above_kappa() -> None:
    lat, op, phi, chi, xi = _setup()
    kappa = schur_kappa(op, phi, 1)
    family = AstloFamily(phi, chi, 0.5 * kappa, 2.0)
    with pytest.raises(HypothesisError, match="c > kappa"):
        rme_check(op, PotentialSpec.none(), family, xi, 2, [1.0])


def test_rme_free_dynamics() -> None:
    lat, op, phi, chi, xi = _setup(points=16)
    kappa = schur_kappa(op, phi, 1)
    family = AstloFamily(phi, chi, 2.0 * kappa, 2.0)
    report = rme_check(op, PotentialSpec.none(), family, xi, 2, [0.0, 0.5, 1.0])
    assert report.passed
    assert report.samples == [0.5, 1.0]
    assert report.details["delta"] == pytest.approx(kappa)
    assert report.details["C_half_step"] >= 0.0


def test_envelope_reports_observed_expectations() -> None:
    lat, op, phi, chi, xi = _setup()
    kappa = schur_kappa(op, phi, 1)
    psi0 = gaussian_state(lat, [0.0], 0.5)
    traj = evolve_autonomous(op, psi0, np.linspace(0.0, 4.0, 9))
    family = AstloFamily(phi, chi, 1.2 * kappa, 4.0)
    report = envelope_check(traj, family, xi, 2)
    assert report.passed
    assert len(report.details["observed"]) == 9
    assert report.smallest_C is not None and report.smallest_C >= 0.0
    assert len(report.details["C_other_scales"]) == 1


def test_envelope_rejects_foreign_trajectory() -> None:
    lat, op, phi, chi, xi = _setup()
    other = build_lattice(1, 6.0, 32, "truncated")
    other_op = assemble_operator(other, KernelSpec(family="gaussian", sigma=0.7))
    traj = evolve_autonomous(other_op, gaussian_state(other, [0.0], 0.5), [0.0, 1.0])
    with pytest.raises(ValueError, match="different lattices"):
        envelope_check(traj, AstloFamily(phi, chi, 1.0, 2.0), xi, 2)


def test_rme_without_kinetic_term_needs_no_constant() -> None:
    lat = build_lattice(1, 6.0, 24, "truncated")
    op = assemble_operator(lat, KernelSpec(family="zero"))
    phi = distance_function(lat, region_from_box(lat, [-1.0], [1.0]))
    chi = make_cutoff(0.5, 2)
    xi = combine_cutoffs(chi, chi, 1.0)
    family = AstloFamily(phi, chi, 1.0, 2.0)
    report = rme_check(op, PotentialSpec.none(), family, xi, 2, [0.25, 0.5, 1.0, 2.0])
    assert report.details["kappa"] == 0.0
    assert report.passed
    assert report.smallest_C == 0.0
    assert report.details["C_half_step"] == 0.0
    assert report.stable is True


def test_rme_with_constant_reference_needs_no_constant() -> None:
    lat, op, _, chi, xi = _setup(points=16)
    phi = RealField(np.full(lat.site_count, 1.0))
    family = AstloFamily(phi, chi, 1.0, 2.0)
    report = rme_check(op, PotentialSpec.none(), family, xi, 2, [0.25, 0.5, 0.75])
    assert report.details["kappa"] == 0.0
    assert report.passed
    assert report.smallest_C == 0.0


def test_envelope_sweeps_scales_and_reports_the_largest_constant() -> None:
    lat, op, phi, chi, xi = _setup()
    kappa = schur_kappa(op, phi, 1)
    traj = evolve_autonomous(op, gaussian_state(lat, [0.0], 0.5), np.linspace(0.0, 4.0, 9))
    family = AstloFamily(phi, chi, 1.2 * kappa, 4.0)
    report = envelope_check(traj, family, xi, 2, stability_factors=(2.0, 4.0))
    by_scale = dict((scale, C) for scale, C in report.details["C_by_scale"])
    assert sorted(by_scale) == [4.0, 8.0, 16.0]
    assert report.smallest_C == max(by_scale.values())
    assert report.details["C_at_s"] == by_scale[4.0]
    assert report.stable is not None
    assert report.passed


def test_envelope_without_other_scales_has_no_stability_verdict() -> None:
    lat, op, phi, chi, xi = _setup()
    kappa = schur_kappa(op, phi, 1)
    traj = evolve_autonomous(op, gaussian_state(lat, [0.0], 0.5), np.linspace(0.0, 2.0, 5))
    report = envelope_check(traj, AstloFamily(phi, chi, 1.2 * kappa, 4.0), xi, 2, stability_factors=())
    assert report.stable is None
    assert report.details["C_other_scales"] == []
    assert report.details["C_by_scale"] == [[4.0, report.smallest_C]]

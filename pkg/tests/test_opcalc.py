from __future__ import annotations

import numpy as np
import pytest

from nonlocal_lightcone_lab.cutoff import AnalyticExtension, ConstantFunction, GaussianFunction, make_cutoff
from nonlocal_lightcone_lab.kernelop import KernelSpec, assemble_operator
from nonlocal_lightcone_lab.lattice import build_lattice, coordinate_field, distance_function, region_from_box
from nonlocal_lightcone_lab.opcalc import (
    AstloFamily,
    HermitianOperator,
    apply_function_dense,
    apply_function_diag,
    astlo,
    commutator_expansion,
    hamiltonian,
    hs_apply,
    iterated_commutator,
    kernel_commutator,
    potential_commutator_bound,
    remainder_by_quadrature,
    remainder_scaling,
    spectral_projection,
    symmetrized_expansion,
    time_derivative_astlo,
)


def _setup(points: int = 32):
    lat = build_lattice(1, 8.0, points, "truncated")
    op = assemble_operator(lat, KernelSpec(family="gaussian", sigma=1.0))
    phi = distance_function(lat, region_from_box(lat, [-1.0], [1.0]))
    return lat, op, phi


def test_hermitian_operator_rejects_non_hermitian() -> None:
    with pytest.raises(ValueError, match="not Hermitian"):
        HermitianOperator(np.array([[0.0, 1.0], [0.0, 0.0]]), "bad")
    with pytest.raises(ValueError, match="square matrix"):
        HermitianOperator(np.zeros((2, 3)))


def test_diagonal_and_dense_functions_agree() -> None:
    values = np.array([-1.0, 0.0, 0.5, 2.0])
    diag = apply_function_diag(values, np.exp)
    dense = apply_function_dense(HermitianOperator(np.diag(values)), np.exp)
    assert np.allclose(diag.matrix, dense.matrix, atol=1e-14)


def test_spectral_projection_is_an_indicator() -> None:
    lat, _, phi = _setup()
    P = spectral_projection(phi, 0.0)
    assert P.is_diagonal
    assert np.array_equal(P.data, (phi.values > 0).astype(float))


def test_kernel_commutator_matches_iterated_commutator() -> None:
    _, op, phi = _setup()
    H = hamiltonian(op).matrix
    for k in (1, 2, 3):
        assert np.allclose(kernel_commutator(op, phi, k), iterated_commutator(H, phi, k), atol=1e-13)
    dense_phi = HermitianOperator(np.diag(phi.values))
    assert np.allclose(iterated_commutator(H, dense_phi, 2), iterated_commutator(H, phi, 2), atol=1e-12)


def test_astlo_applies_chi_to_the_shifted_argument() -> None:
    lat, _, phi = _setup()
    chi = make_cutoff(0.5, 2)
    family = AstloFamily(phi, chi, 1.5, 2.0)
    A = astlo(family, -1.0)
    assert np.allclose(A.data, chi((phi.values - 1.5) / 2.0))


def test_time_derivative_matches_finite_difference() -> None:
    lat, _, phi = _setup()
    family = AstloFamily(phi, make_cutoff(0.5, 2), 1.0, 4.0)
    step = 1e-4
    fd = (astlo(family, 1.0 + step).data - astlo(family, 1.0 - step).data) / (2 * step)
    assert np.max(np.abs(time_derivative_astlo(family, 1.0).data - fd)) < 1e-6


def test_scale_must_be_positive() -> None:
    lat, _, phi = _setup()
    with pytest.raises(ValueError, match="scale_s must be > 0"):
        AstloFamily(phi, make_cutoff(0.5, 2), 1.0, 0.0)


@pytest.mark.parametrize("side", ["right", "left"])
def test_commutator_expansion_reconstructs_the_commutator(side: str) -> None:
    lat, op, _ = _setup()
    phi = coordinate_field(lat)
    family = AstloFamily(phi.shifted(-1.0), make_cutoff(0.5, 2), 0.0, 4.0)
    exp = commutator_expansion(op, family, 0.0, 2, side, with_ceiling=False)
    assert len(exp.terms) == 2
    assert exp.ceiling is None
    assert exp.reconstruction_error() < 1e-12


def test_symmetrized_expansion_parts_are_hermitian() -> None:
    lat, op, _ = _setup()
    family = AstloFamily(coordinate_field(lat), make_cutoff(0.5, 2), 0.0, 4.0)
    parts = symmetrized_expansion(op, family, 0.0, 2)
    for M in (parts.leading, parts.intermediate, parts.remainder):
        assert np.allclose(M, M.conj().T)
    assert parts.reconstruction_error() < 1e-10


def test_hs_apply_matches_diagonal_functional_calculus() -> None:
    values = np.linspace(-1.2, 1.3, 8)
    g = GaussianFunction(width=1.0)
    res = hs_apply(HermitianOperator(values), AnalyticExtension(g, 3), 0)
    expected = apply_function_diag(values, g.derivative).matrix
    assert np.max(np.abs(res.operator - expected)) < 1e-6
    assert res.nodes > 0


def test_hs_apply_first_derivative_on_dense_matrix() -> None:
    rng = np.random.default_rng(3)
    G = rng.standard_normal((6, 6))
    A = HermitianOperator(0.25 * (G + G.T))
    g = GaussianFunction(width=1.0)
    res = hs_apply(A, AnalyticExtension(g, 4), 1)
    expected = apply_function_dense(A, lambda v: g.derivative(v, 1)).matrix
    assert np.linalg.norm(res.operator - expected, 2) < 1e-6


def test_hs_apply_checks_order() -> None:
    with pytest.raises(ValueError, match="0 <= p <= nu"):
        hs_apply(HermitianOperator(np.zeros(3)), AnalyticExtension(GaussianFunction(), 1), 2)


@pytest.mark.parametrize("side", ["right", "left"])
def test_remainder_by_quadrature_matches_the_algebraic_remainder(side: str) -> None:
    lat, op, _ = _setup(16)
    family = AstloFamily(coordinate_field(lat), make_cutoff(0.9, 2), 0.0, 2.0)
    algebraic = commutator_expansion(op, family, 0.0, 1, side, with_ceiling=False).remainder
    quad = remainder_by_quadrature(op, family, 0.0, 1, side)
    scale = np.linalg.norm(algebraic, 2)
    assert scale > 0.0
    assert np.linalg.norm(quad.matrix - algebraic, 2) <= 1e-2 * scale + quad.error_estimate


def test_potential_commutator_bound() -> None:
    lat, _, phi = _setup(16)
    family = AstloFamily(phi, make_cutoff(0.5, 2), 0.0, 2.0)
    diag = potential_commutator_bound(HermitianOperator(np.cos(lat.coordinates[:, 0])), family, 0.0)
    assert (diag.measured, diag.reference, diag.ratio) == (0.0, 0.0, 0.0)

    rng = np.random.default_rng(5)
    G = rng.standard_normal((lat.site_count, lat.site_count))
    bound = potential_commutator_bound(HermitianOperator(0.5 * (G + G.T)), family, 0.0)
    assert bound.measured > 0.0 and bound.reference > 0.0
    assert np.isfinite(bound.ratio)


def test_hs_apply_of_the_zero_function_is_zero() -> None:
    A = HermitianOperator(np.array([[0.0, 1.0], [1.0, 0.0]]))
    res = hs_apply(A, AnalyticExtension(ConstantFunction(0.0), 2), 0)
    assert np.all(res.operator == 0.0)
    assert res.nodes == 0


@pytest.mark.parametrize("side", ["right", "left"])
def test_truncation_remainder_decays_like_s_to_minus_n_plus_one(side: str) -> None:
    lat = build_lattice(1, 0.32, 64, "truncated")
    op = assemble_operator(lat, KernelSpec(family="gaussian", sigma=0.01))
    study = remainder_scaling(op, coordinate_field(lat), make_cutoff(0.9, 2), 2, (4.0, 16.0, 64.0, 256.0), side)
    assert abs(study.slope + 3.0) <= 0.2
    assert study.remainder_spread < 10.0
    assert list(study.truncation_norms) == sorted(study.truncation_norms, reverse=True)

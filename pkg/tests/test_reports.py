from __future__ import annotations

import math

import numpy as np
import pytest

from nonlocal_lightcone_lab.errors import HypothesisError
from nonlocal_lightcone_lab.models import DecayFit, InequalityReport, RunManifest
from nonlocal_lightcone_lab.verify.reports import (
    min_eigenvalue,
    operator_tolerance,
    proof_parameters,
    scalar_constant,
    scale_uniformity_verdict,
    smallest_constant,
    stability_verdict,
)


def test_report_from_margins_tracks_tolerance() -> None:
    assert InequalityReport.from_margins("a", [0.1, -1e-9]).passed
    assert not InequalityReport.from_margins("b", [0.1, -1e-3]).passed
    assert not InequalityReport.from_margins("c", [float("nan")]).passed


def test_report_rejects_inconsistent_passed_flag() -> None:
    with pytest.raises(ValueError, match="disagrees with its margins"):
        InequalityReport(name="x", margins=[-1.0], passed=True)


def test_report_ok_needs_stability_and_finite_constant() -> None:
    assert not InequalityReport.from_margins("s", [0.0], stable=False).ok
    assert not InequalityReport.from_margins("c", [0.0], smallest_C=math.inf).ok
    assert InequalityReport.from_margins("fine", [0.0], smallest_C=2.0, stable=True).ok


def test_decay_fit_needs_enough_points() -> None:
    with pytest.raises(ValueError, match="needs >= 8 points"):
        DecayFit(times=[1.0], values=[1.0], fitted_exponent=-2.0, fit_window=(1.0, 2.0), residual=0.0, points_used=3)
    zero = DecayFit(times=[], values=[], fit_window=(1.0, 2.0), status="exact_zero")
    assert zero.passes(2)
    fit = DecayFit(times=[], values=[], fitted_exponent=-1.8, fit_window=(1.0, 2.0), residual=0.0, points_used=10)
    assert fit.passes(2)
    assert not fit.passes(3)


def test_manifest_consistency() -> None:
    with pytest.raises(ValueError, match="cannot be ok"):
        RunManifest(scenario="s", config_hash="h", tool_version="0", seed=0, failure="boom")
    with pytest.raises(ValueError, match="failing checks"):
        RunManifest(scenario="s", config_hash="h", tool_version="0", seed=0, summary={"a": False})
    m = RunManifest(scenario="s", config_hash="h", tool_version="0", seed=0, summary={"a": True, "b": False}, ok=False)
    assert (m.checks_passed, m.checks_total) == (1, 2)
    assert "stage_seconds" not in m.model_dump()


def test_proof_parameters_default_split() -> None:
    params = proof_parameters(1.0, 4.0)
    assert params.delta == pytest.approx(1.0)
    assert params.c_prime == pytest.approx(2.0)
    with pytest.raises(HypothesisError, match="must exceed kappa"):
        proof_parameters(2.0, 2.0)
    with pytest.raises(ValueError, match="delta must lie in"):
        proof_parameters(1.0, 2.0, delta=1.5)


def test_smallest_constant_scalar_and_matrix() -> None:
    A = np.diag([-2.0, 1.0])
    assert smallest_constant(A, 1.0) == pytest.approx(2.0)
    assert smallest_constant(A, np.diag([2.0, 1.0])) == pytest.approx(1.0)
    assert smallest_constant(np.eye(2), 1.0) == 0.0


def test_fitted_constant_clears_its_own_tolerance() -> None:
    rng = np.random.default_rng(0)
    tol = 3.2e-8
    for _ in range(200):
        M = rng.standard_normal((40, 40))
        A = 0.5 * (M + M.T)
        B = np.diag(rng.uniform(0.5, 2.0, 40))
        C = smallest_constant(A, B, tol)
        assert C > 0
        assert min_eigenvalue(A + C * B) >= -tol
        assert min_eigenvalue(A + smallest_constant(A, 1.5, tol) * 1.5) >= -tol


def test_constant_is_zero_inside_half_the_tolerance() -> None:
    tol = 1e-8
    assert smallest_constant(np.diag([-0.25 * tol, 1.0]), np.eye(2), tol) == 0.0
    assert smallest_constant(np.diag([-tol, 1.0]), np.eye(2), tol) == pytest.approx(tol)
    assert scalar_constant(0.4 * tol, 2.0, tol) == 0.0
    assert scalar_constant(1.0, 2.0, tol) == pytest.approx(0.5)
    assert scalar_constant(1.0, 0.0) == math.inf


@pytest.mark.parametrize(
    "values,expected",
    [
        ([1.0, 0.9, 0.85], True),
        ([1.0, 0.7], False),
        ([0.0, 0.0], True),
        ([1.0, float("inf")], False),
        ([], False),
    ],
)
def test_stability_verdict(values: list, expected: bool) -> None:
    assert stability_verdict(values) is expected


def test_operator_tolerance_scales_with_rhs() -> None:
    assert operator_tolerance([0.5]) == pytest.approx(1e-8)
    assert operator_tolerance([10.0, 100.0]) == pytest.approx(1e-6)


@pytest.mark.parametrize(
    "by_scale,expected",
    [
        ({10.0: 1.0, 20.0: 1.15}, True),
        ({10.0: 1.0, 20.0: 0.1}, True),
        ({20.0: 1.0, 10.0: 0.5}, False),
        ({10.0: 0.0, 20.0: 1e-13}, True),
        ({10.0: 1.0, 20.0: math.inf}, False),
        ({}, False),
    ],
)
def test_scale_uniformity_is_one_sided(by_scale: dict, expected: bool) -> None:
    assert scale_uniformity_verdict(by_scale) is expected

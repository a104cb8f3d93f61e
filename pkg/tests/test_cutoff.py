from __future__ import annotations

import math

import numpy as np
import pytest

from nonlocal_lightcone_lab.cutoff import (
    AnalyticExtension,
    ConstantFunction,
    GaussianFunction,
    PolynomialFunction,
    combine_cutoffs,
    eta_profile,
    extension_measure,
    fit_remainder_constant,
    make_cutoff,
    membership_violations,
    remainder_integral,
    tabulate_cutoff,
    weighted_norm,
)
from nonlocal_lightcone_lab.errors import DivergenceError
from nonlocal_lightcone_lab.util.tables import read_csv


@pytest.mark.parametrize(
    "kwargs,message",
    [
        ({"delta": 1.5, "n": 2}, "delta must lie in"),
        ({"delta": 0.5, "n": 0}, "n must be >= 1"),
        ({"delta": 0.5, "n": 2, "family": "tanh"}, "cutoff family"),
        ({"delta": 0.5, "n": 2, "bump_exponent": 3}, "bump_exponent must be >="),
    ],
)
def test_make_cutoff_validation(kwargs: dict, message: str) -> None:
    with pytest.raises(ValueError, match=message):
        make_cutoff(**kwargs)


@pytest.mark.parametrize("family", ["polynomial", "smooth_exp"])
def test_cutoff_is_a_member_of_the_class(family: str) -> None:
    chi = make_cutoff(0.5, 2, family=family, height=2.0)
    assert membership_violations(chi) == []
    assert float(chi(-0.1)) == 0.0
    assert float(chi(0.7)) == pytest.approx(2.0, rel=1e-12)
    assert chi.max_order >= 2 * (2 + 4)


@pytest.mark.parametrize("family", ["polynomial", "smooth_exp"])
def test_first_derivative_matches_finite_difference(family: str) -> None:
    chi = make_cutoff(0.5, 2, family=family)
    x, eps = 0.2, 1e-6
    fd = (float(chi(x + eps)) - float(chi(x - eps))) / (2 * eps)
    assert float(chi.derivative(x, 1)) == pytest.approx(fd, rel=1e-5)


def test_derivative_order_is_bounded() -> None:
    chi = make_cutoff(0.5, 1)
    with pytest.raises(ValueError, match="exceeds the available order"):
        chi.derivative(0.1, chi.max_order + 1)


def test_combined_cutoff_dominates_value_and_derivative() -> None:
    xi1 = make_cutoff(0.5, 2)
    xi2 = make_cutoff(0.5, 3, family="smooth_exp", height=0.5)
    c = 2.0
    xi = combine_cutoffs(xi1, xi2, c)
    mu = np.linspace(-0.1, 0.6, 301)
    assert np.all(xi(mu) >= xi1(mu) + c * xi2(mu) - 1e-12)
    assert np.all(xi.derivative(mu, 1) >= xi1.derivative(mu, 1) + c * xi2.derivative(mu, 1) - 1e-10)


def test_combine_cutoffs_requires_equal_delta() -> None:
    with pytest.raises(ValueError, match="equal delta"):
        combine_cutoffs(make_cutoff(0.5, 2), make_cutoff(0.4, 2), 1.0)


def test_eta_profile_plateaus() -> None:
    assert eta_profile(np.array([0.0, 0.9, -1.0])).tolist() == [1.0, 1.0, 1.0]
    assert eta_profile(np.array([2.0, -3.0])).tolist() == [0.0, 0.0]
    assert 0.0 < float(eta_profile(1.5)) < 1.0
    with pytest.raises(ValueError):
        eta_profile(0.0, 3)


def test_gaussian_derivative() -> None:
    g = GaussianFunction(width=1.0)
    x = 0.7
    assert float(g.derivative(x, 1)) == pytest.approx(-2 * x * math.exp(-x * x), rel=1e-12)


def test_extension_restricts_to_the_function_on_the_real_axis() -> None:
    chi = make_cutoff(0.5, 2)
    ext = AnalyticExtension(chi, 2)
    xs = np.linspace(-0.2, 0.8, 11)
    assert np.allclose(ext.value(xs, np.zeros_like(xs)).real, chi(xs), atol=1e-14)
    with pytest.raises(ValueError, match="needs derivatives up to"):
        AnalyticExtension(GaussianFunction(max_order=3), 2)


def test_weighted_norm_diverges_at_p0_for_a_plateau() -> None:
    chi = make_cutoff(0.5, 2)
    with pytest.raises(DivergenceError, match="p=0 diverges"):
        weighted_norm(chi, 0, 1)
    assert float(weighted_norm(chi, 1, 1)) > 0.0
    assert float(weighted_norm(GaussianFunction(width=0.5), 0, 1)) > 0.0


def test_remainder_integral_is_finite_and_order_checked() -> None:
    ext = AnalyticExtension(GaussianFunction(width=0.5), 1)
    res = remainder_integral(ext, 0)
    assert math.isfinite(res.value) and res.value > 0.0
    assert res.error >= 0.0
    with pytest.raises(ValueError, match="0 <= p <= nu"):
        remainder_integral(ext, 2)


def test_tabulate_cutoff(tmp_path) -> None:
    chi = make_cutoff(0.5, 1)
    header, rows = read_csv(tabulate_cutoff(chi, tmp_path / "cutoff.csv", samples=33))
    assert header[:3] == ["x", "chi", "d1"]
    assert len(header) == chi.max_order + 2
    assert len(rows) == 33


@pytest.mark.parametrize("family", ["polynomial", "smooth_exp"])
def test_root_squares_to_the_derivative(family: str) -> None:
    chi = make_cutoff(0.5, 2, family=family)
    mu = np.linspace(0.05, 0.45, 9)
    assert np.allclose(chi.root(mu) ** 2, chi.derivative(mu, 1), rtol=1e-10, atol=1e-300)
    assert float(chi.root_derivative(0.6, 1)) == 0.0


def test_polynomial_function_derivatives() -> None:
    f = PolynomialFunction((1.0, 0.0, 3.0))
    assert float(f(2.0)) == pytest.approx(13.0)
    assert float(f.derivative(2.0, 1)) == pytest.approx(12.0)
    assert float(f.derivative(2.0, 3)) == 0.0
    assert f.support == (-math.inf, math.inf)


def test_fit_remainder_constant_takes_the_largest_ratio() -> None:
    fit = fit_remainder_constant([GaussianFunction(width=1.0), GaussianFunction(width=2.0)], 1, 3)
    assert len(fit.ratios) == 2
    assert fit.constant == max(fit.ratios)
    assert all(r > 0 and math.isfinite(r) for r in fit.ratios)
    with pytest.raises(ValueError, match="at least one function"):
        fit_remainder_constant([], 1, 3)


def test_extension_measure_vanishes_on_the_real_axis() -> None:
    ext = AnalyticExtension(make_cutoff(0.5, 2), 2)
    assert abs(extension_measure(ext, 0.2 + 0.0j)) < 1e-15
    assert isinstance(extension_measure(ext, 0.2 + 0.05j), complex)
    grid = extension_measure(ext, np.array([0.1 + 0.1j, 0.3 + 0.2j]))
    assert grid.shape == (2,)


def test_zero_function_has_zero_remainder() -> None:
    ext = AnalyticExtension(ConstantFunction(0.0), 2)
    assert remainder_integral(ext, 1).value == 0.0
    assert float(weighted_norm(ConstantFunction(0.0), 0, 2)) == 0.0

from __future__ import annotations

import numpy as np
import pytest

from nonlocal_lightcone_lab.lattice import (
    RealField,
    RegionSet,
    State,
    build_lattice,
    coordinate_field,
    distance_function,
    empty_region,
    enlarge_region,
    full_region,
    gaussian_state,
    lipschitz_constant,
    norm_squared,
    region_from_box,
    region_from_sites,
    region_mass,
    restrict_state,
    write_field_csv,
)


def test_build_lattice_rejects_too_few_points() -> None:
    with pytest.raises(ValueError, match="points_per_axis must be >= 8"):
        build_lattice(1, 4.0, 4)


@pytest.mark.parametrize("dim", [0, 3])
def test_build_lattice_rejects_unsupported_dim(dim: int) -> None:
    with pytest.raises(ValueError, match="dim must be one of"):
        build_lattice(dim, 4.0, 16)


def test_spacing_and_coordinates() -> None:
    lat = build_lattice(1, 4.0, 8)
    assert lat.spacing == pytest.approx(1.0)
    assert lat.site_count == 8
    assert lat.coordinates[:, 0].tolist() == [-4.0, -3.0, -2.0, -1.0, 0.0, 1.0, 2.0, 3.0]

    lat2 = build_lattice(2, 4.0, 8)
    assert lat2.site_count == 64
    assert lat2.coordinates.shape == (64, 2)


def test_periodic_distance_uses_minimum_image() -> None:
    periodic = build_lattice(1, 4.0, 8, "periodic")
    truncated = build_lattice(1, 4.0, 8, "truncated")
    assert periodic.distances([0], [7])[0, 0] == pytest.approx(1.0)
    assert truncated.distances([0], [7])[0, 0] == pytest.approx(7.0)


def test_region_set_empty_needs_opt_in() -> None:
    with pytest.raises(ValueError, match="is empty"):
        RegionSet(np.zeros(8, dtype=bool), "nothing")
    assert RegionSet(np.zeros(8, dtype=bool), "nothing", allow_empty=True).is_empty


def test_distance_function_is_zero_on_the_set() -> None:
    lat = build_lattice(1, 8.0, 16, "truncated")
    X = region_from_box(lat, [-1.0], [1.0])
    assert X.size == 3
    phi = distance_function(lat, X)
    assert np.all(phi.values[X.mask] == 0.0)
    x = lat.coordinates[:, 0]
    assert phi.values[x == 3.0][0] == pytest.approx(2.0)
    assert phi.values[x == -8.0][0] == pytest.approx(7.0)
    assert lipschitz_constant(lat, phi) == pytest.approx(1.0)


def test_enlarge_region_contains_original() -> None:
    lat = build_lattice(1, 8.0, 16, "truncated")
    X = region_from_box(lat, [-1.0], [1.0])
    big = enlarge_region(lat, X, 2.0)
    assert big.size == 7
    assert np.all(big.mask[X.mask])
    with pytest.raises(ValueError):
        enlarge_region(lat, X, -1.0)


def test_gaussian_state_is_normalized_with_cell_weight() -> None:
    lat = build_lattice(2, 6.0, 24)
    psi = gaussian_state(lat, [0.5, -0.5], 1.0, momentum=[1.0, 0.0])
    assert norm_squared(psi, lat) == pytest.approx(1.0, rel=1e-12)


def test_restrict_state_zeroes_outside_and_renormalizes() -> None:
    lat = build_lattice(1, 8.0, 32, "truncated")
    psi = gaussian_state(lat, [0.0], 2.0)
    X = region_from_box(lat, [-1.0], [1.0])
    inner = restrict_state(psi, X, lat)
    assert np.all(inner.amplitudes[~X.mask] == 0)
    assert region_mass(inner, X, lat) == pytest.approx(1.0, rel=1e-12)


def test_region_mass_rejects_mismatched_mask() -> None:
    lat = build_lattice(1, 4.0, 8)
    psi = State(np.ones(8))
    with pytest.raises(ValueError, match="does not match mask length"):
        region_mass(psi, RegionSet(np.ones(4, dtype=bool)), lat)


def test_real_field_rejects_non_finite() -> None:
    with pytest.raises(ValueError, match="finite"):
        RealField(np.array([0.0, np.nan]))


def test_coordinate_field_is_one_lipschitz_on_open_box() -> None:
    lat = build_lattice(1, 4.0, 16, "truncated")
    phi = coordinate_field(lat)
    assert lipschitz_constant(lat, phi) == pytest.approx(1.0)
    assert np.allclose(phi.shifted(1.5).values, phi.values - 1.5)


def test_write_field_csv(tmp_path) -> None:
    lat = build_lattice(1, 4.0, 8)
    X = region_from_box(lat, [0.0], [1.0])
    out = write_field_csv(tmp_path / "x.csv", lat, X, "in_x")
    lines = out.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "site_index,x0,in_x"
    assert len(lines) == 9


def test_region_constructors_and_complement() -> None:
    lat = build_lattice(1, 4.0, 8, "truncated")
    X = region_from_sites(lat, [0, 3, 3])
    assert X.size == 2
    assert X.complement().size == 6
    assert full_region(lat).complement().is_empty
    assert empty_region(lat).is_empty
    with pytest.raises(ValueError, match="out of range"):
        region_from_sites(lat, [8])

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .util.tables import write_csv


logger = logging.getLogger(__name__)

MIN_POINTS_PER_AXIS = 8
SUPPORTED_DIMS = (1, 2)
# Rows per block when forming pairwise distance matrices.
_CHUNK_ROWS = 512


class Boundary(str, Enum):
    PERIODIC = "periodic"
    TRUNCATED = "truncated"


def _readonly(values: np.ndarray) -> np.ndarray:
    values.setflags(write=False)
    return values


@dataclass(frozen=True)
class Lattice:
    """
    Uniform grid on the box [-L, L)^d.

    Sites sit at x_k = -L + k*h (k = 0..N-1 per axis), site index is row-major over axes.
    In periodic mode distances use the minimum image on the torus of side 2L.
    """

    dim: int
    half_width: float
    points_per_axis: int
    boundary: Boundary = Boundary.PERIODIC

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_width / self.points_per_axis

    @property
    def period(self) -> float:
        return 2.0 * self.half_width

    @property
    def site_count(self) -> int:
        return self.points_per_axis**self.dim

    @property
    def cell_volume(self) -> float:
        return self.spacing**self.dim

    @property
    def periodic(self) -> bool:
        return self.boundary == Boundary.PERIODIC

    @cached_property
    def axis(self) -> np.ndarray:
        return _readonly(-self.half_width + self.spacing * np.arange(self.points_per_axis, dtype=float))

    @cached_property
    def coordinates(self) -> np.ndarray:
        if self.dim == 1:
            coords = self.axis.reshape(-1, 1).copy()
        else:
            grids = np.meshgrid(*([self.axis] * self.dim), indexing="ij")
            coords = np.stack([g.reshape(-1) for g in grids], axis=1)
        return _readonly(coords)

    @property
    def diameter(self) -> float:
        if self.periodic:
            return self.half_width * np.sqrt(self.dim)
        return self.period * np.sqrt(self.dim)

    def displacements(self, rows: np.ndarray, cols: np.ndarray, axis: int) -> np.ndarray:
        """Signed displacement x_row - x_col along one axis (minimum image when periodic)."""
        xr = self.coordinates[rows, axis]
        xc = self.coordinates[cols, axis]
        diff = xr[:, None] - xc[None, :]
        if self.periodic:
            diff = diff - self.period * np.round(diff / self.period)
        return diff

    def distances(self, rows: Optional[np.ndarray] = None, cols: Optional[np.ndarray] = None) -> np.ndarray:
        r = np.arange(self.site_count) if rows is None else np.asarray(rows)
        c = np.arange(self.site_count) if cols is None else np.asarray(cols)
        sq = np.zeros((r.size, c.size), dtype=float)
        for ax in range(self.dim):
            sq += self.displacements(r, c, ax) ** 2
        return np.sqrt(sq)

    def check_sites(self, values: np.ndarray, what: str) -> None:
        if values.shape[0] != self.site_count:
            raise ValueError(f"{what} has length {values.shape[0]}, expected site count {self.site_count}")


def build_lattice(
    dim: int,
    half_width: float,
    points_per_axis: int,
    boundary: Union[str, Boundary] = Boundary.PERIODIC,
) -> Lattice:
    if dim not in SUPPORTED_DIMS:
        raise ValueError(f"dim must be one of {SUPPORTED_DIMS}, got {dim}")
    if not (half_width > 0):
        raise ValueError(f"half_width must be > 0, got {half_width}")
    if points_per_axis < MIN_POINTS_PER_AXIS:
        raise ValueError(f"points_per_axis must be >= {MIN_POINTS_PER_AXIS} (too few points), got {points_per_axis}")
    return Lattice(
        dim=int(dim),
        half_width=float(half_width),
        points_per_axis=int(points_per_axis),
        boundary=Boundary(boundary),
    )


@dataclass(frozen=True, eq=False)
class RegionSet:
    mask: np.ndarray
    description: str = ""
    allow_empty: bool = False

    def __post_init__(self) -> None:
        mask = np.array(self.mask, dtype=bool).reshape(-1)
        if not self.allow_empty and not mask.any():
            raise ValueError(f"region {self.description!r} is empty (pass allow_empty=True to permit)")
        object.__setattr__(self, "mask", _readonly(mask))

    @property
    def size(self) -> int:
        return int(self.mask.sum())

    @property
    def is_empty(self) -> bool:
        return not self.mask.any()

    def complement(self, description: str = "") -> "RegionSet":
        return RegionSet(~self.mask, description or f"complement of {self.description}", allow_empty=True)

    def indices(self) -> np.ndarray:
        return np.flatnonzero(self.mask)


@dataclass(frozen=True, eq=False)
class RealField:
    values: np.ndarray
    units: str = "dimensionless"

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=float).reshape(-1)
        if not np.all(np.isfinite(values)):
            raise ValueError("RealField entries must be finite")
        object.__setattr__(self, "values", _readonly(values))

    def __len__(self) -> int:
        return int(self.values.size)

    def shifted(self, b: float) -> "RealField":
        return RealField(self.values - b, self.units)

    def scaled(self, factor: float) -> "RealField":
        return RealField(self.values * factor, self.units)

    def reflected(self) -> "RealField":
        return RealField(-self.values, self.units)


@dataclass(frozen=True, eq=False)
class State:
    amplitudes: np.ndarray
    time_stamp: float = 0.0

    def __post_init__(self) -> None:
        amps = np.array(self.amplitudes, dtype=complex).reshape(-1)
        if not np.all(np.isfinite(amps)):
            raise ValueError("State amplitudes must be finite")
        object.__setattr__(self, "amplitudes", _readonly(amps))

    def __len__(self) -> int:
        return int(self.amplitudes.size)


def full_region(lat: Lattice, description: str = "whole lattice") -> RegionSet:
    return RegionSet(np.ones(lat.site_count, dtype=bool), description)


def empty_region(lat: Lattice, description: str = "empty") -> RegionSet:
    return RegionSet(np.zeros(lat.site_count, dtype=bool), description, allow_empty=True)


def region_from_sites(lat: Lattice, indices: Iterable[int], description: str = "") -> RegionSet:
    mask = np.zeros(lat.site_count, dtype=bool)
    idx = np.asarray(list(indices), dtype=int)
    if idx.size and (idx.min() < 0 or idx.max() >= lat.site_count):
        raise ValueError("site index out of range")
    mask[idx] = True
    return RegionSet(mask, description or f"{idx.size} sites")


def region_from_box(
    lat: Lattice,
    lower: Sequence[float],
    upper: Sequence[float],
    description: str = "",
) -> RegionSet:
    lo = np.asarray(lower, dtype=float).reshape(-1)
    hi = np.asarray(upper, dtype=float).reshape(-1)
    if lo.size != lat.dim or hi.size != lat.dim:
        raise ValueError(f"box bounds must have {lat.dim} components")
    if np.any(hi < lo):
        raise ValueError("box upper bound must be >= lower bound")
    coords = lat.coordinates
    mask = np.all((coords >= lo) & (coords <= hi), axis=1)
    return RegionSet(mask, description or f"box {lo.tolist()}..{hi.tolist()}")


def distance_function(lat: Lattice, X: RegionSet) -> RealField:
    lat.check_sites(X.mask, "region mask")
    members = X.indices()
    if members.size == 0:
        raise ValueError("distance_function requires a nonempty set X")
    out = np.empty(lat.site_count, dtype=float)
    for start in range(0, lat.site_count, _CHUNK_ROWS):
        rows = np.arange(start, min(start + _CHUNK_ROWS, lat.site_count))
        out[rows] = lat.distances(rows, members).min(axis=1)
    out[X.mask] = 0.0
    return RealField(out, units="length")


def enlarge_region(lat: Lattice, X: RegionSet, a: float, *, distance: Optional[RealField] = None) -> RegionSet:
    if a < 0:
        raise ValueError(f"enlargement radius must be >= 0, got {a}")
    d = distance if distance is not None else distance_function(lat, X)
    return RegionSet(d.values <= a, f"{X.description} enlarged by {a:g}")


def norm_squared(psi: State, lat: Lattice) -> float:
    lat.check_sites(psi.amplitudes, "state")
    return float(lat.cell_volume * np.sum(np.abs(psi.amplitudes) ** 2))


def region_mass(psi: State, mask: RegionSet, lat: Lattice) -> float:
    if psi.amplitudes.size != mask.mask.size:
        raise ValueError(
            f"state length {psi.amplitudes.size} does not match mask length {mask.mask.size}"
        )
    lat.check_sites(psi.amplitudes, "state")
    dens = np.abs(psi.amplitudes[mask.mask]) ** 2
    return float(lat.cell_volume * np.sum(dens))


def coordinate_field(lat: Lattice, axis: int = 0) -> RealField:
    return RealField(lat.coordinates[:, axis].copy(), units="length")


def lipschitz_constant(lat: Lattice, field: Union[RealField, np.ndarray]) -> float:
    """Largest |f(x) - f(y)| / |x - y| over distinct site pairs (lattice metric)."""
    values = field.values if isinstance(field, RealField) else np.asarray(field, dtype=float)
    lat.check_sites(values, "field")
    best = 0.0
    for start in range(0, lat.site_count, _CHUNK_ROWS):
        rows = np.arange(start, min(start + _CHUNK_ROWS, lat.site_count))
        dist = lat.distances(rows, None)
        dv = np.abs(values[rows][:, None] - values[None, :])
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(dist > 0, dv / np.where(dist > 0, dist, 1.0), 0.0)
        best = max(best, float(ratio.max()))
    return best


def gaussian_state(
    lat: Lattice,
    center: Sequence[float],
    width: float,
    momentum: Optional[Sequence[float]] = None,
) -> State:
    """Normalized Gaussian wave packet (unit L2 norm with weight h^d)."""
    if width <= 0:
        raise ValueError("width must be > 0")
    c = np.asarray(center, dtype=float).reshape(-1)
    if c.size != lat.dim:
        raise ValueError(f"center must have {lat.dim} components")
    disp = lat.coordinates - c[None, :]
    if lat.periodic:
        disp = disp - lat.period * np.round(disp / lat.period)
    r2 = np.sum(disp**2, axis=1)
    amps = np.exp(-r2 / (2.0 * width**2)).astype(complex)
    if momentum is not None:
        k = np.asarray(momentum, dtype=float).reshape(-1)
        amps = amps * np.exp(1j * (disp @ k))
    return normalized(State(amps), lat)


def normalized(psi: State, lat: Lattice) -> State:
    n2 = norm_squared(psi, lat)
    if n2 <= 0:
        raise ValueError("cannot normalize the zero state")
    return State(psi.amplitudes / np.sqrt(n2), psi.time_stamp)


def restrict_state(psi: State, region: RegionSet, lat: Lattice) -> State:
    """Zero the state outside `region` and renormalize."""
    amps = np.where(region.mask, psi.amplitudes, 0.0)
    return normalized(State(amps, psi.time_stamp), lat)


def write_field_csv(
    path: Union[str, Path],
    lat: Lattice,
    values: Union[RealField, RegionSet, np.ndarray],
    value_name: str = "value",
) -> Path:
    if isinstance(values, RealField):
        data = values.values
    elif isinstance(values, RegionSet):
        data = values.mask.astype(int)
    else:
        data = np.asarray(values)
    lat.check_sites(data, value_name)
    header = ["site_index", *[f"x{ax}" for ax in range(lat.dim)], value_name]
    coords = lat.coordinates
    rows = ([i, *coords[i].tolist(), data[i]] for i in range(lat.site_count))
    return write_csv(path, header, rows)

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from pathlib import Path
from typing import Optional, Union

import numpy as np
import scipy.linalg
from pydantic import BaseModel, ConfigDict, model_validator

from .errors import DivergenceError, EigensolverError
from .lattice import Lattice, RealField, lipschitz_constant
from .quadrature import ZERO, QuadResult, dyadic_tail, integrate_interval
from .util.tables import write_csv


logger = logging.getLogger(__name__)

MAX_ORDER = 8
# Operators up to this many sites also get a (row, col, value) CSV on export.
CSV_EXPORT_MAX_SITES = 256
_CHUNK_ROWS = 512


class KernelFamily(str, Enum):
    ZERO = "zero"
    POWER_LAW = "power_law"
    GAUSSIAN = "gaussian"
    COMPACT = "compact"
    SINGULAR_POWER = "singular_power"


def sphere_area(dim: int) -> float:
    """Surface measure of the unit sphere in R^d (2 for d=1, 2*pi for d=2)."""
    return 2.0 * math.pi ** (dim / 2.0) / math.gamma(dim / 2.0)


class KernelSpec(BaseModel):
    """
    Radial kernel profile J with K(x, y) = J(|x - y|).

    power_law:      amplitude * (1 + r^2)^(-a/2)
    gaussian:       amplitude * exp(-(r/sigma)^2)
    compact:        amplitude * 1{r <= radius}
    singular_power: amplitude * max(r, epsilon)^(-b) * (1 + r^2)^(-a/2), a defaults to 0
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    family: KernelFamily = KernelFamily.POWER_LAW
    dim: int = 1
    amplitude: float = 1.0
    a: Optional[float] = None
    sigma: Optional[float] = None
    radius: Optional[float] = None
    b: Optional[float] = None
    epsilon: Optional[float] = None

    @model_validator(mode="after")
    def _validate_family_params(self) -> "KernelSpec":
        if self.dim not in (1, 2):
            raise ValueError(f"kernel.dim must be 1 or 2, got {self.dim}")
        if not (self.amplitude > 0):
            raise ValueError("kernel.amplitude must be > 0")
        fam = self.family
        if fam == KernelFamily.POWER_LAW:
            if self.a is None or not (self.a > 0):
                raise ValueError("kernel.a must be > 0 for the power_law family")
        elif fam == KernelFamily.GAUSSIAN:
            if self.sigma is None or not (self.sigma > 0):
                raise ValueError("kernel.sigma must be > 0 for the gaussian family")
        elif fam == KernelFamily.COMPACT:
            if self.radius is None or not (self.radius > 0):
                raise ValueError("kernel.radius must be > 0 for the compact family")
        elif fam == KernelFamily.SINGULAR_POWER:
            if self.b is None or not (0 < self.b < self.dim + 1):
                raise ValueError(f"kernel.b must satisfy 0 < b < dim + 1 = {self.dim + 1}")
            if self.epsilon is None or not (self.epsilon > 0):
                raise ValueError("kernel.epsilon must be > 0 for the singular_power family")
            if self.a is not None and self.a < 0:
                raise ValueError("kernel.a must be >= 0 for the singular_power family")
        return self

    @property
    def outer_exponent(self) -> float:
        return float(self.a or 0.0)

    def profile(self, r: Union[float, np.ndarray]) -> np.ndarray:
        r = np.abs(np.asarray(r, dtype=float))
        fam = self.family
        if fam == KernelFamily.ZERO:
            out = np.zeros_like(r)
        elif fam == KernelFamily.POWER_LAW:
            out = (1.0 + r * r) ** (-0.5 * float(self.a))
        elif fam == KernelFamily.GAUSSIAN:
            out = np.exp(-((r / float(self.sigma)) ** 2))
        elif fam == KernelFamily.COMPACT:
            out = (r <= float(self.radius) * (1.0 + 1e-12)).astype(float)
        else:
            eps = float(self.epsilon)
            out = np.maximum(r, eps) ** (-float(self.b)) * (1.0 + r * r) ** (-0.5 * self.outer_exponent)
        return self.amplitude * out

    def decay_exponent(self) -> float:
        """Power of r^-1 governing the decay of J at infinity (inf for fast-decaying families)."""
        if self.family == KernelFamily.POWER_LAW:
            return float(self.a)
        if self.family == KernelFamily.SINGULAR_POWER:
            return float(self.b) + self.outer_exponent
        return math.inf

    def _inner_scale(self) -> float:
        if self.family == KernelFamily.GAUSSIAN:
            return 8.0 * float(self.sigma)
        if self.family == KernelFamily.COMPACT:
            return float(self.radius)
        if self.family == KernelFamily.SINGULAR_POWER:
            return max(float(self.epsilon), 1.0)
        return 1.0

    def _breakpoints(self) -> list[float]:
        if self.family == KernelFamily.SINGULAR_POWER:
            return [float(self.epsilon)]
        return []


@dataclass(frozen=True, eq=False)
class NonlocalOperator:
    """
    H[psi](x) = sum_y (psi(x) - psi(y)) K(x, y) h^d on a lattice.

    `weights` holds W = K h^d with zero diagonal, `matrix` is diag(W 1) - W.
    """

    lattice: Lattice
    kernel: KernelSpec
    matrix: np.ndarray
    weights: np.ndarray
    truncated_tail: float = 0.0

    @property
    def size(self) -> int:
        return int(self.matrix.shape[0])

    @cached_property
    def spectrum(self) -> tuple[np.ndarray, np.ndarray]:
        try:
            evals, evecs = scipy.linalg.eigh(self.matrix)
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgError, ValueError) as e:
            raise EigensolverError("eigendecomposition of H0 failed", size=self.size, cause=str(e)) from e
        return evals, evecs

    def apply(self, psi: np.ndarray) -> np.ndarray:
        return self.matrix @ np.asarray(psi)

    def hermiticity_defect(self) -> float:
        scale = float(np.max(np.abs(self.matrix))) or 1.0
        return float(np.max(np.abs(self.matrix - self.matrix.conj().T))) / scale


def _weight_rows(lat: Lattice, spec: KernelSpec, rows: np.ndarray) -> np.ndarray:
    r = lat.distances(rows, None)
    k = spec.profile(r)
    if lat.periodic:
        # kernel wrapped by minimum image and cut at range L
        k = np.where(r <= lat.half_width * (1.0 + 1e-12), k, 0.0)
    k[np.arange(rows.size), rows] = 0.0
    return k * lat.cell_volume


def assemble_operator(lat: Lattice, spec: KernelSpec, *, workers: int = 1) -> NonlocalOperator:
    if spec.dim != lat.dim:
        raise ValueError(f"kernel dim {spec.dim} does not match lattice dim {lat.dim}")
    if spec.family == KernelFamily.SINGULAR_POWER and float(spec.epsilon) < lat.spacing / 2.0:
        raise ValueError(
            f"singular kernel epsilon={spec.epsilon} under-resolves the diagonal cell (need >= h/2 = {lat.spacing / 2.0})"
        )
    n = lat.site_count
    weights = np.zeros((n, n), dtype=float)
    if spec.family != KernelFamily.ZERO:
        blocks = [np.arange(s, min(s + _CHUNK_ROWS, n)) for s in range(0, n, _CHUNK_ROWS)]
        if workers > 1 and len(blocks) > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                for rows, vals in zip(blocks, pool.map(lambda rr: _weight_rows(lat, spec, rr), blocks)):
                    weights[rows] = vals
        else:
            for rows in blocks:
                weights[rows] = _weight_rows(lat, spec, rows)
        weights = 0.5 * (weights + weights.T)
    matrix = np.diag(weights.sum(axis=1)) - weights
    weights.setflags(write=False)
    matrix.setflags(write=False)

    tail = 0.0
    if lat.periodic and spec.family != KernelFamily.ZERO:
        try:
            tail = float(moment_tail(spec, 0, lat.half_width))
        except DivergenceError:
            tail = math.inf
            logger.warning("Kernel tail beyond L=%s is not integrable; periodic truncation is uncontrolled", lat.half_width)
    logger.debug("Assembled operator (sites=%s family=%s tail=%.3e)", n, spec.family.value, tail)
    return NonlocalOperator(lattice=lat, kernel=spec, matrix=matrix, weights=weights, truncated_tail=tail)


def _check_integrable(spec: KernelSpec, p: int) -> None:
    decay = spec.decay_exponent()
    if decay <= spec.dim + p:
        raise DivergenceError(
            f"moment of order {p} diverges for {spec.family.value} kernel",
            decay_exponent=decay,
            dim=spec.dim,
            p=p,
        )


def _radial_integrand(spec: KernelSpec, p: int):
    power = p + spec.dim - 1

    def f(r: float) -> float:
        return float(r**power * spec.profile(r))

    return f


def moment_bound(spec: KernelSpec, p: int, quadrature_resolution: Optional[float] = None) -> QuadResult:
    """
    sup_x int |K(x, y)| |x - y|^p dy = omega_{d-1} int_0^inf r^(p+d-1) J(r) dr.

    `quadrature_resolution` is the relative tolerance of the dyadic tail (default 1e-12).
    """
    if p < 0:
        raise ValueError(f"moment order p must be >= 0, got {p}")
    if spec.family == KernelFamily.ZERO:
        return ZERO
    _check_integrable(spec, p)
    f = _radial_integrand(spec, p)
    r0 = spec._inner_scale()
    inner = integrate_interval(f, 0.0, r0, points=spec._breakpoints())
    if spec.family == KernelFamily.COMPACT:
        total = inner
    else:
        rtol = quadrature_resolution if quadrature_resolution is not None else 1e-12
        total = inner + dyadic_tail(f, r0, rtol=rtol, what=f"moment p={p}")
    return total.scaled(sphere_area(spec.dim))


def moment_tail(spec: KernelSpec, p: int, start: float) -> QuadResult:
    """omega_{d-1} int_start^inf r^(p+d-1) J(r) dr, the part of the moment beyond `start`."""
    if spec.family == KernelFamily.ZERO:
        return ZERO
    if spec.family == KernelFamily.COMPACT:
        if float(spec.radius) <= start:
            return ZERO
        f = _radial_integrand(spec, p)
        return integrate_interval(f, start, float(spec.radius)).scaled(sphere_area(spec.dim))
    _check_integrable(spec, p)
    f = _radial_integrand(spec, p)
    return dyadic_tail(f, start, what=f"moment tail p={p}").scaled(sphere_area(spec.dim))


def _check_order(p: int) -> None:
    if not (1 <= p <= MAX_ORDER):
        raise ValueError(f"commutator order p must be in [1, {MAX_ORDER}], got {p}")


def _phi_values(op: NonlocalOperator, phi: Union[RealField, np.ndarray]) -> np.ndarray:
    values = phi.values if isinstance(phi, RealField) else np.asarray(phi, dtype=float)
    op.lattice.check_sites(values, "phi")
    return values


def schur_kappa(op: NonlocalOperator, phi: Union[RealField, np.ndarray], p: int) -> float:
    """Schur bound sqrt(max row sum * max column sum) of |K| |phi(x) - phi(y)|^p h^d."""
    _check_order(p)
    values = _phi_values(op, phi)
    w = np.abs(op.weights)
    n = op.size
    row_max = 0.0
    col_sums = np.zeros(n, dtype=float)
    for start in range(0, n, _CHUNK_ROWS):
        rows = slice(start, min(start + _CHUNK_ROWS, n))
        block = w[rows] * np.abs(values[rows, None] - values[None, :]) ** p
        row_max = max(row_max, float(block.sum(axis=1).max()))
        col_sums += block.sum(axis=0)
    return math.sqrt(row_max * float(col_sums.max()))


def discrete_moment(op: NonlocalOperator, p: int) -> float:
    """max_x sum_y |K(x, y)| |x - y|^p h^d, the lattice counterpart of moment_bound."""
    if p < 0:
        raise ValueError(f"moment order p must be >= 0, got {p}")
    w = np.abs(op.weights)
    lat = op.lattice
    best = 0.0
    for start in range(0, op.size, _CHUNK_ROWS):
        rows = np.arange(start, min(start + _CHUNK_ROWS, op.size))
        block = w[rows] * lat.distances(rows, None) ** p
        best = max(best, float(block.sum(axis=1).max()))
    return best


def operator_norm_estimate(op: NonlocalOperator) -> float:
    """Schur row-sum bound on ||H0||: diagonal plus off-diagonal mass, 2 max_x sum_y |W|."""
    if op.size == 0:
        return 0.0
    return 2.0 * float(np.abs(op.weights).sum(axis=1).max())


@dataclass(frozen=True)
class SpeedBounds:
    n: int
    kappa: tuple[float, ...]
    moments: tuple[float, ...]
    lipschitz: float
    continuum_moments: tuple[float, ...]

    @property
    def M(self) -> float:
        return max(self.moments) if self.moments else 0.0

    @property
    def kappa_1(self) -> float:
        return self.kappa[0]

    def chain_violations(self, slack: float = 1e-10) -> list[int]:
        """Orders p where kappa_p exceeds L^p M_p."""
        out = []
        for p, (k, m) in enumerate(zip(self.kappa, self.moments), start=1):
            if k > self.lipschitz**p * m * (1.0 + slack) + slack:
                out.append(p)
        return out

    def as_dict(self) -> dict:
        return {
            "n": self.n,
            "kappa": list(self.kappa),
            "moments": list(self.moments),
            "M": self.M,
            "lipschitz": self.lipschitz,
            "continuum_moments": list(self.continuum_moments),
        }


def speed_bounds(op: NonlocalOperator, phi: Union[RealField, np.ndarray], n: int) -> SpeedBounds:
    if n < 1 or n + 1 > MAX_ORDER:
        raise ValueError(f"order n must be in [1, {MAX_ORDER - 1}], got {n}")
    values = _phi_values(op, phi)
    kappa = tuple(schur_kappa(op, values, p) for p in range(1, n + 2))
    moments = tuple(discrete_moment(op, p) for p in range(1, n + 2))
    continuum: list[float] = []
    for p in range(1, n + 2):
        try:
            continuum.append(float(moment_bound(op.kernel, p)))
        except DivergenceError:
            continuum.append(math.inf)
    lip = lipschitz_constant(op.lattice, values)
    return SpeedBounds(n=n, kappa=kappa, moments=moments, lipschitz=lip, continuum_moments=tuple(continuum))


def export_operator(op: NonlocalOperator, directory: Union[str, Path]) -> list[Path]:
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / "operator.npy"]
    np.save(paths[0], np.asarray(op.matrix))
    if op.size <= CSV_EXPORT_MAX_SITES:
        rows, cols = np.nonzero(op.matrix)
        paths.append(
            write_csv(
                out / "operator.csv",
                ["row", "col", "value"],
                ([int(r), int(c), float(op.matrix[r, c])] for r, c in zip(rows, cols)),
            )
        )
    return paths

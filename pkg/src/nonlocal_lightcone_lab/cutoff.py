from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path
from typing import Iterable, Optional, Protocol, Sequence, Union, runtime_checkable

import numpy as np
from numpy.polynomial import Polynomial
from scipy import special

from .errors import DivergenceError, LabError, QuadratureError
from .quadrature import ZERO, QuadResult, dyadic_tail, integrate_interval
from .util.tables import write_csv


logger = logging.getLogger(__name__)

CUTOFF_FAMILIES = ("polynomial", "smooth_exp")
# Extra bump exponent over n so that w = sqrt(chi') is C^(n+3).
BUMP_EXPONENT_OFFSET = 4
COMBINE_SAMPLES = 1000
# Largest |eta'| of the quintic smoothstep.
ETA_SLOPE_MAX = 15.0 / 8.0

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(16)
_PRIMITIVE_PANELS = 16
_CHUNK = 4096

ArrayLike = Union[float, Sequence[float], np.ndarray]


# --- bump kernels ------------------------------------------------------------


def _falling(M: int, i: int) -> float:
    return float(math.perm(M, i)) if 0 <= i <= M else 0.0


def _poly_bump_derivative(u: np.ndarray, M: int, j: int) -> np.ndarray:
    """j-th derivative of u^M (1-u)^M by the Leibniz rule (no monomial expansion)."""
    out = np.zeros_like(u)
    v = 1.0 - u
    for i in range(0, min(j, M) + 1):
        l = j - i
        if l > M:
            continue
        coef = math.comb(j, i) * _falling(M, i) * _falling(M, l) * (-1.0) ** l
        out += coef * u ** (M - i) * v ** (M - l)
    return out


_Q = Polynomial([0.0, 1.0, -1.0])
_DQ = _Q.deriv()


def _exp_bump_polys(alpha: float, order: int) -> list[Polynomial]:
    """P_j with d^j/du^j exp(-alpha/q) = exp(-alpha/q) P_j / q^(2j), q = u(1-u)."""
    polys = [Polynomial([1.0])]
    for j in range(order):
        p = polys[-1]
        polys.append(p.deriv() * _Q**2 - 2.0 * j * _Q * _DQ * p + alpha * _DQ * p)
    return polys


def _exp_bump_derivative(u: np.ndarray, alpha: float, polys: list[Polynomial], j: int) -> np.ndarray:
    out = np.zeros_like(u)
    inside = (u > 0.0) & (u < 1.0)
    if not inside.any():
        return out
    ui = u[inside]
    q = ui * (1.0 - ui)
    # log-space keeps exp(-alpha/q) / q^(2j) finite near the endpoints
    logmag = -alpha / q - 2.0 * j * np.log(q)
    out[inside] = np.exp(logmag) * polys[j](ui)
    return out


def _exp_primitive_half(v: np.ndarray) -> np.ndarray:
    """int_0^v exp(-2/(u(1-u))) du for 0 <= v <= 1/2 by composite Gauss-Legendre."""
    out = np.zeros_like(v)
    panel = np.arange(_PRIMITIVE_PANELS, dtype=float)
    for start in range(0, v.size, _CHUNK):
        vv = v[start : start + _CHUNK]
        h = vv / _PRIMITIVE_PANELS
        nodes = (panel[:, None] + 0.5 * (_GL_NODES[None, :] + 1.0)).reshape(-1)
        u = h[:, None] * nodes[None, :]
        with np.errstate(divide="ignore", over="ignore"):
            q = u * (1.0 - u)
            g = np.where(q > 0, np.exp(-2.0 / np.where(q > 0, q, 1.0)), 0.0)
        w = np.tile(_GL_WEIGHTS, _PRIMITIVE_PANELS)
        out[start : start + _CHUNK] = 0.5 * h * (g @ w)
    return out


def _exp_primitive(u: np.ndarray) -> np.ndarray:
    total = float(_exp_primitive_half(np.array([0.5]))[0]) * 2.0
    u = np.clip(u, 0.0, 1.0)
    low = u <= 0.5
    out = np.empty_like(u)
    out[low] = _exp_primitive_half(u[low])
    out[~low] = total - _exp_primitive_half(1.0 - u[~low])
    return out


EXP_BUMP_MASS = float(_exp_primitive_half(np.array([0.5]))[0]) * 2.0


# --- smooth function protocol -------------------------------------------------


@runtime_checkable
class SmoothFunction(Protocol):
    """
    A real function with derivative evaluators.

    Outside `support` the function is constant: `left_value` below, `right_value` above,
    and every derivative vanishes there.
    """

    max_order: int

    def derivative(self, x: ArrayLike, k: int = 0) -> np.ndarray: ...

    @property
    def support(self) -> tuple[float, float]: ...

    @property
    def left_value(self) -> float: ...

    @property
    def right_value(self) -> float: ...

    @property
    def breakpoints(self) -> tuple[float, ...]: ...


def _check_order(fn: SmoothFunction, k: int) -> None:
    if k < 0:
        raise ValueError(f"derivative order must be >= 0, got {k}")
    if k > fn.max_order:
        raise ValueError(f"derivative order {k} exceeds the available order {fn.max_order}")


@dataclass(frozen=True, eq=False)
class CutoffFunction:
    """
    Smoothed step chi with chi = 0 on (-inf, 0], chi = height on [delta, inf) and
    chi' = w^2 supported in (0, delta).

    polynomial: w ~ (mu (delta - mu))^m, chi is C^(2m) and w is C^(m-1).
    smooth_exp: w ~ exp(-1/(u(1-u))) with u = mu/delta, C^infinity.
    """

    delta: float
    n: int
    family: str = "polynomial"
    bump_exponent: int = 0
    height: float = 1.0
    max_order: int = 0
    _norm: float = field(default=1.0, repr=False)

    def __call__(self, mu: ArrayLike) -> np.ndarray:
        return self.derivative(mu, 0)

    @property
    def support(self) -> tuple[float, float]:
        return (0.0, self.delta)

    @property
    def left_value(self) -> float:
        return 0.0

    @property
    def right_value(self) -> float:
        return self.height

    @property
    def breakpoints(self) -> tuple[float, ...]:
        return (0.0, self.delta)

    @property
    def smoothness_order(self) -> int:
        return self.max_order

    @property
    def sup_norm(self) -> float:
        return self.height

    @cached_property
    def _exp_polys(self) -> list[Polynomial]:
        return _exp_bump_polys(2.0, self.max_order)

    @cached_property
    def _exp_root_polys(self) -> list[Polynomial]:
        return _exp_bump_polys(1.0, self.max_order)

    def _u(self, mu: ArrayLike) -> np.ndarray:
        return np.asarray(mu, dtype=float) / self.delta

    def derivative(self, mu: ArrayLike, k: int = 0) -> np.ndarray:
        _check_order(self, k)
        u = self._u(mu)
        scalar = u.ndim == 0
        u = np.atleast_1d(u)
        if k == 0:
            if self.family == "polynomial":
                M = 2 * self.bump_exponent
                out = self.height * special.betainc(M + 1, M + 1, np.clip(u, 0.0, 1.0))
            else:
                out = self.height * _exp_primitive(u) / EXP_BUMP_MASS
        else:
            inside = (u > 0.0) & (u < 1.0)
            scale = self.height * self.delta ** (-k) / self._norm
            if self.family == "polynomial":
                g = _poly_bump_derivative(u, 2 * self.bump_exponent, k - 1)
            else:
                g = _exp_bump_derivative(u, 2.0, self._exp_polys, k - 1)
            out = np.where(inside, scale * g, 0.0)
        return out[0] if scalar else out

    def root(self, mu: ArrayLike) -> np.ndarray:
        return self.root_derivative(mu, 0)

    def root_derivative(self, mu: ArrayLike, k: int = 0) -> np.ndarray:
        """k-th derivative of w = sqrt(chi')."""
        if k < 0 or k > self.max_order:
            raise ValueError(f"root derivative order must be in [0, {self.max_order}], got {k}")
        u = self._u(mu)
        scalar = u.ndim == 0
        u = np.atleast_1d(u)
        inside = (u > 0.0) & (u < 1.0)
        amp = math.sqrt(self.height / (self.delta * self._norm)) * self.delta ** (-k)
        if self.family == "polynomial":
            g = _poly_bump_derivative(u, self.bump_exponent, k)
        else:
            g = _exp_bump_derivative(u, 1.0, self._exp_root_polys, k)
        out = np.where(inside, amp * g, 0.0)
        return out[0] if scalar else out

    def sup_derivative(self, k: int, samples: int = 2001) -> float:
        if k == 0:
            return self.height
        mu = np.linspace(0.0, self.delta, samples)
        return float(np.max(np.abs(self.derivative(mu, k))))

    def with_height(self, height: float) -> "CutoffFunction":
        return replace(self, height=float(height))


def make_cutoff(
    delta: float,
    n: int,
    *,
    family: str = "polynomial",
    bump_exponent: Optional[int] = None,
    height: float = 1.0,
) -> CutoffFunction:
    if not (0.0 < delta < 1.0):
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if family not in CUTOFF_FAMILIES:
        raise ValueError(f"cutoff family must be one of {CUTOFF_FAMILIES}, got {family!r}")
    if not (height > 0):
        raise ValueError(f"height must be > 0, got {height}")
    m = n + BUMP_EXPONENT_OFFSET if bump_exponent is None else int(bump_exponent)
    if m < n + BUMP_EXPONENT_OFFSET:
        raise ValueError(f"bump_exponent must be >= n + {BUMP_EXPONENT_OFFSET} = {n + BUMP_EXPONENT_OFFSET}, got {m}")
    if family == "polynomial":
        norm = float(special.beta(2 * m + 1, 2 * m + 1))
    else:
        norm = EXP_BUMP_MASS
    return CutoffFunction(
        delta=float(delta),
        n=int(n),
        family=family,
        bump_exponent=m,
        height=float(height),
        max_order=2 * m,
        _norm=norm,
    )


def membership_violations(chi: CutoffFunction, samples: int = 2001, tol: float = 1e-12) -> list[str]:
    """Sampled class checks: chi >= 0, chi = 0 left of 0, chi constant right of delta, chi' >= 0 on (0, delta)."""
    d = chi.delta
    mu = np.linspace(-0.5 * d, 1.5 * d, samples)
    vals = chi(mu)
    der = chi.derivative(mu, 1)
    scale = tol * max(chi.height, 1.0)
    out = []
    if np.any(vals < -scale):
        out.append("chi takes negative values")
    if np.any(np.abs(vals[mu <= 0.0]) > scale):
        out.append("chi is nonzero for mu <= 0")
    if np.any(np.abs(vals[mu >= d] - chi.height) > scale):
        out.append("chi is not constant for mu >= delta")
    if np.any(der < -scale * max(1.0, 1.0 / d)):
        out.append("chi' takes negative values")
    if np.any(np.abs(der[(mu <= 0.0) | (mu >= d)]) > scale):
        out.append("chi' is not supported in (0, delta)")
    root = chi.root(mu)
    if np.max(np.abs(root**2 - der)) > 1e-10 * max(1.0, float(np.max(der))):
        out.append("chi' differs from w^2")
    return out


def _dominance_ratio(xi: CutoffFunction, env_family: str, env_exponent: int) -> float:
    """sup over (0, delta) of xi' / e' where e is the unit-height envelope cutoff."""
    if env_family == "smooth_exp":
        return xi.height
    Me = 2 * env_exponent
    Be = float(special.beta(Me + 1, Me + 1))
    if xi.family == "polynomial":
        Mi = 2 * xi.bump_exponent
        return xi.height * (Be / xi._norm) * 4.0 ** (-(Mi - Me))
    q = 1.0 / env_exponent if env_exponent >= 4 else 0.25
    return xi.height * (Be / xi._norm) * math.exp(-2.0 / q) * q ** (-Me)


def combine_cutoffs(xi1: CutoffFunction, xi2: CutoffFunction, c: float) -> CutoffFunction:
    """
    A cutoff xi with xi >= xi1 + c xi2 and xi' >= xi1' + c xi2'.

    xi is a rescaled envelope whose bump is no more localized than either input, so that
    xi' = A e' dominates each input derivative with a closed-form ratio.
    """
    if not math.isclose(xi1.delta, xi2.delta, rel_tol=0.0, abs_tol=1e-15):
        raise ValueError(f"combine_cutoffs needs equal delta, got {xi1.delta} and {xi2.delta}")
    if c < 0:
        raise ValueError(f"combination weight c must be >= 0, got {c}")
    poly = [x for x in (xi1, xi2) if x.family == "polynomial"]
    if poly:
        env_family, env_exponent = "polynomial", min(x.bump_exponent for x in poly)
    else:
        env_family, env_exponent = "smooth_exp", max(xi1.bump_exponent, xi2.bump_exponent)
    n_env = min(xi1.n, xi2.n)
    A = _dominance_ratio(xi1, env_family, env_exponent) + c * _dominance_ratio(xi2, env_family, env_exponent)
    A *= 1.0 + 1e-12
    xi = make_cutoff(xi1.delta, n_env, family=env_family, bump_exponent=max(env_exponent, n_env + BUMP_EXPONENT_OFFSET), height=A)

    mu = np.linspace(-0.1 * xi.delta, 1.1 * xi.delta, COMBINE_SAMPLES)
    tol = 1e-12 * A
    val_gap = xi(mu) - (xi1(mu) + c * xi2(mu))
    der_gap = xi.derivative(mu, 1) - (xi1.derivative(mu, 1) + c * xi2.derivative(mu, 1))
    if val_gap.min() < -tol or der_gap.min() < -tol / xi.delta:
        raise LabError(
            "combined cutoff failed pointwise domination",
            value_gap=float(val_gap.min()),
            derivative_gap=float(der_gap.min()),
        )
    problems = membership_violations(xi)
    if problems:
        raise LabError("combined cutoff left the cutoff class", problems=problems)
    return xi


def tabulate_cutoff(chi: CutoffFunction, path: Union[str, Path], samples: int = 257) -> Path:
    mu = np.linspace(-0.25 * chi.delta, 1.25 * chi.delta, samples)
    cols = [chi.derivative(mu, k) for k in range(chi.max_order + 1)]
    header = ["x", "chi", *[f"d{k}" for k in range(1, chi.max_order + 1)]]
    rows = ([mu[i], *[c[i] for c in cols]] for i in range(samples))
    return write_csv(path, header, rows)


# --- other smooth functions -----------------------------------------------------


@dataclass(frozen=True)
class GaussianFunction:
    """amplitude * exp(-((x - center)/width)^2), derivatives through Hermite polynomials."""

    center: float = 0.0
    width: float = 1.0
    amplitude: float = 1.0
    max_order: int = 24

    def derivative(self, x: ArrayLike, k: int = 0) -> np.ndarray:
        _check_order(self, k)
        t = (np.asarray(x, dtype=float) - self.center) / self.width
        return self.amplitude * (-1.0) ** k * special.eval_hermite(k, t) * np.exp(-t * t) / self.width**k

    def __call__(self, x: ArrayLike) -> np.ndarray:
        return self.derivative(x, 0)

    @property
    def support(self) -> tuple[float, float]:
        return (self.center - 8.0 * self.width, self.center + 8.0 * self.width)

    @property
    def left_value(self) -> float:
        return 0.0

    @property
    def right_value(self) -> float:
        return 0.0

    @property
    def breakpoints(self) -> tuple[float, ...]:
        return (self.center,)


@dataclass(frozen=True)
class ConstantFunction:
    value: float = 0.0
    max_order: int = 64

    def derivative(self, x: ArrayLike, k: int = 0) -> np.ndarray:
        _check_order(self, k)
        arr = np.asarray(x, dtype=float)
        return np.full_like(arr, self.value if k == 0 else 0.0)

    def __call__(self, x: ArrayLike) -> np.ndarray:
        return self.derivative(x, 0)

    @property
    def support(self) -> tuple[float, float]:
        return (0.0, 0.0)

    @property
    def left_value(self) -> float:
        return self.value

    @property
    def right_value(self) -> float:
        return self.value

    @property
    def breakpoints(self) -> tuple[float, ...]:
        return ()


@dataclass(frozen=True)
class PolynomialFunction:
    """Polynomial with coefficients in increasing degree; unbounded, so only pointwise use."""

    coefficients: tuple[float, ...]
    max_order: int = 64

    @cached_property
    def _poly(self) -> Polynomial:
        return Polynomial(np.asarray(self.coefficients, dtype=float))

    def derivative(self, x: ArrayLike, k: int = 0) -> np.ndarray:
        _check_order(self, k)
        p = self._poly.deriv(k) if k else self._poly
        return p(np.asarray(x, dtype=float))

    def __call__(self, x: ArrayLike) -> np.ndarray:
        return self.derivative(x, 0)

    @property
    def support(self) -> tuple[float, float]:
        return (-math.inf, math.inf)

    @property
    def left_value(self) -> float:
        return math.nan

    @property
    def right_value(self) -> float:
        return math.nan

    @property
    def breakpoints(self) -> tuple[float, ...]:
        return ()


# --- eta profile and extensions ---------------------------------------------------


def eta_profile(mu: ArrayLike, k: int = 0) -> np.ndarray:
    """eta = 1 on |mu| <= 1, 0 on |mu| >= 2, quintic smoothstep in between; k in {0, 1, 2}."""
    if k not in (0, 1, 2):
        raise ValueError(f"eta derivative order must be 0, 1 or 2, got {k}")
    mu = np.asarray(mu, dtype=float)
    a = np.abs(mu)
    t = np.clip(a - 1.0, 0.0, 1.0)
    mid = (a > 1.0) & (a < 2.0)
    if k == 0:
        s = t**3 * (10.0 - 15.0 * t + 6.0 * t * t)
        return np.where(a <= 1.0, 1.0, np.where(a >= 2.0, 0.0, 1.0 - s))
    if k == 1:
        ds = 30.0 * t * t * (1.0 - t) ** 2
        return np.where(mid, -np.sign(mu) * ds, 0.0)
    d2s = 60.0 * t * (1.0 - t) * (1.0 - 2.0 * t)
    return np.where(mid, -d2s, 0.0)


def japanese_bracket(x: ArrayLike) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return np.sqrt(1.0 + x * x)


@dataclass(frozen=True, eq=False)
class AnalyticExtension:
    """
    f~(x + iy) = eta(y/<x>) sum_{k=0}^{nu+1} f^(k)(x) (iy)^k / k!.

    dbar = d/dx + i d/dy; the extension measure is -dbar f~ / (2 pi) dx dy.
    """

    base: SmoothFunction
    nu: int

    def __post_init__(self) -> None:
        if self.nu < 0:
            raise ValueError(f"extension order nu must be >= 0, got {self.nu}")
        if self.nu + 2 > self.base.max_order:
            raise ValueError(
                f"extension of order nu={self.nu} needs derivatives up to {self.nu + 2}, base provides {self.base.max_order}"
            )

    def taylor_data(self, x: np.ndarray) -> np.ndarray:
        """Rows f^(k)(x) for k = 0..nu+2."""
        x = np.asarray(x, dtype=float)
        return np.stack([np.asarray(self.base.derivative(x, k), dtype=float) * np.ones_like(x) for k in range(self.nu + 3)])

    def _taylor_sum(self, derivs: np.ndarray, y: np.ndarray) -> np.ndarray:
        total = np.zeros(np.broadcast(derivs[0], y).shape, dtype=complex)
        iy_pow = np.ones_like(total)
        for k in range(self.nu + 2):
            total = total + derivs[k] * iy_pow / math.factorial(k)
            iy_pow = iy_pow * (1j * y)
        return total

    def value(self, x: ArrayLike, y: ArrayLike) -> np.ndarray:
        x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        derivs = self.taylor_data(x)
        return eta_profile(y / japanese_bracket(x)) * self._taylor_sum(derivs, y)

    def dbar(self, x: ArrayLike, y: ArrayLike, derivs: Optional[np.ndarray] = None) -> np.ndarray:
        x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        if derivs is None:
            derivs = self.taylor_data(x)
        br = japanese_bracket(x)
        mu = y / br
        eta = eta_profile(mu)
        deta = eta_profile(mu, 1)
        top = derivs[self.nu + 2] * (1j * y) ** (self.nu + 1) / math.factorial(self.nu + 1)
        out = eta * top
        active = deta != 0.0
        if np.any(active):
            s = self._taylor_sum(derivs, y)
            chain = -x * y / br**3 + 1j / br
            out = out + np.where(active, deta * chain * s, 0.0)
        return out

    def measure(self, x: ArrayLike, y: ArrayLike, derivs: Optional[np.ndarray] = None) -> np.ndarray:
        return -self.dbar(x, y, derivs) / (2.0 * math.pi)


def extension_measure(ext: AnalyticExtension, z: Union[complex, np.ndarray]) -> Union[complex, np.ndarray]:
    """Density of the extension measure at z: -(1/2 pi) dbar f~(z)."""
    z = np.asarray(z, dtype=complex)
    out = ext.measure(z.real, z.imag)
    return complex(out) if out.ndim == 0 else out


# --- weighted norm ---------------------------------------------------------------


def _bracket_tail(p: int, start: float) -> QuadResult:
    """int_start^inf <x>^(-p-1) dx for p >= 1."""
    def f(x: float) -> float:
        return (1.0 + x * x) ** (-(p + 1) / 2.0)

    lo = max(start, 1.0)
    head = integrate_interval(f, start, lo) if lo > start else ZERO
    return head + dyadic_tail(f, lo, what="weighted-norm plateau tail")


def weighted_norm(f: SmoothFunction, p: int, nu: int) -> QuadResult:
    """sum_{m=0}^{nu+2} int <x>^(m-p-1) |f^(m)(x)| dx."""
    if p < 0 or nu < 0:
        raise ValueError(f"p and nu must be >= 0, got p={p} nu={nu}")
    if nu + 2 > f.max_order:
        raise ValueError(f"weighted_norm needs derivatives up to {nu + 2}, function provides {f.max_order}")
    a, b = f.support
    if not (math.isfinite(a) and math.isfinite(b)):
        if isinstance(f, PolynomialFunction) and not np.any(np.asarray(f.coefficients)):
            return ZERO
        raise ValueError("weighted_norm needs a bounded function with bounded support of its variation")
    total = ZERO
    if b > a:
        pts = [x for x in f.breakpoints if a < x < b]
        for m in range(nu + 3):
            def integrand(x: float, m: int = m) -> float:
                return float((1.0 + x * x) ** ((m - p - 1) / 2.0) * abs(f.derivative(x, m)))

            total = total + integrate_interval(integrand, a, b, points=pts)
    for plateau, start in ((f.left_value, -a), (f.right_value, b)):
        if plateau == 0.0:
            continue
        if p == 0:
            raise DivergenceError("weighted norm with p=0 diverges for a function with a nonzero plateau", plateau=plateau)
        if start >= 0:
            tail = _bracket_tail(p, start)
        else:
            tail = _bracket_tail(p, 0.0) + integrate_interval(lambda x: (1.0 + x * x) ** (-(p + 1) / 2.0), start, 0.0)
        total = total + tail.scaled(abs(plateau))
    return total


# --- 2-d quadrature of the extension measure ---------------------------------------


@dataclass(frozen=True)
class HSResolution:
    """
    Tensor Gauss-Legendre grid for planar integrals against the extension measure.

    The y direction is written y = <x> mu with mu panels [2^-(j+1), 2^-j] for j < levels
    plus the annulus [1, 2] where eta varies; |mu| < 2^-levels is the excluded strip.
    """

    x_panel: float = 0.05
    order: int = 8
    levels: int = 10
    tail_panels: int = 16

    def refined(self) -> "HSResolution":
        return replace(self, x_panel=self.x_panel / 2.0, levels=self.levels + 2)

    def coarse_order(self) -> "HSResolution":
        return replace(self, order=max(self.order - 2, 2))


ANNULUS_LEVEL = -1


@dataclass(frozen=True, eq=False)
class ExtensionGrid:
    """
    Quadrature nodes in the upper half plane; the lower half is the mirror image with
    conjugated density.
    """

    x: np.ndarray
    y: np.ndarray
    weights: np.ndarray
    density: np.ndarray
    level: np.ndarray
    levels: int

    @property
    def z(self) -> np.ndarray:
        return self.x + 1j * self.y

    def __len__(self) -> int:
        return int(self.x.size)


def _gl(order: int) -> tuple[np.ndarray, np.ndarray]:
    return np.polynomial.legendre.leggauss(order)


def _panel_nodes(edges: np.ndarray, order: int) -> tuple[np.ndarray, np.ndarray]:
    t, w = _gl(order)
    lo, hi = edges[:-1], edges[1:]
    half = 0.5 * (hi - lo)
    nodes = (0.5 * (hi + lo))[:, None] + half[:, None] * t[None, :]
    weights = half[:, None] * w[None, :]
    return nodes.reshape(-1), weights.reshape(-1)


def _mu_panels(levels: int, annulus_only: bool) -> list[tuple[float, float, int]]:
    out = [(1.0, 2.0, ANNULUS_LEVEL)]
    if not annulus_only:
        out.extend((2.0 ** -(j + 1), 2.0**-j, j) for j in range(levels))
    return out


def _tensor(
    ext: AnalyticExtension,
    xs: np.ndarray,
    wx: np.ndarray,
    mu_panels: list[tuple[float, float, int]],
    order: int,
) -> tuple[np.ndarray, ...]:
    derivs = ext.taylor_data(xs)
    br = japanese_bracket(xs)
    t, w = _gl(order)
    X, Y, W, D, L = [], [], [], [], []
    for lo, hi, lev in mu_panels:
        half = 0.5 * (hi - lo)
        mu = 0.5 * (hi + lo) + half * t
        wm = half * w
        y = br[:, None] * mu[None, :]
        xx = np.broadcast_to(xs[:, None], y.shape)
        dens = ext.measure(xx, y, derivs=derivs[:, :, None])
        X.append(xx.reshape(-1))
        Y.append(y.reshape(-1))
        W.append((wx[:, None] * br[:, None] * wm[None, :]).reshape(-1))
        D.append(dens.reshape(-1))
        L.append(np.full(y.size, lev, dtype=int))
    return tuple(np.concatenate(v) for v in (X, Y, W, D, L))


def extension_grid(ext: AnalyticExtension, resolution: Optional[HSResolution] = None) -> ExtensionGrid:
    res = resolution or HSResolution()
    f = ext.base
    a, b = f.support
    if not (math.isfinite(a) and math.isfinite(b)):
        raise ValueError("extension_grid needs a function whose variation has bounded support")
    parts = []
    if b > a:
        cuts = sorted({a, b, *[p for p in f.breakpoints if a < p < b]})
        edges: list[float] = []
        for lo, hi in zip(cuts[:-1], cuts[1:]):
            count = max(1, int(math.ceil((hi - lo) / res.x_panel)))
            seg = np.linspace(lo, hi, count + 1)
            edges.extend(seg[:-1].tolist())
        edges.append(cuts[-1])
        xs, wx = _panel_nodes(np.asarray(edges, dtype=float), res.order)
        parts.append(_tensor(ext, xs, wx, _mu_panels(res.levels, annulus_only=False), res.order))

    # plateaus: only the annulus carries mass, x = edge +/- t/(1-t)
    tedges = np.linspace(0.0, 1.0, res.tail_panels + 1)
    tn, tw = _panel_nodes(tedges, res.order)
    jac = 1.0 / (1.0 - tn) ** 2
    off = tn / (1.0 - tn)
    for plateau, xs in ((f.left_value, a - off), (f.right_value, b + off)):
        if plateau == 0.0:
            continue
        parts.append(_tensor(ext, xs, tw * jac, _mu_panels(res.levels, annulus_only=True), res.order))

    if not parts:
        empty = np.zeros(0)
        return ExtensionGrid(empty, empty, empty, empty.astype(complex), empty.astype(int), res.levels)
    x, y, w, d, lev = (np.concatenate(v) for v in zip(*parts))
    return ExtensionGrid(x=x, y=y, weights=w, density=d, level=lev, levels=res.levels)


def strip_extrapolation(level_sums: np.ndarray) -> tuple[float, float]:
    """
    Geometric continuation of per-level sums into the excluded strip.

    Returns (strip, ratio); the ratio of the two innermost levels must be < 1.
    """
    if level_sums.size < 2:
        return 0.0, 0.0
    c_prev, c_last = float(level_sums[-2]), float(level_sums[-1])
    if c_last == 0.0:
        return 0.0, 0.0
    if c_prev == 0.0:
        raise QuadratureError("strip extrapolation failed: innermost level sums are not decaying", level_sums=level_sums.tolist())
    r = c_last / c_prev
    if r >= 1.0:
        raise QuadratureError(
            "strip extrapolation does not converge",
            ratio=r,
            level_sums=[float(v) for v in level_sums],
        )
    return c_last * r / (1.0 - r), r


def _remainder_sum(grid: ExtensionGrid, p: int) -> tuple[float, np.ndarray]:
    vals = np.abs(grid.density) * np.abs(grid.y) ** (-(p + 1)) * grid.weights
    # mirror half plane has the same modulus
    vals = 2.0 * vals
    per_level = np.array([vals[grid.level == j].sum() for j in range(grid.levels)])
    return float(vals.sum()), per_level


def remainder_integral(ext: AnalyticExtension, p: int, resolution: Optional[HSResolution] = None) -> QuadResult:
    """
    int |df~(z)| |Im z|^-(p+1) over the plane, strip |Im z| < 2^-levels <x> added by geometric
    extrapolation of the dyadic level sums.
    """
    if not (0 <= p <= ext.nu):
        raise ValueError(f"remainder_integral needs 0 <= p <= nu={ext.nu}, got p={p}")
    weighted_norm(ext.base, p, ext.nu)
    res = resolution or HSResolution()
    value, levels = _remainder_sum(extension_grid(ext, res), p)
    if value == 0.0:
        return ZERO
    strip, ratio = strip_extrapolation(levels)
    coarse, _ = _remainder_sum(extension_grid(ext, res.coarse_order()), p)
    error = abs(value - coarse) + strip
    logger.debug("remainder integral p=%s value=%.6e strip=%.3e ratio=%.3f", p, value, strip, ratio)
    return QuadResult(value + strip, error)


@dataclass(frozen=True)
class RemainderFit:
    constant: float
    ratios: tuple[float, ...]
    remainders: tuple[float, ...]
    norms: tuple[float, ...]


def fit_remainder_constant(
    functions: Iterable[SmoothFunction],
    p: int,
    nu: int,
    resolution: Optional[HSResolution] = None,
) -> RemainderFit:
    """Largest ratio remainder_integral / weighted_norm over a family of functions."""
    rems, norms, ratios = [], [], []
    for f in functions:
        rem = float(remainder_integral(AnalyticExtension(f, nu), p, resolution))
        nrm = float(weighted_norm(f, p, nu))
        rems.append(rem)
        norms.append(nrm)
        ratios.append(rem / nrm if nrm > 0 else 0.0)
    if not ratios:
        raise ValueError("fit_remainder_constant needs at least one function")
    return RemainderFit(constant=max(ratios), ratios=tuple(ratios), remainders=tuple(rems), norms=tuple(norms))

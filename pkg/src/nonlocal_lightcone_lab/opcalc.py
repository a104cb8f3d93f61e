from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import Callable, Literal, Optional, Union

import numpy as np
import scipy.linalg

from .cutoff import AnalyticExtension, CutoffFunction, HSResolution, SmoothFunction, extension_grid, remainder_integral, strip_extrapolation, weighted_norm
from .errors import EigensolverError
from .kernelop import NonlocalOperator
from .lattice import RealField
from .models import ExpansionReport


logger = logging.getLogger(__name__)

HERMITIAN_TOL = 1e-12
HS_CHUNK = 2048

Side = Literal["left", "right"]


@dataclass(frozen=True, eq=False)
class HermitianOperator:
    """
    Hermitian matrix, stored as its diagonal when it is a multiplication operator.

    `data` is either a 1-d array of real diagonal entries or a square 2-d array.
    """

    data: np.ndarray
    label: str = ""

    def __post_init__(self) -> None:
        arr = np.asarray(self.data)
        if arr.ndim == 1:
            if np.iscomplexobj(arr):
                if np.max(np.abs(arr.imag), initial=0.0) > HERMITIAN_TOL * max(1.0, float(np.max(np.abs(arr), initial=0.0))):
                    raise ValueError(f"operator {self.label!r}: diagonal entries must be real")
                arr = arr.real
            arr = np.array(arr, dtype=float)
        elif arr.ndim == 2 and arr.shape[0] == arr.shape[1]:
            scale = max(1.0, float(np.max(np.abs(arr), initial=0.0)))
            defect = float(np.max(np.abs(arr - arr.conj().T), initial=0.0))
            if defect > HERMITIAN_TOL * scale:
                raise ValueError(f"operator {self.label!r} is not Hermitian (defect={defect:.3e})")
            arr = np.array(arr)
        else:
            raise ValueError(f"operator {self.label!r} must be a diagonal vector or a square matrix, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"operator {self.label!r} has non-finite entries")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @classmethod
    def from_field(cls, phi: RealField, label: str = "phi") -> "HermitianOperator":
        return cls(phi.values, label)

    @classmethod
    def identity(cls, size: int, label: str = "identity") -> "HermitianOperator":
        return cls(np.ones(size), label)

    @property
    def is_diagonal(self) -> bool:
        return self.data.ndim == 1

    @property
    def size(self) -> int:
        return int(self.data.shape[0])

    @cached_property
    def matrix(self) -> np.ndarray:
        if self.is_diagonal:
            return np.diag(self.data)
        return self.data

    @cached_property
    def eigh(self) -> tuple[np.ndarray, np.ndarray]:
        if self.is_diagonal:
            return self.data.copy(), np.eye(self.size)
        try:
            return scipy.linalg.eigh(self.data)
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgError, ValueError) as e:
            raise EigensolverError(f"eigendecomposition of {self.label!r} failed", size=self.size, cause=str(e)) from e

    def spectrum(self) -> np.ndarray:
        if self.is_diagonal:
            return np.sort(self.data)
        return self.eigh[0]

    def norm(self) -> float:
        if self.size == 0:
            return 0.0
        return float(np.max(np.abs(self.spectrum())))

    def apply(self, psi: np.ndarray) -> np.ndarray:
        psi = np.asarray(psi)
        if psi.shape[0] != self.size:
            raise ValueError(f"vector of length {psi.shape[0]} does not match operator size {self.size}")
        if self.is_diagonal:
            return self.data.reshape((-1,) + (1,) * (psi.ndim - 1)) * psi
        return self.data @ psi

    def expectation(self, psi: np.ndarray, weight: float = 1.0) -> float:
        """weight * Re <psi, A psi>; pass h^d as weight for lattice states."""
        psi = np.asarray(psi)
        return float(weight * np.real(np.vdot(psi, self.apply(psi))))

    def scaled(self, factor: float, label: str = "") -> "HermitianOperator":
        return HermitianOperator(self.data * factor, label or self.label)

    def shifted(self, b: float, label: str = "") -> "HermitianOperator":
        if self.is_diagonal:
            return HermitianOperator(self.data - b, label or self.label)
        return HermitianOperator(self.data - b * np.eye(self.size), label or self.label)

    def min_eigenvalue(self) -> float:
        if self.size == 0:
            return 0.0
        if self.is_diagonal:
            return float(np.min(self.data))
        return float(scipy.linalg.eigvalsh(self.data, subset_by_index=[0, 0])[0])


OperatorLike = Union[HermitianOperator, NonlocalOperator, np.ndarray]
ReferenceLike = Union[RealField, HermitianOperator, np.ndarray]


def as_matrix(op: OperatorLike) -> np.ndarray:
    if isinstance(op, HermitianOperator):
        return op.matrix
    if isinstance(op, NonlocalOperator):
        return op.matrix
    arr = np.asarray(op)
    if arr.ndim == 1:
        return np.diag(arr)
    return arr


def hamiltonian(op: NonlocalOperator, label: str = "H0") -> HermitianOperator:
    return HermitianOperator(op.matrix, label)


def _diagonal_of(phi: ReferenceLike) -> Optional[np.ndarray]:
    if isinstance(phi, RealField):
        return phi.values
    if isinstance(phi, HermitianOperator):
        return phi.data if phi.is_diagonal else None
    arr = np.asarray(phi)
    return arr if arr.ndim == 1 else None


def _apply_scalar(g: Callable[[np.ndarray], np.ndarray], values: np.ndarray) -> np.ndarray:
    out = np.asarray(g(values))
    if out.shape == ():
        out = np.full(values.shape, float(out))
    if np.iscomplexobj(out):
        raise ValueError("functional calculus here needs a real-valued function")
    return np.asarray(out, dtype=float)


def apply_function_diag(phi: Union[RealField, np.ndarray], g: Callable[[np.ndarray], np.ndarray], label: str = "") -> HermitianOperator:
    values = phi.values if isinstance(phi, RealField) else np.asarray(phi, dtype=float)
    return HermitianOperator(_apply_scalar(g, values), label or "g(phi)")


def apply_function_dense(A: HermitianOperator, g: Callable[[np.ndarray], np.ndarray], label: str = "") -> HermitianOperator:
    """g(A) = U g(Lambda) U*; diagonal inputs go through the exact diagonal path."""
    if A.is_diagonal:
        return apply_function_diag(A.data, g, label)
    mat = A.matrix
    if not np.any(mat - np.diag(np.diag(mat))):
        return apply_function_diag(np.real(np.diag(mat)), g, label)
    evals, evecs = A.eigh
    gv = _apply_scalar(g, evals)
    out = (evecs * gv[None, :]) @ evecs.conj().T
    return HermitianOperator(0.5 * (out + out.conj().T), label or f"g({A.label})")


def spectral_projection(phi: Union[RealField, HermitianOperator], a: float) -> HermitianOperator:
    """P_a = 1_(a, inf)(phi)."""
    def step(v: np.ndarray) -> np.ndarray:
        return (v > a).astype(float)

    if isinstance(phi, RealField):
        return apply_function_diag(phi, step, f"P_{a:g}")
    return apply_function_dense(phi, step, f"P_{a:g}")


# --- Helffer-Sjostrand backend ---------------------------------------------------


@dataclass(frozen=True, eq=False)
class HSResult:
    operator: np.ndarray
    error_estimate: float
    strip_estimate: float
    nodes: int


def _hs_integrate(A: np.ndarray, grid, p: int) -> np.ndarray:
    n = A.shape[0]
    eye = np.eye(n)
    total = np.zeros((n, n), dtype=complex)
    for start in range(0, len(grid), HS_CHUNK):
        sl = slice(start, start + HS_CHUNK)
        z = grid.z[sl]
        coeff = grid.density[sl] * grid.weights[sl]
        res = np.linalg.inv(z[:, None, None] * eye[None, :, :] - A[None, :, :])
        powered = res
        for _ in range(p):
            powered = powered @ res
        total += np.einsum("j,jab->ab", coeff, powered)
    # lower half plane: conjugate density and adjoint resolvent
    return total + total.conj().T


def hs_apply(
    A: HermitianOperator,
    ext: AnalyticExtension,
    p: int,
    resolution: Optional[HSResolution] = None,
) -> HSResult:
    """int df~(z) (z - A)^-(p+1), which equals f^(p)(A)/p!."""
    if not (0 <= p <= ext.nu):
        raise ValueError(f"hs_apply needs 0 <= p <= nu={ext.nu}, got p={p}")
    weighted_norm(ext.base, p, ext.nu)
    res = resolution or HSResolution()
    mat = np.asarray(A.matrix, dtype=complex)
    grid = extension_grid(ext, res)
    fine = _hs_integrate(mat, grid, p)
    coarse = _hs_integrate(mat, extension_grid(ext, res.coarse_order()), p)

    vals = 2.0 * np.abs(grid.density) * np.abs(grid.y) ** (-(p + 1)) * grid.weights
    per_level = np.array([vals[grid.level == j].sum() for j in range(grid.levels)])
    strip, _ = strip_extrapolation(per_level)
    err = float(np.linalg.norm(fine - coarse, 2)) + strip
    out = 0.5 * (fine + fine.conj().T)
    if np.max(np.abs(out.imag), initial=0.0) <= 1e-14 * max(1.0, float(np.max(np.abs(out), initial=0.0))):
        out = out.real
    logger.debug("hs_apply p=%s nodes=%s error=%.3e strip=%.3e", p, len(grid), err, strip)
    return HSResult(operator=out, error_estimate=err, strip_estimate=strip, nodes=len(grid))


# --- ASTLO ------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class AstloFamily:
    """t -> chi((phi - c|t|)/s)."""

    phi: Union[RealField, HermitianOperator]
    chi: CutoffFunction
    speed_c: float
    scale_s: float

    def __post_init__(self) -> None:
        if not (self.scale_s > 0):
            raise ValueError(f"scale_s must be > 0, got {self.scale_s}")
        if self.speed_c < 0:
            raise ValueError(f"speed_c must be >= 0, got {self.speed_c}")

    @property
    def size(self) -> int:
        return len(self.phi) if isinstance(self.phi, RealField) else self.phi.size

    @property
    def is_diagonal(self) -> bool:
        return isinstance(self.phi, RealField) or self.phi.is_diagonal

    def argument(self, t: float) -> Union[RealField, HermitianOperator]:
        shift = self.speed_c * abs(t)
        if isinstance(self.phi, RealField):
            return RealField((self.phi.values - shift) / self.scale_s, self.phi.units)
        return self.phi.shifted(shift).scaled(1.0 / self.scale_s)

    def with_scale(self, s: float) -> "AstloFamily":
        return AstloFamily(self.phi, self.chi, self.speed_c, s)

    def with_phi(self, phi: Union[RealField, HermitianOperator]) -> "AstloFamily":
        return AstloFamily(phi, self.chi, self.speed_c, self.scale_s)

    def with_cutoff(self, chi: CutoffFunction) -> "AstloFamily":
        return AstloFamily(self.phi, chi, self.speed_c, self.scale_s)


def astlo(
    family: AstloFamily,
    t: float,
    cutoff: Optional[SmoothFunction] = None,
    order: int = 0,
) -> HermitianOperator:
    """f^(order)((phi - c|t|)/s) with f = cutoff or the family's chi."""
    if not (family.scale_s > 0):
        raise ValueError(f"scale_s must be > 0, got {family.scale_s}")
    f = cutoff if cutoff is not None else family.chi

    def g(v: np.ndarray) -> np.ndarray:
        return f.derivative(v, order)

    label = f"A_s(t={t:g}, order={order})"
    if isinstance(family.phi, RealField):
        return apply_function_diag(family.argument(t), g, label)
    phi = family.phi
    if phi.is_diagonal:
        return apply_function_diag((phi.data - family.speed_c * abs(t)) / family.scale_s, g, label)
    # reuse the eigenbasis of phi: shifting and scaling keep the eigenvectors
    evals, evecs = phi.eigh
    gv = _apply_scalar(g, (evals - family.speed_c * abs(t)) / family.scale_s)
    out = (evecs * gv[None, :]) @ evecs.conj().T
    return HermitianOperator(0.5 * (out + out.conj().T), label)


def time_derivative_astlo(family: AstloFamily, t: float) -> HermitianOperator:
    """-(c/s) sign(t) A_s(t, chi'); at t = 0 the right derivative."""
    sign = 1.0 if t >= 0 else -1.0
    der = astlo(family, t, order=1)
    return der.scaled(-(family.speed_c / family.scale_s) * sign, f"dA_s/dt(t={t:g})")


# --- commutators -------------------------------------------------------------------


def commutator(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    return A @ B - B @ A


def iterated_commutator(H: OperatorLike, phi: ReferenceLike, k: int) -> np.ndarray:
    """ad^k_phi(H) with ad_phi(X) = [X, phi]."""
    if k < 1:
        raise ValueError(f"commutator order k must be >= 1, got {k}")
    X = np.asarray(as_matrix(H))
    diag = _diagonal_of(phi)
    size = diag.size if diag is not None else as_matrix(phi).shape[0]
    if X.shape != (size, size):
        raise ValueError(f"operator shape {X.shape} does not match reference size {size}")
    if diag is not None:
        d = np.asarray(diag)
        for _ in range(k):
            X = X * d[None, :] - d[:, None] * X
        return X
    P = as_matrix(phi)
    for _ in range(k):
        X = X @ P - P @ X
    return X


def kernel_commutator(op: NonlocalOperator, phi: Union[RealField, np.ndarray], k: int) -> np.ndarray:
    """Entries -(phi(y) - phi(x))^k K(x, y) h^d, zero diagonal."""
    if k < 1:
        raise ValueError(f"commutator order k must be >= 1, got {k}")
    values = phi.values if isinstance(phi, RealField) else np.asarray(phi, dtype=float)
    op.lattice.check_sites(values, "phi")
    diff = values[None, :] - values[:, None]
    return -(diff**k) * op.weights


def spectral_norm(M: np.ndarray) -> float:
    if M.size == 0:
        return 0.0
    return float(np.linalg.norm(M, 2))


@dataclass(frozen=True, eq=False)
class ExpansionTerm:
    k: int
    coefficient: float
    matrix: np.ndarray

    @property
    def norm(self) -> float:
        return spectral_norm(self.matrix)


@dataclass(frozen=True, eq=False)
class CommutatorExpansion:
    """
    [H, A_s(f)] = sum_k coefficient_k * matrix_k + s^-(n+1) remainder.

    right: coefficient s^-k/k!, matrix A_s(f^(k)) B_k
    left:  coefficient (-1)^(k+1) s^-k/k!, matrix B_k A_s(f^(k))
    """

    order_n: int
    side: str
    s: float
    t: float
    terms: list[ExpansionTerm]
    remainder: np.ndarray
    commutator: np.ndarray
    b_norms: tuple[float, ...]
    remainder_constant: Optional[float] = None

    @property
    def ceiling(self) -> Optional[float]:
        """2 * int |df~| |Im z|^-(n+2) * ||B_{n+1}||."""
        if self.remainder_constant is None:
            return None
        return 2.0 * self.remainder_constant * self.b_norms[-1]

    @property
    def series(self) -> np.ndarray:
        out = np.zeros_like(self.commutator)
        for term in self.terms:
            out = out + term.coefficient * term.matrix
        return out

    def reconstruct(self) -> np.ndarray:
        return self.series + self.s ** (-(self.order_n + 1)) * self.remainder

    def reconstruction_error(self) -> float:
        scale = float(np.linalg.norm(self.commutator)) or 1.0
        return float(np.linalg.norm(self.reconstruct() - self.commutator)) / scale

    @property
    def remainder_norm(self) -> float:
        return spectral_norm(self.remainder)

    @property
    def truncation_norm(self) -> float:
        """||[H, A_s] - sum of terms||."""
        return spectral_norm(self.commutator - self.series)

    @property
    def term_norms(self) -> list[float]:
        return [t.norm for t in self.terms]


@lru_cache(maxsize=64)
def _remainder_constant(chi: CutoffFunction, n: int) -> float:
    return float(remainder_integral(AnalyticExtension(chi, n + 1), n + 1))


def commutator_expansion(
    H: OperatorLike,
    family: AstloFamily,
    t: float,
    n: int,
    side: Side = "right",
    *,
    with_ceiling: bool = True,
) -> CommutatorExpansion:
    if n < 1:
        raise ValueError(f"expansion order n must be >= 1, got {n}")
    if side not in ("left", "right"):
        raise ValueError(f"side must be 'left' or 'right', got {side!r}")
    s = family.scale_s
    Hm = np.asarray(as_matrix(H))
    B = [iterated_commutator(Hm, family.phi, k) for k in range(1, n + 2)]
    A0 = astlo(family, t).matrix
    C = commutator(Hm, A0)
    terms = []
    for k in range(1, n + 1):
        Ak = astlo(family, t, order=k).matrix
        if side == "right":
            coef = s ** (-k) / math.factorial(k)
            mat = Ak @ B[k - 1]
        else:
            coef = (-1.0) ** (k + 1) * s ** (-k) / math.factorial(k)
            mat = B[k - 1] @ Ak
        terms.append(ExpansionTerm(k=k, coefficient=coef, matrix=mat))
    series = np.zeros_like(C, dtype=np.result_type(C, *[t_.matrix for t_ in terms]))
    for term in terms:
        series = series + term.coefficient * term.matrix
    remainder = s ** (n + 1) * (C - series)
    constant = _remainder_constant(family.chi, n) if with_ceiling else None
    return CommutatorExpansion(
        order_n=n,
        side=side,
        s=s,
        t=t,
        terms=terms,
        remainder=remainder,
        commutator=C,
        b_norms=tuple(spectral_norm(b) for b in B),
        remainder_constant=constant,
    )


@dataclass(frozen=True, eq=False)
class SymmetrizedExpansion:
    """i[H, A_s(chi)] = leading + intermediate + remainder, each Hermitian."""

    leading: np.ndarray
    intermediate: np.ndarray
    remainder: np.ndarray
    total: np.ndarray

    def reconstruction_error(self) -> float:
        scale = float(np.linalg.norm(self.total)) or 1.0
        return float(np.linalg.norm(self.leading + self.intermediate + self.remainder - self.total)) / scale


def _herm_part(M: np.ndarray) -> np.ndarray:
    return 0.5 * (M + M.conj().T)


def symmetrized_expansion(H: OperatorLike, family: AstloFamily, t: float, n: int) -> SymmetrizedExpansion:
    exp = commutator_expansion(H, family, t, n, "right", with_ceiling=False)
    s = exp.s
    lead = _herm_part(1j * exp.terms[0].coefficient * exp.terms[0].matrix)
    inter = np.zeros_like(lead)
    for term in exp.terms[1:]:
        inter = inter + _herm_part(1j * term.coefficient * term.matrix)
    rem = _herm_part(1j * s ** (-(n + 1)) * exp.remainder)
    return SymmetrizedExpansion(leading=lead, intermediate=inter, remainder=rem, total=1j * exp.commutator)


@dataclass(frozen=True, eq=False)
class RemainderQuadrature:
    matrix: np.ndarray
    error_estimate: float
    strip_estimate: float


def _rem_kernel(r: np.ndarray, coeff: np.ndarray, n: int, side: str) -> np.ndarray:
    if side == "right":
        left, right = coeff[:, None] * r ** (n + 1), r
    else:
        left, right = coeff[:, None] * r, r ** (n + 1)
    return left.T @ right


def _rem_hadamard(evals: np.ndarray, grid, n: int, side: str) -> np.ndarray:
    size = evals.size
    S = np.zeros((size, size), dtype=complex)
    for start in range(0, len(grid), HS_CHUNK):
        sl = slice(start, start + HS_CHUNK)
        z = grid.z[sl]
        coeff = grid.density[sl] * grid.weights[sl]
        r = 1.0 / (z[:, None] - evals[None, :])
        S += _rem_kernel(r, coeff, n, side)
        S += _rem_kernel(r.conj(), coeff.conj(), n, side)
    return S


def remainder_by_quadrature(
    H: OperatorLike,
    family: AstloFamily,
    t: float,
    n: int,
    side: Side = "right",
    resolution: Optional[HSResolution] = None,
) -> RemainderQuadrature:
    """
    Remainder from its resolvent form with R = (z - phi_s)^-1:
    right = int df~ R^(n+1) B_(n+1) R, left = (-1)^n int df~ R B_(n+1) R^(n+1).
    """
    res = resolution or HSResolution()
    ext = AnalyticExtension(family.chi, n + 3)
    arg = family.argument(t)
    if isinstance(arg, RealField):
        evals, U = arg.values, None
    elif arg.is_diagonal:
        evals, U = arg.data, None
    else:
        evals, U = arg.eigh
    B = iterated_commutator(as_matrix(H), family.phi, n + 1)
    Bt = B if U is None else U.conj().T @ B @ U
    sign = 1.0 if side == "right" else (-1.0) ** n

    def assemble(grid) -> np.ndarray:
        M = sign * Bt * _rem_hadamard(np.asarray(evals, dtype=float), grid, n, side)
        return M if U is None else U @ M @ U.conj().T

    grid = extension_grid(ext, res)
    fine = assemble(grid)
    coarse = assemble(extension_grid(ext, res.coarse_order()))
    vals = 2.0 * np.abs(grid.density) * np.abs(grid.y) ** (-(n + 2)) * grid.weights
    per_level = np.array([vals[grid.level == j].sum() for j in range(grid.levels)])
    strip, _ = strip_extrapolation(per_level)
    strip *= spectral_norm(B)
    return RemainderQuadrature(matrix=fine, error_estimate=spectral_norm(fine - coarse) + strip, strip_estimate=strip)


@dataclass(frozen=True)
class CommutatorBound:
    measured: float
    reference: float

    @property
    def ratio(self) -> float:
        if self.reference > 0:
            return self.measured / self.reference
        return 0.0 if self.measured <= 1e-14 else math.inf


def potential_commutator_bound(V: HermitianOperator, family: AstloFamily, t: float) -> CommutatorBound:
    """(||[V, A_s(t, chi)]||, s^-1 ||[phi, V]||)."""
    if V.is_diagonal and family.is_diagonal:
        return CommutatorBound(0.0, 0.0)
    A = astlo(family, t).matrix
    Vm = V.matrix
    measured = spectral_norm(commutator(Vm, A))
    P = as_matrix(family.phi.values if isinstance(family.phi, RealField) else family.phi)
    reference = spectral_norm(commutator(P, Vm)) / family.scale_s
    return CommutatorBound(measured=measured, reference=reference)


def expansion_report(expansion: CommutatorExpansion) -> ExpansionReport:
    return ExpansionReport(
        order=expansion.order_n,
        side=expansion.side,
        s=expansion.s,
        term_norms=expansion.term_norms,
        remainder_norm=expansion.remainder_norm,
        ceiling=expansion.ceiling,
        reconstruction_error=expansion.reconstruction_error(),
    )


@dataclass(frozen=True)
class RemainderScaling:
    scales: tuple[float, ...]
    truncation_norms: tuple[float, ...]
    remainder_norms: tuple[float, ...]
    slope: float

    @property
    def remainder_spread(self) -> float:
        """max/min of ||Rem(s)|| over the sweep."""
        lo = min(self.remainder_norms)
        return max(self.remainder_norms) / lo if lo > 0 else math.inf


def remainder_scaling(
    H: OperatorLike,
    phi: RealField,
    chi: CutoffFunction,
    n: int,
    scales: tuple[float, ...] = (4.0, 8.0, 16.0, 32.0, 64.0, 128.0, 256.0, 512.0, 1024.0),
    side: Side = "right",
) -> RemainderScaling:
    """
    Log-log slope of ||[H, A_s] - sum of terms|| against s.

    phi is shifted by s*delta/2 at each scale so that (phi + s delta/2)/s stays inside the
    transition region of chi; commutators with phi do not see the shift.
    """
    if len(scales) < 2:
        raise ValueError("remainder_scaling needs at least two scales")
    half = 0.5 * chi.delta
    trunc, rems = [], []
    for s in scales:
        family = AstloFamily(phi.shifted(-s * half), chi, 0.0, s)
        exp = commutator_expansion(H, family, 0.0, n, side, with_ceiling=False)
        trunc.append(exp.truncation_norm)
        rems.append(exp.remainder_norm)
    logs, logt = np.log(np.asarray(scales)), np.log(np.maximum(np.asarray(trunc), 1e-300))
    slope = float(np.polyfit(logs, logt, 1)[0])
    logger.info("remainder scaling n=%s side=%s slope=%.3f", n, side, slope)
    return RemainderScaling(tuple(float(s) for s in scales), tuple(trunc), tuple(rems), slope)

from __future__ import annotations

from typing import Any


class LabError(RuntimeError):
    """
    Base class for failures the lab reports as structured errors.

    `details` carries the diagnostics (partial sums, offending parameters, times) so the CLI
    can log them and the runner can store them in the manifest.
    """

    def __init__(self, message: str, **details: Any) -> None:
        super().__init__(message)
        self.details: dict[str, Any] = dict(details)

    def __str__(self) -> str:
        base = super().__str__()
        if not self.details:
            return base
        extras = ", ".join(f"{k}={v!r}" for k, v in sorted(self.details.items()))
        return f"{base} ({extras})"


class DivergenceError(LabError):
    """An integral (moment, weighted norm, tail) does not converge."""


class QuadratureError(LabError):
    """A quadrature or its extrapolation failed to converge."""


class EigensolverError(LabError):
    """Dense eigendecomposition failed."""


class BlowUpError(LabError):
    """Non-finite amplitudes appeared during a nonlinear evolution."""

    @property
    def time(self) -> float:
        return float(self.details.get("time", float("nan")))


class HypothesisError(LabError):
    """A theorem hypothesis required by a check is violated (c <= kappa, s <= 0, ...)."""

from __future__ import annotations

import math
from typing import Any, Literal, Optional

from pydantic import BaseModel, Field, model_validator


# Margins below -tolerance fail an inequality report.
DEFAULT_TOLERANCE = 1e-8
MIN_FIT_POINTS = 8


class InequalityReport(BaseModel):
    name: str

    # min eigenvalue of RHS - LHS per sample (or scalar slack)
    margins: list[float] = Field(default_factory=list)
    samples: list[float] = Field(default_factory=list)
    tolerance: float = DEFAULT_TOLERANCE
    passed: bool = True

    # Fitted where the constant is only known to exist.
    smallest_C: Optional[float] = None
    # None when no stability study was run.
    stable: Optional[bool] = None

    details: dict[str, Any] = Field(default_factory=dict)

    @model_validator(mode="after")
    def _validate(self) -> "InequalityReport":
        if self.tolerance < 0:
            raise ValueError("tolerance must be >= 0")
        margins_ok = all(m >= -self.tolerance for m in self.margins if not math.isnan(m)) and not any(
            math.isnan(m) for m in self.margins
        )
        if self.passed != margins_ok:
            raise ValueError(f"report {self.name!r}: passed={self.passed} disagrees with its margins")
        return self

    @classmethod
    def from_margins(cls, name: str, margins: list[float], tolerance: float = DEFAULT_TOLERANCE, **kwargs: Any) -> "InequalityReport":
        margins = [float(m) for m in margins]
        ok = all(not math.isnan(m) and m >= -tolerance for m in margins)
        return cls(name=name, margins=margins, tolerance=tolerance, passed=ok, **kwargs)

    @property
    def ok(self) -> bool:
        """Margins pass, the fitted constant is finite and any stability study agreed."""
        if not self.passed or self.stable is False:
            return False
        return self.smallest_C is None or math.isfinite(self.smallest_C)

    @property
    def worst_margin(self) -> Optional[float]:
        return min(self.margins) if self.margins else None


class DecayFit(BaseModel):
    times: list[float]
    values: list[float]

    fitted_exponent: Optional[float] = None
    fit_window: tuple[float, float]
    residual: Optional[float] = None
    points_used: int = 0

    # sup_t |t|^n * value over the window
    sup_scaled: Optional[float] = None
    status: Literal["fit", "exact_zero", "inconclusive"] = "fit"

    @model_validator(mode="after")
    def _validate(self) -> "DecayFit":
        if len(self.times) != len(self.values):
            raise ValueError("times and values must have the same length")
        if self.fit_window[0] > self.fit_window[1]:
            raise ValueError("fit_window must satisfy t_min <= t_max")
        if self.status == "fit":
            if self.points_used < MIN_FIT_POINTS:
                raise ValueError(f"a decay fit needs >= {MIN_FIT_POINTS} points, got {self.points_used}")
            if self.fitted_exponent is None or self.residual is None:
                raise ValueError("a decay fit must report its exponent and residual")
        return self

    def passes(self, n: int, slack: float = 0.3) -> bool:
        if self.status == "exact_zero":
            return True
        if self.status == "inconclusive" or self.fitted_exponent is None:
            return False
        return self.fitted_exponent <= -n + slack


class ExpansionReport(BaseModel):
    order: int
    side: Literal["left", "right"]
    s: float
    term_norms: list[float]
    remainder_norm: float
    ceiling: Optional[float] = None
    reconstruction_error: float = 0.0

    @property
    def within_ceiling(self) -> bool:
        return self.ceiling is None or self.remainder_norm <= self.ceiling * (1.0 + 1e-9)


class RunManifest(BaseModel):
    scenario: str
    config_hash: str
    tool_version: str
    seed: int

    # Relative paths under the run directory, sorted.
    files: list[str] = Field(default_factory=list)
    summary: dict[str, bool] = Field(default_factory=dict)
    ok: bool = True
    failure: Optional[str] = None

    # Kept out of manifest.json (written to timings.txt) so reruns stay byte-identical.
    stage_seconds: dict[str, float] = Field(default_factory=dict, exclude=True)

    @model_validator(mode="after")
    def _validate(self) -> "RunManifest":
        if self.failure is not None and self.ok:
            raise ValueError("a manifest with a failure cause cannot be ok")
        if self.failure is None and self.ok and not all(self.summary.values()):
            raise ValueError("manifest ok=True but the summary lists failing checks")
        return self

    @property
    def checks_total(self) -> int:
        return len(self.summary)

    @property
    def checks_passed(self) -> int:
        return sum(1 for v in self.summary.values() if v)

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
from pathlib import Path
from typing import Literal, Optional, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .kernelop import KernelFamily, KernelSpec
from .lattice import MIN_POINTS_PER_AXIS, SUPPORTED_DIMS, Boundary


logger = logging.getLogger(__name__)

_ENV_VAR_PATTERN = re.compile(r"\$\{([A-Z0-9_]+)\}")
_CHECK_NAME_RE = re.compile(r"^[a-z0-9][a-z0-9_-]*$")

CheckKind = Literal[
    "speed_bounds",
    "hs_crosscheck",
    "expansion",
    "sandwich",
    "commutator_bound",
    "rme",
    "envelope",
    "main_inequality",
    "maximal_velocity",
    "lightcone_decay",
    "strichartz",
    "markov",
    "soliton",
    "positivity",
    "duality",
]
# Checks that consume the state trajectory of the dynamics block.
TRAJECTORY_CHECKS = frozenset({"envelope", "lightcone_decay", "strichartz", "markov", "duality"})
# Checks built on the linear propagator U(t, 0).
PROPAGATOR_CHECKS = frozenset({"rme", "main_inequality", "maximal_velocity", "positivity", "duality"})
# Checks that can repeat themselves at twice the points per axis.
REFINABLE_KINDS = frozenset({"rme", "lightcone_decay"})


def _expand_env_vars(value: object) -> object:
    if isinstance(value, str):
        def repl(match: re.Match[str]) -> str:
            return os.getenv(match.group(1), "")

        return _ENV_VAR_PATTERN.sub(repl, value)
    if isinstance(value, list):
        return [_expand_env_vars(v) for v in value]
    if isinstance(value, dict):
        return {k: _expand_env_vars(v) for k, v in value.items()}
    return value


def _env_bool(name: str, default: bool = False) -> bool:
    raw = (os.getenv(name, "") or "").strip().lower()
    if not raw:
        return bool(default)
    return raw in {"1", "true", "t", "yes", "y", "on"}


def _env_int(name: str, default: int) -> int:
    raw = (os.getenv(name, "") or "").strip()
    if not raw:
        return default
    try:
        return int(raw)
    except ValueError:
        logger.warning("Ignoring non-integer %s=%r (using %s)", name, raw, default)
        return default


def _deep_merge(base: object, override: object) -> object:
    if isinstance(base, dict) and isinstance(override, dict):
        out = dict(base)
        for k, v in override.items():
            if k in out:
                out[k] = _deep_merge(out[k], v)
            else:
                out[k] = v
        return out
    return override


def _default_config_from_env() -> dict:
    """Run-environment defaults; the scenario file overrides them block by block."""
    return {
        "seed": _env_int("LAB_SEED", 0),
        "threads": _env_int("LAB_THREADS", 1),
        "output": {
            "directory": os.getenv("LAB_OUT_DIR", "runs"),
            "plots": _env_bool("LAB_PLOTS", default=True),
        },
        "logging": {
            "level": os.getenv("LOG_LEVEL", "INFO"),
            "file_path": os.getenv("LOG_FILE", ""),
        },
        "ledger": {
            "db_path": os.getenv("LAB_LEDGER_PATH", "data/ledger.db"),
        },
    }


class _Block(BaseModel):
    model_config = ConfigDict(extra="forbid")


class LatticeConfig(_Block):
    dim: int = 1
    half_width: float = 32.0
    points_per_axis: int = 128
    boundary: Boundary = Boundary.PERIODIC

    @model_validator(mode="after")
    def _validate(self) -> "LatticeConfig":
        if self.dim not in SUPPORTED_DIMS:
            raise ValueError(f"lattice.dim must be one of {SUPPORTED_DIMS}")
        if not (self.half_width > 0):
            raise ValueError("lattice.half_width must be > 0")
        if self.points_per_axis < MIN_POINTS_PER_AXIS:
            raise ValueError(f"lattice.points_per_axis must be >= {MIN_POINTS_PER_AXIS}")
        return self


class ReferenceConfig(_Block):
    """
    The reference operator phi.

    region:     phi = d_X for the box X = [lower, upper]
    coordinate: phi = x_axis - offset, X = {phi <= 0}
    table:      explicit per-site values, X = {phi <= 0}
    """

    kind: Literal["region", "coordinate", "table"] = "region"
    lower: list[float] = Field(default_factory=lambda: [-1.0])
    upper: list[float] = Field(default_factory=lambda: [1.0])
    axis: int = 0
    offset: float = 0.0
    values: list[float] = Field(default_factory=list)

    @model_validator(mode="after")
    def _validate(self) -> "ReferenceConfig":
        if self.kind == "region":
            if len(self.lower) != len(self.upper):
                raise ValueError("reference.lower and reference.upper must have the same length")
            if any(hi < lo for lo, hi in zip(self.lower, self.upper)):
                raise ValueError("reference.upper must be >= reference.lower")
        if self.kind == "table" and not self.values:
            raise ValueError("reference.values is required for kind 'table'")
        return self


class CutoffConfig(_Block):
    delta: float = 0.5
    n: int = 2
    family: Literal["polynomial", "smooth_exp"] = "polynomial"
    bump_exponent: Optional[int] = None

    @model_validator(mode="after")
    def _validate(self) -> "CutoffConfig":
        if not (0 < self.delta < 1):
            raise ValueError("cutoff.delta must lie in (0, 1)")
        if self.n < 1:
            raise ValueError("cutoff.n must be >= 1")
        return self


class InitialStateConfig(_Block):
    # None centers the packet in X.
    center: Optional[list[float]] = None
    width: float = 0.5
    momentum: Optional[list[float]] = None

    @model_validator(mode="after")
    def _validate(self) -> "InitialStateConfig":
        if not (self.width > 0):
            raise ValueError("dynamics.initial.width must be > 0")
        return self


class DynamicsConfig(_Block):
    """
    potential: none, static W(x) = amplitude cos(frequency x_0),
    time_dependent V(t, x) = amplitude cos(frequency t) exp(-x^2), or nls with f(rho) = coupling rho.
    """

    potential: Literal["none", "static", "time_dependent", "nls"] = "none"
    amplitude: float = 0.0
    frequency: float = 1.0
    coupling: float = 1.0
    dt: Optional[float] = None
    t_max: float = 10.0
    samples: int = 51
    initial: InitialStateConfig = InitialStateConfig()

    @model_validator(mode="after")
    def _validate(self) -> "DynamicsConfig":
        if not (self.t_max > 0):
            raise ValueError("dynamics.t_max must be > 0")
        if self.samples < 2:
            raise ValueError("dynamics.samples must be >= 2")
        if self.dt is not None and not (self.dt > 0):
            raise ValueError("dynamics.dt must be > 0")
        return self

    @property
    def potential_bound(self) -> float:
        return abs(self.amplitude) if self.potential in ("static", "time_dependent") else 0.0


class CheckConfig(_Block):
    """
    One named check. `c` is the light-cone speed; when omitted it is c_ratio * kappa,
    kappa being computed in the bounds stage.
    """

    name: str
    kind: CheckKind
    n: int = 2
    c: Optional[float] = None
    c_ratio: float = 1.5
    # proof delta override (defaults to (c - kappa)/3)
    delta: Optional[float] = None
    p_exp: Optional[float] = None
    fit_window: Optional[tuple[float, float]] = None
    scales: Optional[list[float]] = None
    side: Literal["left", "right"] = "right"
    variants: list[Literal["reflect", "shift"]] = Field(default_factory=lambda: ["reflect", "shift"])
    shift_b: float = 1.0
    C_V: float = 0.0
    beta: Optional[list[float]] = None
    trials: int = 10
    # repeat the check at twice the points per axis and compare the fitted values
    refine: bool = False

    @model_validator(mode="after")
    def _validate(self) -> "CheckConfig":
        if not _CHECK_NAME_RE.match(self.name):
            raise ValueError(f"checks.name {self.name!r} must be lowercase letters, digits, '_' or '-'")
        if self.n < 1:
            raise ValueError(f"checks[{self.name}].n must be >= 1")
        if self.c is not None and not (self.c > 0):
            raise ValueError(f"checks[{self.name}].c must be > 0")
        if not (self.c_ratio > 1):
            raise ValueError(f"checks[{self.name}].c_ratio must be > 1 (c must exceed kappa)")
        if self.fit_window is not None and not (0 < self.fit_window[0] <= self.fit_window[1]):
            raise ValueError(f"checks[{self.name}].fit_window must satisfy 0 < t_min <= t_max")
        if self.kind == "strichartz" and self.p_exp is not None and not (self.p_exp > 1.0 / self.n):
            raise ValueError(f"checks[{self.name}].p_exp must be > 1/n = {1.0 / self.n}")
        if self.kind == "soliton" and not self.beta:
            raise ValueError(f"checks[{self.name}].beta is required for soliton checks")
        if self.scales is not None and (len(self.scales) < 2 or any(s <= 0 for s in self.scales)):
            raise ValueError(f"checks[{self.name}].scales needs >= 2 positive values")
        if self.C_V < 0:
            raise ValueError(f"checks[{self.name}].C_V must be >= 0")
        if self.trials < 1:
            raise ValueError(f"checks[{self.name}].trials must be >= 1")
        if self.refine and self.kind not in REFINABLE_KINDS:
            raise ValueError(f"checks[{self.name}].refine is only supported for {sorted(REFINABLE_KINDS)}")
        return self

    @property
    def strichartz_exponent(self) -> float:
        return self.p_exp if self.p_exp is not None else 2.0 / self.n


class OutputConfig(_Block):
    directory: str = "runs"
    formats: list[Literal["csv", "json"]] = Field(default_factory=lambda: ["csv", "json"])
    plots: bool = True

    @model_validator(mode="after")
    def _validate(self) -> "OutputConfig":
        # an unset ${LAB_OUT_DIR} expands to ""
        if not self.directory.strip():
            self.directory = "runs"
        if not self.formats:
            raise ValueError("output.formats must list at least one of csv, json")
        return self


class LoggingConfig(_Block):
    level: str = "INFO"
    file_path: str = ""


class LedgerConfig(_Block):
    enabled: bool = True
    db_path: str = "data/ledger.db"


class ScenarioConfig(_Block):
    name: str = "scenario"
    description: str = ""
    seed: int = 0
    threads: int = 1
    lattice: LatticeConfig = LatticeConfig()
    kernel: KernelSpec = KernelSpec(family=KernelFamily.POWER_LAW, a=5.0)
    reference: ReferenceConfig = ReferenceConfig()
    cutoff: CutoffConfig = CutoffConfig()
    dynamics: DynamicsConfig = DynamicsConfig()
    checks: list[CheckConfig] = Field(default_factory=list)
    output: OutputConfig = OutputConfig()
    logging: LoggingConfig = LoggingConfig()
    ledger: LedgerConfig = LedgerConfig()

    @model_validator(mode="before")
    @classmethod
    def _kernel_dim_from_lattice(cls, data: object) -> object:
        # The kernel lives on the lattice, so its dimension follows unless set explicitly.
        if isinstance(data, dict):
            kernel = data.get("kernel")
            lattice = data.get("lattice")
            if isinstance(kernel, dict) and "dim" not in kernel and isinstance(lattice, dict) and "dim" in lattice:
                data = {**data, "kernel": {**kernel, "dim": lattice["dim"]}}
        return data

    @model_validator(mode="after")
    def _validate(self) -> "ScenarioConfig":
        if self.threads < 1:
            raise ValueError("threads must be >= 1")
        if self.kernel.dim != self.lattice.dim:
            raise ValueError(f"kernel.dim ({self.kernel.dim}) must match lattice.dim ({self.lattice.dim})")
        names = [c.name for c in self.checks]
        dupes = sorted({n for n in names if names.count(n) > 1})
        if dupes:
            raise ValueError(f"checks names must be unique, duplicated: {', '.join(dupes)}")
        ref = self.reference
        if ref.kind == "region" and len(ref.lower) != self.lattice.dim:
            raise ValueError(f"reference.lower must have lattice.dim = {self.lattice.dim} components")
        if ref.kind == "coordinate" and not (0 <= ref.axis < self.lattice.dim):
            raise ValueError("reference.axis must be a lattice axis")
        if ref.kind == "coordinate" and self.lattice.boundary == Boundary.PERIODIC:
            # x_axis jumps by 2L across the seam
            raise ValueError("reference.kind 'coordinate' needs lattice.boundary 'truncated'")
        if ref.kind == "table" and len(ref.values) != self.lattice.points_per_axis**self.lattice.dim:
            raise ValueError("reference.values must have one entry per lattice site")
        for check in self.checks:
            if check.kind == "soliton" and len(check.beta or []) != self.lattice.dim:
                raise ValueError(f"checks[{check.name}].beta must have lattice.dim components")
            if check.kind == "soliton" and self.dynamics.potential not in ("none", "nls"):
                raise ValueError(f"checks[{check.name}] needs dynamics.potential 'none' or 'nls'")
            if check.kind == "soliton" and ref.kind != "region":
                raise ValueError(f"checks[{check.name}] needs reference.kind 'region' (a bounded X)")
            if check.kind in PROPAGATOR_CHECKS and self.dynamics.potential == "nls":
                raise ValueError(f"checks[{check.name}] needs a linear dynamics.potential, got 'nls'")
            if check.fit_window is not None and check.fit_window[1] > self.dynamics.t_max:
                raise ValueError(f"checks[{check.name}].fit_window must end by dynamics.t_max")
        if self.dynamics.initial.center is not None and len(self.dynamics.initial.center) != self.lattice.dim:
            raise ValueError("dynamics.initial.center must have lattice.dim components")
        return self

    def check(self, name: str) -> CheckConfig:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    @property
    def needs_trajectory(self) -> bool:
        return any(c.kind in TRAJECTORY_CHECKS for c in self.checks)


def _is_json(path: Path) -> bool:
    return path.suffix.lower() == ".json"


def parse_config(raw: dict) -> ScenarioConfig:
    merged = _deep_merge(_default_config_from_env(), _expand_env_vars(raw))
    return ScenarioConfig.model_validate(merged)


def load_config(path: Union[str, Path]) -> ScenarioConfig:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"scenario file not found: {p}")
    text = p.read_text(encoding="utf-8")
    raw = (json.loads(text) if _is_json(p) else yaml.safe_load(text)) or {}
    if not isinstance(raw, dict):
        raise ValueError(f"{p}: scenario file must contain a mapping at the top level")
    return parse_config(raw)


def canonical_json(cfg: ScenarioConfig) -> str:
    return json.dumps(cfg.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))


def config_hash(cfg: ScenarioConfig) -> str:
    return hashlib.sha256(canonical_json(cfg).encode("utf-8")).hexdigest()


def dump_config(cfg: ScenarioConfig, path: Union[str, Path]) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    data = cfg.model_dump(mode="json")
    if _is_json(p):
        p.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    else:
        p.write_text(yaml.safe_dump(data, sort_keys=True), encoding="utf-8")
    return p

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Any, Mapping, Optional

from .config import ScenarioConfig, parse_config


@dataclass(frozen=True)
class ScenarioInfo:
    name: str
    title: str
    config: Mapping[str, Any] = field(default_factory=dict)


_SLOPE_SCALES = [4, 8, 16, 32, 64, 128, 256, 512, 1024]

_LIGHTCONE = {
    "description": "Free power-law kernel started inside X = [-1, 1]: decay outside X_{c|t|} at rate t^-n.",
    "lattice": {"dim": 1, "half_width": 32.0, "points_per_axis": 256, "boundary": "periodic"},
    "kernel": {"family": "power_law", "a": 5.0},
    "reference": {"kind": "region", "lower": [-1.0], "upper": [1.0]},
    "cutoff": {"delta": 0.5, "n": 2},
    "dynamics": {"potential": "none", "t_max": 20.0, "samples": 81, "initial": {"width": 0.5}},
    "checks": [
        {"name": "speed", "kind": "speed_bounds", "n": 2},
        {"name": "sandwich", "kind": "sandwich", "n": 2, "trials": 20},
        {"name": "envelope", "kind": "envelope", "n": 2},
        {"name": "main", "kind": "main_inequality", "n": 2, "variants": ["reflect", "shift"], "shift_b": 1.0},
        {"name": "decay", "kind": "lightcone_decay", "n": 2, "fit_window": [5.0, 20.0]},
        {"name": "strichartz", "kind": "strichartz", "n": 2},
        {"name": "markov", "kind": "markov", "n": 2},
        {"name": "duality", "kind": "duality", "n": 2},
    ],
}

_DRIVEN = {
    "description": "Time-dependent bounded potential: monotone envelope and recursive monotonicity.",
    "lattice": {"dim": 1, "half_width": 16.0, "points_per_axis": 128, "boundary": "periodic"},
    "kernel": {"family": "power_law", "a": 5.0},
    "reference": {"kind": "region", "lower": [-1.0], "upper": [1.0]},
    "cutoff": {"delta": 0.5, "n": 2},
    "dynamics": {"potential": "time_dependent", "amplitude": 0.5, "frequency": 2.0, "t_max": 8.0, "samples": 33},
    "checks": [
        {"name": "commutator", "kind": "commutator_bound", "n": 2},
        {"name": "rme", "kind": "rme", "n": 2, "refine": True},
        {"name": "envelope", "kind": "envelope", "n": 2, "C_V": 0.5},
        {"name": "positivity", "kind": "positivity", "n": 2, "trials": 4},
    ],
}

_EXPANSION = {
    "description": "Commutator expansion of [H, A_s(chi)]: the truncation remainder scales as s^-(n+1).",
    # kernel reach ~ h = 0.01, small against the narrowest transition width delta * s = 3.6
    "lattice": {"dim": 1, "half_width": 1.28, "points_per_axis": 256, "boundary": "truncated"},
    "kernel": {"family": "gaussian", "sigma": 0.01},
    "reference": {"kind": "coordinate", "axis": 0},
    "cutoff": {"delta": 0.9, "n": 2},
    "dynamics": {"t_max": 1.0, "samples": 5, "initial": {"width": 0.1}},
    "checks": [
        {"name": "right", "kind": "expansion", "n": 2, "side": "right", "scales": _SLOPE_SCALES},
        {"name": "left", "kind": "expansion", "n": 2, "side": "left", "scales": _SLOPE_SCALES},
    ],
}

_HS = {
    "description": "Helffer-Sjostrand resolvent quadrature against eigendecomposition on random Hermitian matrices.",
    "lattice": {"dim": 1, "half_width": 8.0, "points_per_axis": 16, "boundary": "truncated"},
    "kernel": {"family": "compact", "radius": 2.0},
    "cutoff": {"delta": 0.5, "n": 2},
    "checks": [{"name": "hs", "kind": "hs_crosscheck", "n": 2, "trials": 10}],
}

_SOLITON = {
    "description": "Travelling profiles against the light cone, synthetic and cubic NLS.",
    "lattice": {"dim": 1, "half_width": 32.0, "points_per_axis": 256, "boundary": "periodic"},
    "kernel": {"family": "power_law", "a": 5.0},
    "reference": {"kind": "region", "lower": [-2.0], "upper": [2.0]},
    "cutoff": {"delta": 0.5, "n": 2},
    "dynamics": {"potential": "nls", "coupling": 1.0, "t_max": 10.0, "samples": 41},
    "checks": [
        {"name": "fast", "kind": "soliton", "n": 2, "beta": [2.0]},
        {"name": "still", "kind": "soliton", "n": 2, "beta": [0.0]},
    ],
}

_SYMMETRY = {
    "description": "Main inequality for phi, -phi and phi - b with one constant, and the maximal velocity bound.",
    "lattice": {"dim": 1, "half_width": 16.0, "points_per_axis": 128, "boundary": "periodic"},
    "kernel": {"family": "power_law", "a": 5.0},
    "reference": {"kind": "region", "lower": [-1.0], "upper": [1.0]},
    "cutoff": {"delta": 0.5, "n": 2},
    "dynamics": {"potential": "static", "amplitude": 0.2, "frequency": 0.5, "t_max": 10.0, "samples": 21},
    "checks": [
        {"name": "main", "kind": "main_inequality", "n": 2, "variants": ["reflect", "shift"], "shift_b": 1.0, "C_V": 0.2},
        {"name": "velocity", "kind": "maximal_velocity", "n": 2},
    ],
}

_ACCEPTANCE = {
    "description": "Desk-scale free run to t = 50: envelope over s in {t_max, 2 t_max}, main inequality with its variants, refined decay fit.",
    "lattice": {"dim": 1, "half_width": 128.0, "points_per_axis": 1024, "boundary": "periodic"},
    "kernel": {"family": "power_law", "a": 5.0},
    "reference": {"kind": "region", "lower": [-1.0], "upper": [1.0]},
    "cutoff": {"delta": 0.5, "n": 2},
    "dynamics": {"potential": "none", "t_max": 50.0, "samples": 51, "initial": {"width": 0.5}},
    "checks": [
        {"name": "envelope", "kind": "envelope", "n": 2},
        {"name": "main", "kind": "main_inequality", "n": 2, "variants": ["reflect", "shift"], "shift_b": 1.0},
        {"name": "decay", "kind": "lightcone_decay", "n": 2, "fit_window": [5.0, 50.0], "refine": True},
        {"name": "strichartz", "kind": "strichartz", "n": 2},
        {"name": "markov", "kind": "markov", "n": 2},
    ],
}

KNOWN_SCENARIOS: Mapping[str, ScenarioInfo] = {
    "free-lightcone": ScenarioInfo("free-lightcone", "free-kernel light cone", _LIGHTCONE),
    "driven-envelope": ScenarioInfo("driven-envelope", "driven-potential envelope", _DRIVEN),
    "expansion-slope": ScenarioInfo("expansion-slope", "commutator-expansion slope study", _EXPANSION),
    "hs-crosscheck": ScenarioInfo("hs-crosscheck", "HS backend cross-check", _HS),
    "soliton-speed": ScenarioInfo("soliton-speed", "soliton speed", _SOLITON),
    "symmetry-suite": ScenarioInfo("symmetry-suite", "shift/reflection symmetry suite", _SYMMETRY),
    "acceptance": ScenarioInfo("acceptance", "desk-scale acceptance run (slow)", _ACCEPTANCE),
}


def is_known_scenario(name: str) -> bool:
    return name.strip().lower() in KNOWN_SCENARIOS


def scenario_config(name: str, points: Optional[int] = None) -> ScenarioConfig:
    """Validated preset, with the lattice resolution overridden when `points` is given."""
    key = name.strip().lower()
    if key not in KNOWN_SCENARIOS:
        raise KeyError(f"unknown scenario preset {name!r} (known: {', '.join(sorted(KNOWN_SCENARIOS))})")
    raw = copy.deepcopy(dict(KNOWN_SCENARIOS[key].config))
    raw["name"] = key
    if points is not None:
        raw.setdefault("lattice", {})["points_per_axis"] = int(points)
    return parse_config(raw)


def list_builtin_scenarios() -> str:
    width = max(len(n) for n in KNOWN_SCENARIOS)
    lines = [f"{'name'.ljust(width)}  checks  title"]
    for name in sorted(KNOWN_SCENARIOS):
        info = KNOWN_SCENARIOS[name]
        checks = len(info.config.get("checks", []))
        lines.append(f"{name.ljust(width)}  {str(checks).rjust(6)}  {info.title}")
    return "\n".join(lines)

"""Numerical checks of the light-cone inequalities, each returning an InequalityReport or a DecayFit."""

from .backend import hs_backend_check, random_hermitian
from .dispersive import (
    TailSeries,
    decay_report,
    fit_decay,
    lightcone_decay_fit,
    markov_check,
    markov_tail_measure,
    strichartz_from_series,
    strichartz_norm,
    tail_mass_series,
)
from .heisenberg import duality_check, positivity_preservation_check, random_psd
from .localization import default_states, localization_state_check, main_inequality_check, maximal_velocity_check
from .monotonicity import (
    commutator_bound_check,
    envelope_check,
    envelope_constant,
    evolution_operators,
    intermediate_cutoffs,
    rme_check,
)
from .reports import (
    ProofParameters,
    min_eigenvalue,
    operator_tolerance,
    proof_parameters,
    scalar_constant,
    scale_uniformity_verdict,
    smallest_constant,
    stability_verdict,
)
from .sandwich import geometric_sandwich_check, random_lipschitz_field, randomized_sandwich_check, sandwich_scale
from .soliton import front_radius, region_diameter, soliton_speed_test, translate_profile

__all__ = [
    "ProofParameters",
    "TailSeries",
    "commutator_bound_check",
    "decay_report",
    "default_states",
    "duality_check",
    "envelope_check",
    "envelope_constant",
    "evolution_operators",
    "fit_decay",
    "front_radius",
    "geometric_sandwich_check",
    "hs_backend_check",
    "intermediate_cutoffs",
    "lightcone_decay_fit",
    "localization_state_check",
    "main_inequality_check",
    "markov_check",
    "markov_tail_measure",
    "maximal_velocity_check",
    "min_eigenvalue",
    "operator_tolerance",
    "positivity_preservation_check",
    "proof_parameters",
    "random_hermitian",
    "random_lipschitz_field",
    "random_psd",
    "randomized_sandwich_check",
    "region_diameter",
    "rme_check",
    "sandwich_scale",
    "scalar_constant",
    "scale_uniformity_verdict",
    "smallest_constant",
    "soliton_speed_test",
    "stability_verdict",
    "strichartz_from_series",
    "strichartz_norm",
    "tail_mass_series",
    "translate_profile",
]

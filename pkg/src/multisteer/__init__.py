"""Detection-loophole-free steering of many parties from a single entangled pair."""

from __future__ import annotations

__version__ = "0.1.0"

from .assemblages import Assemblage, Outcome, analytic_assemblage, apply_efficiency, compute_assemblage, pauli_settings
from .bounds import analytic_cutoff, cutoff_efficiency, cutoff_efficiency_symmetric, steering_verdict
from .states import StateFamilyParams, reduced_pair

__all__ = [
    "Assemblage",
    "Outcome",
    "StateFamilyParams",
    "analytic_assemblage",
    "analytic_cutoff",
    "apply_efficiency",
    "compute_assemblage",
    "cutoff_efficiency",
    "cutoff_efficiency_symmetric",
    "pauli_settings",
    "reduced_pair",
    "steering_verdict",
]

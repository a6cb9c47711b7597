"""Quantum-trajectory simulator for a cavity-QED entangled photon-pair source."""
from .analysis import (
    EventClass,
    InsufficientDataError,
    accumulate_coincidences,
    characterize_counts,
    chsh_fixed,
    chsh_max,
    classify,
    event_probabilities,
    fidelity,
    reconstruct_pair_state,
)
from .lindblad import evolve_density, lindblad_rhs
from .model import ParameterError, PulsePair, SystemParams
from .trajectory import StepSizeError, run_ensemble, run_trajectory

__version__ = "0.1.0"

__all__ = [
    "EventClass",
    "InsufficientDataError",
    "ParameterError",
    "PulsePair",
    "StepSizeError",
    "SystemParams",
    "accumulate_coincidences",
    "characterize_counts",
    "chsh_fixed",
    "chsh_max",
    "classify",
    "event_probabilities",
    "evolve_density",
    "fidelity",
    "lindblad_rhs",
    "reconstruct_pair_state",
    "run_ensemble",
    "run_trajectory",
]

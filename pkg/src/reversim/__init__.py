"""Simulation of logically reversible quantum measurements and their reversal."""

from .errors import (
    ImpossibleOutcomeError,
    NotInvertibleError,
    ReversimError,
    ValidationError,
)
from .kerr_qnd import KerrModel, discretized_family, kerr_operator
from .measurement import MeasurementFamily, apply_outcome, outcome_probabilities, sample_outcome
from .operator_core import DensityOperator, PureState, density_from_pure, fidelity, fock_density, trace_distance
from .photon_counting import no_count_evolve, no_count_invert, one_count_apply
from .reversibility import boundedness_probe, is_logically_reversible, unsharpen_sharp_family
from .reversing import ReversalPlan, build_reversal, build_truncated_reversal, verify_reversal

__version__ = "0.1.0"

__all__ = [
    "DensityOperator",
    "ImpossibleOutcomeError",
    "KerrModel",
    "MeasurementFamily",
    "NotInvertibleError",
    "PureState",
    "ReversalPlan",
    "ReversimError",
    "ValidationError",
    "apply_outcome",
    "boundedness_probe",
    "build_reversal",
    "build_truncated_reversal",
    "density_from_pure",
    "discretized_family",
    "fidelity",
    "fock_density",
    "is_logically_reversible",
    "kerr_operator",
    "no_count_evolve",
    "no_count_invert",
    "one_count_apply",
    "outcome_probabilities",
    "sample_outcome",
    "trace_distance",
    "unsharpen_sharp_family",
    "verify_reversal",
]

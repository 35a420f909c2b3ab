"""Generalized measurements described by a family of operators ``{A_k}``.

Outcome ``k`` occurs with probability ``tr[rho A_k^dag A_k]`` and leaves
the state ``A_k rho A_k^dag`` divided by that probability.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Hashable, Iterable, Sequence

import numpy as np

from .errors import (
    DegenerateFamilyError,
    ImpossibleOutcomeError,
    NumericalConsistencyError,
    ValidationError,
)
from .operator_core import DensityOperator, as_square

log = logging.getLogger(__name__)

IMPOSSIBLE_OUTCOME = 1e-12
PROBABILITY_SLACK = 1e-10
DECLARED_COMPLETENESS_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class MeasurementFamily:
    """Ordered, labeled set of measurement operators on a common space.

    Labels are opaque hashables (strings, ints, or the real-valued
    estimate of a discretized continuous outcome).  A family need not be
    complete; set ``completeness_declared`` to have it checked to 1e-8 at
    construction.
    """

    outcomes: tuple
    completeness_declared: bool = False
    name: str = ""
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        items = list(self.outcomes)
        if not items:
            raise ValidationError("a measurement family needs at least one outcome")
        labels, ops = [], []
        for entry in items:
            try:
                label, op = entry
            except (TypeError, ValueError):
                raise ValidationError("outcomes must be (label, operator) pairs") from None
            labels.append(label)
            ops.append(as_square(op, f"operator for outcome {label!r}"))
        dim = ops[0].shape[0]
        for label, op in zip(labels, ops):
            if op.shape[0] != dim:
                raise ValidationError(
                    f"operator for outcome {label!r} has dim {op.shape[0]}, expected {dim}"
                )
        if len(set(labels)) != len(labels):
            raise ValidationError("outcome labels must be unique")
        stack = np.stack(ops)
        stack.setflags(write=False)
        object.__setattr__(self, "outcomes", tuple(zip(labels, stack)))
        object.__setattr__(self, "_stack", stack)
        object.__setattr__(self, "_index", {lab: i for i, lab in enumerate(labels)})
        if self.completeness_declared:
            report = check_completeness(self, DECLARED_COMPLETENESS_TOL)
            if not report.passed:
                raise ValidationError(
                    f"family declared complete but sum A^dag A deviates by {report.max_deviation:.3e}"
                )

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[Hashable, np.ndarray]], **kwargs) -> "MeasurementFamily":
        return cls(tuple(pairs), **kwargs)

    @property
    def dim(self) -> int:
        return self._stack.shape[1]

    @property
    def labels(self) -> list:
        return [lab for lab, _ in self.outcomes]

    @property
    def operators(self) -> np.ndarray:
        """Read-only ``(n_outcomes, dim, dim)`` stack."""
        return self._stack

    def __len__(self) -> int:
        return len(self.outcomes)

    def index(self, label) -> int:
        try:
            return self._index[label]
        except (KeyError, TypeError):
            raise ValidationError(f"unknown outcome label {label!r}") from None

    def operator(self, label) -> np.ndarray:
        return self._stack[self.index(label)]

    @cached_property
    def effects(self) -> np.ndarray:
        """``A_k^dag A_k`` for every outcome, stacked."""
        ops = self._stack
        return np.einsum("kji,kjl->kil", ops.conj(), ops)


@dataclass(frozen=True, eq=False)
class OutcomeRecord:
    label: Hashable
    probability: float
    post_state: DensityOperator


@dataclass(frozen=True)
class CompletenessReport:
    max_deviation: float
    passed: bool
    tol: float


def _check_dims(family: MeasurementFamily, rho: DensityOperator) -> None:
    if family.dim != rho.dim:
        raise ValidationError(f"family acts on dim {family.dim}, state has dim {rho.dim}")


def _as_probability(value: complex, what: str) -> float:
    if abs(value.imag) > IMPOSSIBLE_OUTCOME:
        raise NumericalConsistencyError(f"{what} has imaginary part {value.imag:.3e}")
    p = value.real
    if not -PROBABILITY_SLACK <= p <= 1.0 + PROBABILITY_SLACK:
        raise NumericalConsistencyError(f"{what} = {p!r} lies outside [0, 1]")
    return min(max(p, 0.0), 1.0)


def outcome_probabilities(family: MeasurementFamily, rho: DensityOperator) -> np.ndarray:
    """Probabilities of every outcome, in family order."""
    _check_dims(family, rho)
    raw = np.einsum("ij,kji->k", rho.matrix, family.effects)
    return np.array([_as_probability(v, f"probability of {lab!r}") for v, lab in zip(raw, family.labels)])


def outcome_probability(family: MeasurementFamily, rho: DensityOperator, label) -> float:
    _check_dims(family, rho)
    effect = family.effects[family.index(label)]
    return _as_probability(complex(np.trace(rho.matrix @ effect)), f"probability of {label!r}")


def apply_outcome(family: MeasurementFamily, rho: DensityOperator, label) -> DensityOperator:
    """Post-measurement state conditioned on ``label``.

    Raises :class:`ImpossibleOutcomeError` when the outcome probability is
    at or below 1e-12.
    """
    p = outcome_probability(family, rho, label)
    if p <= IMPOSSIBLE_OUTCOME:
        raise ImpossibleOutcomeError(f"outcome {label!r} has probability {p:.3e} on this state")
    a = family.operator(label)
    return DensityOperator.from_unnormalized(a @ rho.matrix @ a.conj().T)


def check_completeness(family: MeasurementFamily, tol: float = DECLARED_COMPLETENESS_TOL) -> CompletenessReport:
    total = family.effects.sum(axis=0)
    dev = float(np.max(np.abs(total - np.eye(family.dim))))
    return CompletenessReport(max_deviation=dev, passed=dev <= tol, tol=tol)


def as_generator(seed) -> np.random.Generator:
    """Accept an int seed, a ``SeedSequence`` or an existing generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    if seed is None:
        raise ValidationError("an explicit seed is required")
    return np.random.default_rng(seed)


def sampling_distribution(
    family: MeasurementFamily, rho: DensityOperator, completeness_tol: float = 1e-6
) -> np.ndarray:
    """Outcome probabilities renormalized by their sum, ready for sampling."""
    report = check_completeness(family, completeness_tol)
    if not report.passed:
        raise ValidationError(
            f"family is incomplete (deviation {report.max_deviation:.3e} > {completeness_tol:g}); "
            "pass a looser completeness_tol to sample anyway"
        )
    probs = outcome_probabilities(family, rho)
    total = probs.sum()
    if np.all(probs < IMPOSSIBLE_OUTCOME):
        raise DegenerateFamilyError("every outcome has probability below 1e-12")
    if total != 1.0:
        log.debug("renormalizing outcome probabilities by factor %.17g", 1.0 / total)
    return probs / total


def sample_outcome(
    family: MeasurementFamily, rho: DensityOperator, seed, completeness_tol: float = 1e-6
) -> OutcomeRecord:
    rng = as_generator(seed)
    probs = sampling_distribution(family, rho, completeness_tol)
    k = int(rng.choice(len(probs), p=probs))
    label = family.labels[k]
    return OutcomeRecord(label=label, probability=float(probs[k]), post_state=apply_outcome(family, rho, label))


def sample_outcomes(
    family: MeasurementFamily,
    rho: DensityOperator,
    n_samples: int,
    seed,
    completeness_tol: float = 1e-6,
) -> np.ndarray:
    """Draw ``n_samples`` independent outcome indices (not labels)."""
    rng = as_generator(seed)
    probs = sampling_distribution(family, rho, completeness_tol)
    return rng.choice(len(probs), size=int(n_samples), p=probs)


def projective_family(projectors: Sequence[np.ndarray], labels: Sequence | None = None, **kwargs) -> MeasurementFamily:
    labels = list(range(len(projectors))) if labels is None else list(labels)
    return MeasurementFamily(tuple(zip(labels, projectors)), **kwargs)

"""Photon counting: the no-count and one-count processes.

The detector coupling ``lambda`` and the interval ``tau`` only ever enter
as the dimensionless product ``lambda_tau``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ImpossibleOutcomeError, TruncationError, UnderflowError, ValidationError
from .measurement import IMPOSSIBLE_OUTCOME, MeasurementFamily
from .operator_core import DensityOperator, fock_operators

# exp(+lambda_tau * n / 2) is applied on both sides in the inverse map.
INVERSE_EXPONENT_CAP = 1400.0
UNDERFLOW_TRACE = 1e-300


@dataclass(frozen=True)
class NoCountParams:
    lambda_tau: float

    def __post_init__(self):
        lt = float(self.lambda_tau)
        if not math.isfinite(lt) or lt < 0:
            raise ValidationError(f"lambda_tau must be finite and >= 0, got {self.lambda_tau!r}")
        object.__setattr__(self, "lambda_tau", lt)


def _params(p) -> NoCountParams:
    return p if isinstance(p, NoCountParams) else NoCountParams(p)


def _require_fock(rho: DensityOperator) -> None:
    if rho.dim < 2:
        raise ValidationError("photon counting needs a Fock truncation of dim >= 2")


def no_count_operator(lambda_tau: float, dim: int) -> np.ndarray:
    """``exp(-(lambda_tau / 2) n)`` on ``dim`` Fock levels."""
    lt = _params(lambda_tau).lambda_tau
    return np.diag(np.exp(-0.5 * lt * np.arange(dim, dtype=float))).astype(np.complex128)


def _scale_diagonal(rho: np.ndarray, weights: np.ndarray) -> np.ndarray:
    # D rho D for diagonal D, entrywise.
    return rho * np.outer(weights, weights)


def no_count_evolve(rho: DensityOperator, p) -> DensityOperator:
    """State after an interval with no detection."""
    _require_fock(rho)
    lt = _params(p).lambda_tau
    half = np.exp(-0.5 * lt * np.arange(rho.dim, dtype=float))
    out = _scale_diagonal(rho.matrix, half)
    norm = float(np.trace(out).real)
    if norm <= UNDERFLOW_TRACE:
        raise UnderflowError(
            f"tr[rho exp(-lambda_tau n)] = {norm:.3e}: state has negligible low-photon support"
        )
    return DensityOperator.from_unnormalized(out)


def no_count_invert(rho_after: DensityOperator, p) -> DensityOperator:
    """Recover the pre-interval state from the post-interval state.

    Exact left inverse of :func:`no_count_evolve`.  Refuses when
    ``lambda_tau * (dim - 1)`` exceeds 1400, where the growing exponentials
    would overflow double precision.
    """
    _require_fock(rho_after)
    lt = _params(p).lambda_tau
    if lt * (rho_after.dim - 1) > INVERSE_EXPONENT_CAP:
        raise TruncationError(
            f"lambda_tau*(dim-1) = {lt * (rho_after.dim - 1):.6g} exceeds {INVERSE_EXPONENT_CAP:g}; "
            "truncation too aggressive for an exact inverse"
        )
    half = np.exp(0.5 * lt * np.arange(rho_after.dim, dtype=float))
    return DensityOperator.from_unnormalized(_scale_diagonal(rho_after.matrix, half))


def one_count_apply(rho: DensityOperator) -> DensityOperator:
    """State right after a single detection, ``a rho a^dag / tr[rho a^dag a]``."""
    _require_fock(rho)
    a, _, number = fock_operators(rho.dim)
    mean_n = float(np.trace(rho.matrix @ number).real)
    if mean_n <= IMPOSSIBLE_OUTCOME:
        raise ImpossibleOutcomeError(
            f"tr[rho a^dag a] = {mean_n:.3e}: the detector cannot fire on the vacuum"
        )
    return DensityOperator.from_unnormalized(a @ rho.matrix @ a.conj().T)


def counting_pair(lambda_tau: float, dim: int) -> MeasurementFamily:
    """Two-outcome family ``{count: sqrt(lambda_tau) a, nocount: exp(-lambda_tau n / 2)}``.

    Complete only to first order in ``lambda_tau``; no range restriction.
    """
    lt = _params(lambda_tau).lambda_tau
    a, _, _ = fock_operators(dim)
    return MeasurementFamily(
        (("count", math.sqrt(lt) * a), ("nocount", no_count_operator(lt, dim))),
        name=f"photon counting, lambda_tau={lt:g}",
        metadata={"lambda_tau": lt},
    )


def infinitesimal_family(lambda_dt: float, dim: int) -> MeasurementFamily:
    """Single time-step family for trajectory simulation.

    The completeness deficit is left in place and reported as
    ``metadata["completeness_deviation"]`` (max-norm of ``sum A^dag A - 1``,
    bounded by ``(lambda_dt * (dim - 1))**2 / 2``).
    """
    if not 0 < lambda_dt <= 0.01:
        raise ValidationError(f"lambda_dt must lie in (0, 0.01], got {lambda_dt!r}")
    fam = counting_pair(lambda_dt, dim)
    n = np.arange(dim, dtype=float)
    # sum A^dag A is diagonal: lambda_dt*n + exp(-lambda_dt*n)
    fam.metadata["completeness_deviation"] = float(
        np.max(np.abs(lambda_dt * n + np.exp(-lambda_dt * n) - 1.0))
    )
    return fam


def completeness_bound(lambda_dt: float, dim: int) -> float:
    return (lambda_dt * (dim - 1)) ** 2 / 2

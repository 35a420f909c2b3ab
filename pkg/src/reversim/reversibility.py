"""Logical reversibility of measurement operators.

An outcome with operator ``A`` is logically reversible when the state map
``rho -> A rho A^dag / tr[...]`` is one-to-one, which holds exactly when
``A`` annihilates no nonzero vector, i.e. has a left inverse.  On a finite
space this is decided by the smallest singular value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate

from .errors import GridConfigurationError, NotInvertibleError, NumericalConsistencyError, ValidationError
from .kerr_qnd import (
    DEFAULT_MARGIN_SIGMAS,
    DEFAULT_SPACING_FRACTION,
    MAX_SPACING_FRACTION,
    MIN_MARGIN_SIGMAS,
    uniform_grid,
    log_gaussian_coefficient,
)
from .measurement import MeasurementFamily, check_completeness
from .operator_core import DensityOperator, as_square

DEFAULT_THRESHOLD = 1e-10
LEFT_INVERSE_TOL = 1e-8
GROWTH_TOL = 0.05


@dataclass(frozen=True)
class ReversibilityVerdict:
    reversible: bool
    sigma_min: float
    condition_number: float
    threshold: float
    notes: str = ""
    log_sigma_min: float | None = None
    method: str = "svd"

    def to_dict(self) -> dict:
        return {
            "reversible": self.reversible,
            "sigma_min": self.sigma_min,
            "log_sigma_min": self.log_sigma_min,
            "condition_number": self.condition_number,
            "threshold": self.threshold,
            "method": self.method,
            "notes": self.notes,
        }


def is_logically_reversible(a, threshold: float = DEFAULT_THRESHOLD) -> ReversibilityVerdict:
    """Decide reversibility from the SVD: reversible iff ``sigma_min > threshold``."""
    a = as_square(a, "measurement operator")
    s = np.linalg.svd(a, compute_uv=False)
    smin, smax = float(s[-1]), float(s[0])
    cond = smax / smin if smin > 0 else math.inf
    reversible = smin > threshold
    if reversible:
        notes = f"sigma_min {smin:.6g} > threshold {threshold:g}: left inverse exists"
    else:
        notes = f"sigma_min {smin:.6g} <= threshold {threshold:g}: operator annihilates (near-)nonzero vectors"
    return ReversibilityVerdict(
        reversible=reversible,
        sigma_min=smin,
        condition_number=cond,
        threshold=threshold,
        notes=notes,
        log_sigma_min=math.log(smin) if smin > 0 else -math.inf,
    )


def spectral_verdict(log_singular_values, threshold: float = DEFAULT_THRESHOLD) -> ReversibilityVerdict:
    """Verdict for an operator known through the logs of its singular values.

    This is the exact nonvanishing test: the operator is reversible iff
    every singular value is nonzero (every log is finite), regardless of
    whether ``exp`` of it is representable.  ``sigma_min`` is reported as
    a float (possibly underflowed to 0); ``notes`` says whether it also
    clears ``threshold`` numerically.
    """
    logs = np.asarray(log_singular_values, dtype=float)
    lo, hi = float(np.min(logs)), float(np.max(logs))
    reversible = bool(np.all(np.isfinite(logs)) and lo > -math.inf)
    smin = math.exp(lo) if reversible else 0.0
    cond = math.exp(hi - lo) if reversible and hi - lo < 709 else math.inf
    resolvable = smin > threshold
    notes = (
        f"exact: all singular values nonzero (log sigma_min = {lo:.6g}); "
        + ("numerically resolvable" if resolvable else f"sigma_min below numerical threshold {threshold:g}")
        if reversible
        else "exact: a singular value vanishes"
    )
    return ReversibilityVerdict(
        reversible=reversible,
        sigma_min=smin,
        condition_number=cond,
        threshold=threshold,
        notes=notes,
        log_sigma_min=lo,
        method="exact-spectral",
    )


def family_verdicts(family: MeasurementFamily, threshold: float = DEFAULT_THRESHOLD) -> list[ReversibilityVerdict]:
    """Per-outcome verdicts.

    Families that carry ``metadata["log_singular_values"]`` (the Kerr and
    unsharpened families) are judged exactly from those; the rest by SVD.
    """
    logs = family.metadata.get("log_singular_values")
    if logs is not None:
        return [spectral_verdict(row, threshold) for row in logs]
    return [is_logically_reversible(op, threshold) for op in family.operators]


def _is_diagonal(a: np.ndarray) -> bool:
    return not np.any(a - np.diag(np.diag(a)))


def left_inverse(a, threshold: float = DEFAULT_THRESHOLD) -> np.ndarray:
    """Left inverse ``B`` with ``B A = 1``.

    Diagonal operators are inverted entrywise; otherwise the inverse is
    assembled from the SVD.  Raises :class:`NotInvertibleError` if
    ``sigma_min <= threshold``.
    """
    a = as_square(a, "measurement operator")
    verdict = is_logically_reversible(a, threshold)
    if not verdict.reversible:
        raise NotInvertibleError(f"no left inverse: {verdict.notes}")
    if _is_diagonal(a):
        b = np.diag(1.0 / np.diag(a))
    else:
        u, s, vh = np.linalg.svd(a)
        b = (vh.conj().T / s) @ u.conj().T
    residual = float(np.max(np.abs(b @ a - np.eye(a.shape[0]))))
    if residual > LEFT_INVERSE_TOL:
        raise NumericalConsistencyError(
            f"left inverse residual {residual:.3e} exceeds {LEFT_INVERSE_TOL:g} "
            f"(condition number {verdict.condition_number:.3e})"
        )
    return b


def _check_projectors(projectors: MeasurementFamily, tol: float = 1e-10) -> list[int]:
    labels = projectors.labels
    for lab in labels:
        if isinstance(lab, bool) or not isinstance(lab, (int, float, np.integer, np.floating)) or not float(lab).is_integer():
            raise ValidationError(f"projector labels must be integer eigenvalues, got {lab!r}")
    ops = projectors.operators
    dim = projectors.dim
    for i, p in enumerate(ops):
        if np.max(np.abs(p - p.conj().T)) > tol or np.max(np.abs(p @ p - p)) > tol:
            raise ValidationError(f"operator {labels[i]!r} is not an orthogonal projector")
        if np.trace(p).real < 0.5:
            raise ValidationError(f"projector {labels[i]!r} is zero")
        for j in range(i):
            if np.max(np.abs(p @ ops[j])) > tol:
                raise ValidationError(f"projectors {labels[j]!r} and {labels[i]!r} are not orthogonal")
    if np.max(np.abs(ops.sum(axis=0) - np.eye(dim))) > tol:
        raise ValidationError("projectors do not sum to the identity")
    return [int(round(float(lab))) for lab in labels]


def unsharp_operator(projectors: MeasurementFamily, epsilon: float, nu: float) -> np.ndarray:
    """``sum_m sqrt(C_m(nu, eps)) P_m`` (unweighted, continuous outcome ``nu``)."""
    eig = _check_projectors(projectors)
    w = np.exp(0.5 * log_gaussian_coefficient(np.array(eig), nu, epsilon))
    return np.einsum("m,mij->ij", w, projectors.operators)


def unsharpen_sharp_family(
    projectors: MeasurementFamily,
    epsilon: float,
    margin_sigmas: float = DEFAULT_MARGIN_SIGMAS,
    spacing_fraction: float = DEFAULT_SPACING_FRACTION,
) -> MeasurementFamily:
    """Replace a sharp measurement by a Gaussian-blurred, logically reversible one.

    ``projectors`` is a complete family of orthogonal projectors labeled by
    integer eigenvalues ``m``.  The result has one outcome per grid point
    ``nu_k`` with operator ``sqrt(dnu) sum_m sqrt(C_m(nu_k, eps)) P_m``.
    As ``epsilon -> 0`` its outcome statistics concentrate on the sharp ones.
    """
    eig = _check_projectors(projectors)
    if not epsilon > 0:
        raise ValidationError(f"epsilon must be > 0, got {epsilon!r}")
    if margin_sigmas < MIN_MARGIN_SIGMAS:
        raise GridConfigurationError(f"margin {margin_sigmas:g} epsilon < 5 epsilon")
    if spacing_fraction > MAX_SPACING_FRACTION:
        raise GridConfigurationError(f"spacing {spacing_fraction:g} epsilon > epsilon/2")
    margin = margin_sigmas * epsilon
    dnu = spacing_fraction * epsilon
    grid = uniform_grid(min(eig) - margin, max(eig) + margin, dnu)
    logw = 0.5 * log_gaussian_coefficient(np.array(eig)[None, :], grid[:, None], epsilon) + 0.5 * math.log(dnu)
    ops = np.einsum("km,mij->kij", np.exp(logw), projectors.operators)
    fam = MeasurementFamily(
        tuple(zip((float(v) for v in grid), ops)),
        name=f"unsharpened {projectors.name or 'sharp measurement'}, epsilon={epsilon:g}",
        metadata={
            "epsilon": epsilon,
            "spacing": dnu,
            "eigenvalues": eig,
            # each P_m is nonzero, so these are exactly the distinct singular values
            "log_singular_values": logw,
        },
    )
    fam.metadata["completeness_deviation"] = check_completeness(fam).max_deviation
    return fam


def unsharp_rounding_probability(
    projectors: MeasurementFamily, epsilon: float, rho: DensityOperator, m: int
) -> float:
    """Probability that the continuous estimate lies within 1/2 of ``m``."""
    eig = _check_projectors(projectors)
    weights = np.einsum("ij,mji->m", rho.matrix, projectors.operators).real

    def density(nu):
        c = np.exp(log_gaussian_coefficient(np.array(eig), nu, epsilon))
        return float(np.dot(weights, c))

    value, _ = integrate.quad(density, m - 0.5, m + 0.5, points=[m], epsabs=1e-14, epsrel=1e-12, limit=200)
    return value


@dataclass(frozen=True)
class BoundednessReport:
    dims: list
    sigma_min: list
    inverse_norm: list
    ratios: list
    classification: str
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "dims": self.dims,
            "sigma_min": self.sigma_min,
            "inverse_norm": self.inverse_norm,
            "ratios": self.ratios,
            "classification": self.classification,
            "notes": self.notes,
        }


def boundedness_probe(operator_builder: Callable[[int], np.ndarray], dims: Sequence[int]) -> BoundednessReport:
    """Watch how the left inverse's norm ``1/sigma_min`` grows with truncation.

    ``bounded`` if the last successive ratio is within 5% of 1;
    ``unbounded`` if the norms never decrease and the last step grows by
    more than 5%; otherwise ``indeterminate``.  This only exhibits growth
    over finite truncations, it cannot prove unboundedness.
    """
    dims = [int(d) for d in dims]
    if len(dims) < 3 or any(b <= a for a, b in zip(dims, dims[1:])):
        raise ValidationError("need at least 3 strictly increasing dims")
    smins, norms, notes = [], [], []
    for d in dims:
        try:
            op = as_square(operator_builder(d))
        except Exception as exc:
            raise ValidationError(f"operator builder failed at dim {d}: {exc}") from exc
        s = float(np.linalg.svd(op, compute_uv=False)[-1])
        smins.append(s)
        norms.append(1.0 / s if s > 0 else math.inf)
        if s == 0:
            notes.append(f"dim {d}: sigma_min is 0 in double precision (inverse norm infinite)")
    ratios = []
    for x, y in zip(norms, norms[1:]):
        if math.isinf(y):
            ratios.append(math.inf)
        else:
            ratios.append(y / x)
    last = ratios[-1]
    monotone = all(r >= 1.0 for r in ratios)
    if abs(last - 1.0) <= GROWTH_TOL:
        cls = "bounded"
    elif monotone and last > 1.0 + GROWTH_TOL:
        cls = "unbounded"
    else:
        cls = "indeterminate"
    return BoundednessReport(dims, smins, norms, ratios, cls, notes)

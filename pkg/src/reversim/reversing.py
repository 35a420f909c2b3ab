"""Reversing measurements.

After outcome ``A`` has been observed, a second two-outcome measurement
``{R0, Rc}`` can undo it: if ``R0 A = c 1`` then the success outcome ``R0``
maps the post-measurement state back to the original one.  The joint
probability of observing ``A`` and then succeeding is ``|c|^2`` for every
input state, so the procedure reveals nothing about that state.

``R0`` must have operator norm at most one for ``{R0, Rc}`` to be a
measurement, which caps ``|c|`` at ``sigma_min(A)``.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    ImpossibleOutcomeError,
    NormViolationError,
    NotInvertibleError,
    PlanMismatchError,
    TruncationError,
    ValidationError,
)
from .kerr_qnd import KerrModel, UNDERFLOW_FLOOR, kerr_operator, log_kerr_diagonal
from .measurement import IMPOSSIBLE_OUTCOME
from .operator_core import DensityOperator, as_square, fidelity, operator_norm, psd_sqrt
from .reversibility import DEFAULT_THRESHOLD, is_logically_reversible, left_inverse

PLAN_TOL = 1e-8
NORM_SLACK = 1e-12
RECOVERY_FIDELITY_TOL = 1e-9
SUCCESS_FLOOR = 1e-300


def operator_hash(a) -> str:
    """Content hash of an operator (shape and exact complex128 bytes)."""
    arr = np.ascontiguousarray(np.asarray(a, dtype=np.complex128))
    h = hashlib.sha256(repr(arr.shape).encode())
    h.update(arr.tobytes())
    return h.hexdigest()


def _frozen(m: np.ndarray) -> np.ndarray:
    m = np.array(m, dtype=np.complex128, copy=True)
    m.setflags(write=False)
    return m


@dataclass(frozen=True, eq=False)
class ReversalPlan:
    """Success/failure pair ``{R0, Rc}`` built for one measurement operator.

    ``support_dim`` is ``None`` for an exact plan (``R0 A = c 1``) and
    ``N + 1`` for a truncated plan, where ``R0 A = c P_N`` with ``P_N`` the
    projector on Fock levels ``0..N``.
    """

    dim: int
    r_success: np.ndarray
    r_complement: np.ndarray
    c: complex
    success_probability: float
    source_hash: str
    support_dim: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "r_success", _frozen(self.r_success))
        object.__setattr__(self, "r_complement", _frozen(self.r_complement))

    @property
    def truncated(self) -> bool:
        return self.support_dim is not None

    def support_projector(self) -> np.ndarray:
        p = np.zeros((self.dim, self.dim), dtype=np.complex128)
        k = self.dim if self.support_dim is None else self.support_dim
        p[np.arange(k), np.arange(k)] = 1.0
        return p

    def completeness_deviation(self) -> float:
        r0, rc = self.r_success, self.r_complement
        total = r0.conj().T @ r0 + rc.conj().T @ rc
        return float(np.max(np.abs(total - np.eye(self.dim))))

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "c": complex(self.c),
            "success_probability": self.success_probability,
            "r_success_norm": operator_norm(self.r_success),
            "completeness_deviation": self.completeness_deviation(),
            "support_dim": self.support_dim,
            "source_hash": self.source_hash,
        }


def _complement(r0: np.ndarray) -> np.ndarray:
    dim = r0.shape[0]
    return psd_sqrt(np.eye(dim) - r0.conj().T @ r0)


def build_reversal(a, scale="optimal", threshold: float = DEFAULT_THRESHOLD) -> ReversalPlan:
    """Construct ``R0 = c A^{-1}`` and its complement.

    ``scale="optimal"`` picks ``c = sigma_min(A)``, the largest ``|c|`` for
    which ``||R0|| <= 1``; the success probability ``sigma_min(A)**2`` is
    then maximal.  An explicit complex ``c`` with ``|c| > sigma_min(A)`` is
    rejected with :class:`NormViolationError`.
    """
    a = as_square(a, "measurement operator")
    verdict = is_logically_reversible(a, threshold)
    if not verdict.reversible:
        raise NotInvertibleError(f"outcome is logically irreversible: {verdict.notes}")
    b = left_inverse(a, threshold)
    smin = verdict.sigma_min
    if isinstance(scale, str):
        if scale != "optimal":
            raise ValidationError(f"scale must be 'optimal' or a number, got {scale!r}")
        c = complex(smin)
    else:
        c = complex(scale)
        if c == 0 or not math.isfinite(abs(c)):
            raise ValidationError(f"c must be nonzero and finite, got {scale!r}")
        if abs(c) > smin * (1 + NORM_SLACK):
            raise NormViolationError(
                f"|c| = {abs(c):.17g} exceeds sigma_min(A) = {smin:.17g}; ||R0|| would exceed 1"
            )
    r0 = c * b
    return ReversalPlan(
        dim=a.shape[0],
        r_success=r0,
        r_complement=_complement(r0),
        c=c,
        success_probability=abs(c) ** 2,
        source_hash=operator_hash(a),
    )


@dataclass(frozen=True, eq=False)
class ReversalCheck:
    fidelity: float
    outcome_probability: float
    success_probability: float
    joint_probability: float
    analytic_joint_probability: float
    out_of_support_mass: float
    recovered: DensityOperator
    passed: bool

    def to_dict(self) -> dict:
        return {
            "fidelity": self.fidelity,
            "outcome_probability": self.outcome_probability,
            "success_probability": self.success_probability,
            "joint_probability": self.joint_probability,
            "analytic_joint_probability": self.analytic_joint_probability,
            "out_of_support_mass": self.out_of_support_mass,
            "passed": self.passed,
        }


def _check_plan(a: np.ndarray, plan: ReversalPlan) -> None:
    if operator_hash(a) != plan.source_hash:
        raise PlanMismatchError("reversal plan was built for a different operator")


def _expectation(rho: np.ndarray, effect: np.ndarray) -> float:
    return float(np.real(np.trace(rho @ effect)))


def verify_reversal(rho: DensityOperator, a, plan: ReversalPlan) -> ReversalCheck:
    """Measure ``A`` on ``rho``, then apply the success branch of ``plan``.

    ``passed`` is true when the recovered state has fidelity at least
    ``1 - 1e-9`` with ``rho``.  For truncated plans, ``out_of_support_mass``
    is the weight of ``rho`` above the cutoff, which the plan cannot restore.
    """
    a = as_square(a, "measurement operator")
    _check_plan(a, plan)
    if rho.dim != plan.dim:
        raise ValidationError(f"state dim {rho.dim} != plan dim {plan.dim}")
    m = rho.matrix
    p_a = _expectation(m, a.conj().T @ a)
    if p_a <= IMPOSSIBLE_OUTCOME:
        raise ImpossibleOutcomeError(f"measurement outcome has probability {p_a:.3e} on this state")
    after = DensityOperator.from_unnormalized(a @ m @ a.conj().T)
    r0 = plan.r_success
    q = _expectation(after.matrix, r0.conj().T @ r0)
    # |c|^2 may legitimately be tiny; only a vanishing normalization is fatal.
    if not q > SUCCESS_FLOOR:
        raise ImpossibleOutcomeError(f"successful reversal has probability {q:.3e} on this state")
    recovered = DensityOperator.from_unnormalized(r0 @ after.matrix @ r0.conj().T)
    f = fidelity(recovered, rho)
    proj = plan.support_projector()
    outside = max(0.0, 1.0 - _expectation(m, proj))
    return ReversalCheck(
        fidelity=f,
        outcome_probability=p_a,
        success_probability=q,
        joint_probability=p_a * q,
        analytic_joint_probability=plan.success_probability,
        out_of_support_mass=outside,
        recovered=recovered,
        passed=f >= 1.0 - RECOVERY_FIDELITY_TOL,
    )


def joint_success_probability(rho: DensityOperator, a, plan: ReversalPlan) -> tuple[float, float]:
    """``(|c|^2, tr[rho (R0 A)^dag (R0 A)])``; equal for every state in the plan's support."""
    a = as_square(a, "measurement operator")
    _check_plan(a, plan)
    ra = plan.r_success @ a
    computed = _expectation(rho.matrix, ra.conj().T @ ra)
    return plan.success_probability, computed


def truncated_source_operator(model: KerrModel, nu: float, weight: float = 1.0) -> np.ndarray:
    """The operator ``sqrt(weight) A(nu, eps)`` a truncated plan is built for."""
    a = kerr_operator(model, nu)
    return a if weight == 1.0 else math.sqrt(weight) * a


def _truncated_plan(a: np.ndarray, logs: np.ndarray, n_max: int, gamma) -> ReversalPlan:
    # logs: log|a_nn| for n <= n_max
    dim = a.shape[0]
    inv = np.zeros(dim, dtype=np.complex128)
    diag = np.diag(a)[: n_max + 1]
    inv[: n_max + 1] = np.exp(-logs) * np.exp(-1j * np.angle(diag))
    b_prime = np.diag(inv)
    gamma_max = math.exp(float(np.min(logs)))
    if isinstance(gamma, str):
        if gamma != "optimal":
            raise ValidationError(f"gamma must be 'optimal' or a number, got {gamma!r}")
        g = complex(gamma_max)
    else:
        g = complex(gamma)
        if g == 0 or not math.isfinite(abs(g)):
            raise ValidationError("gamma must be nonzero and finite")
        if abs(g) > gamma_max * (1 + NORM_SLACK):
            raise NormViolationError(f"|gamma| = {abs(g):.17g} exceeds 1/||B'|| = {gamma_max:.17g}")
    success = abs(g) ** 2
    if success > 1.0:
        raise ValidationError(
            f"|gamma|^2 = {success:.6g} > 1: the operator's effect exceeds the identity (pass a weight)"
        )
    r0 = g * b_prime
    return ReversalPlan(
        dim=dim,
        r_success=r0,
        r_complement=_complement(r0),
        c=g,
        success_probability=success,
        source_hash=operator_hash(a),
        support_dim=n_max + 1,
    )


def _check_cutoff(truncate_at, dim: int) -> int:
    n_max = int(truncate_at)
    if n_max != truncate_at or not 0 <= n_max <= dim - 1:
        raise TruncationError(f"truncate_at must be an integer in [0, {dim - 1}], got {truncate_at!r}")
    return n_max


def build_truncated_diagonal_reversal(a, truncate_at: int, gamma="optimal") -> ReversalPlan:
    """Truncated reversal for any operator diagonal in the Fock basis."""
    a = as_square(a, "measurement operator")
    if np.any(a - np.diag(np.diag(a))):
        raise ValidationError("truncated reversal needs an operator diagonal in the Fock basis")
    n_max = _check_cutoff(truncate_at, a.shape[0])
    mags = np.abs(np.diag(a))[: n_max + 1]
    if np.any(mags <= 0):
        raise NotInvertibleError(f"operator has a zero diagonal entry at n <= {n_max}")
    return _truncated_plan(a, np.log(mags), n_max, gamma)


def build_truncated_reversal(
    model: KerrModel,
    nu: float,
    truncate_at: int,
    gamma="optimal",
    weight: float = 1.0,
) -> ReversalPlan:
    """Approximate reversal of a Kerr outcome using the inverse cut off at ``truncate_at``.

    ``B' = sum_{n <= N} C_n^{-1/2} |n><n|`` and the plan is
    ``{gamma B', sqrt(1 - |gamma|^2 B'^dag B')}``.  The optimal ``|gamma|`` is
    ``1 / ||B'|| = min_{n <= N} sqrt(C_n)``.  ``weight`` rescales the Kerr
    operator (pass the grid spacing to reverse a discretized outcome).
    Build the matching source operator with :func:`truncated_source_operator`.
    """
    n_max = _check_cutoff(truncate_at, model.dim)
    logs = log_kerr_diagonal(model, nu, weight)[: n_max + 1]
    if np.any(2 * logs < math.log(UNDERFLOW_FLOOR)):
        raise TruncationError(f"coefficients below the 1e-300 floor for n <= {n_max}; lower truncate_at")
    return _truncated_plan(truncated_source_operator(model, nu, weight), logs, n_max, gamma)

"""Unsharp Kerr QND measurement of photon number.

For an estimated photon number ``nu`` the measurement operator is diagonal
in the Fock basis, with entries ``sqrt(C_n(nu, eps))`` where ``C_n`` is a
normalized Gaussian in ``nu`` centred on ``n`` with width ``eps``.  The
width follows from the probe amplitude and Kerr coupling as
``eps = 1 / (2 sqrt(|alpha| kappa))``.

The continuous outcome ``nu`` is discretized on a uniform grid; each grid
point carries weight ``dnu`` so that ``sum_k dnu C_n(nu_k) ~ 1``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import integrate

from .errors import GridConfigurationError, ReversibilityMarginalWarning, UnderflowFloorWarning, ValidationError
from .measurement import MeasurementFamily, check_completeness

UNDERFLOW_FLOOR = 1e-300
MIN_MARGIN_SIGMAS = 5.0
MAX_SPACING_FRACTION = 0.5
DEFAULT_MARGIN_SIGMAS = 6.0
DEFAULT_SPACING_FRACTION = 0.25
_LOG_FLOOR = math.log(UNDERFLOW_FLOOR)


def log_gaussian_coefficient(n, nu, epsilon):
    """Natural log of ``C_n(nu, eps)``; finite for every finite input."""
    if not epsilon > 0:
        raise ValidationError(f"epsilon must be > 0, got {epsilon!r}")
    n = np.asarray(n, dtype=float)
    nu = np.asarray(nu, dtype=float)
    return -0.5 * math.log(2 * math.pi * epsilon * epsilon) - (n - nu) ** 2 / (2 * epsilon * epsilon)


def gaussian_coefficient(n: int, nu: float, epsilon: float) -> float:
    """Gaussian weight ``C_n(nu, eps)`` of Fock level ``n`` for estimate ``nu``.

    Mathematically always positive.  Values below 1e-300 raise an
    :class:`UnderflowFloorWarning` instead of being silently returned as 0.
    """
    logc = float(log_gaussian_coefficient(n, nu, epsilon))
    if logc < _LOG_FLOOR:
        warnings.warn(
            f"C_{n}({nu}, {epsilon}) = exp({logc:.6g}) is below the 1e-300 floor",
            UnderflowFloorWarning,
            stacklevel=2,
        )
    return math.exp(logc)


def coefficient_below_floor(n: int, nu: float, epsilon: float) -> bool:
    return float(log_gaussian_coefficient(n, nu, epsilon)) < _LOG_FLOOR


def uniform_grid(start: float, stop: float, spacing: float) -> np.ndarray:
    count = int(math.ceil((stop - start) / spacing - 1e-9)) + 1
    return start + spacing * np.arange(count)


@dataclass(frozen=True, eq=False)
class KerrModel:
    """Parameters of the Kerr QND measurement plus its outcome grid.

    ``alpha_abs`` is the probe amplitude modulus and ``kappa`` the effective
    coupling; together they fix ``epsilon``.  If ``grid`` is omitted it is
    generated from ``margin_sigmas`` and ``spacing_fraction`` (both in units
    of ``epsilon``) to cover ``[-margin, dim - 1 + margin]``.
    """

    alpha_abs: float
    kappa: float
    dim: int
    grid: np.ndarray | None = None
    margin_sigmas: float = DEFAULT_MARGIN_SIGMAS
    spacing_fraction: float = DEFAULT_SPACING_FRACTION
    epsilon: float = field(init=False)

    def __post_init__(self):
        if not (self.alpha_abs > 0 and math.isfinite(self.alpha_abs)):
            raise ValidationError(f"alpha_abs must be > 0, got {self.alpha_abs!r}")
        if not (self.kappa > 0 and math.isfinite(self.kappa)):
            raise ValidationError(f"kappa must be > 0, got {self.kappa!r}")
        if int(self.dim) != self.dim or self.dim < 1:
            raise ValidationError(f"dim must be a positive integer, got {self.dim!r}")
        object.__setattr__(self, "dim", int(self.dim))
        eps = 1.0 / (2.0 * math.sqrt(self.alpha_abs * self.kappa))
        object.__setattr__(self, "epsilon", eps)
        if self.grid is None:
            if not (self.margin_sigmas >= 0 and self.spacing_fraction > 0):
                raise GridConfigurationError("margin_sigmas must be >= 0 and spacing_fraction > 0")
            margin = self.margin_sigmas * eps
            grid = uniform_grid(-margin, self.dim - 1 + margin, self.spacing_fraction * eps)
        else:
            grid = np.asarray(self.grid, dtype=float)
            if grid.ndim != 1 or grid.size < 2:
                raise GridConfigurationError("grid needs at least two points")
            steps = np.diff(grid)
            if np.any(steps <= 0):
                raise GridConfigurationError("grid must be strictly increasing")
            if np.max(np.abs(steps - steps[0])) > 1e-12:
                raise GridConfigurationError("grid spacing must be uniform to 1e-12")
        grid = np.array(grid, dtype=float)
        grid.setflags(write=False)
        object.__setattr__(self, "grid", grid)

    @classmethod
    def from_epsilon(
        cls,
        epsilon: float,
        dim: int,
        kappa: float = 1.0,
        margin_sigmas: float = DEFAULT_MARGIN_SIGMAS,
        spacing_fraction: float = DEFAULT_SPACING_FRACTION,
    ) -> "KerrModel":
        """Build a model from the measurement error directly (``|alpha| kappa = 1/(4 eps^2)``)."""
        if not epsilon > 0:
            raise ValidationError(f"epsilon must be > 0, got {epsilon!r}")
        alpha_abs = 1.0 / (4.0 * epsilon * epsilon * kappa)
        return cls(alpha_abs, kappa, dim, margin_sigmas=margin_sigmas, spacing_fraction=spacing_fraction)

    @property
    def spacing(self) -> float:
        return float(self.grid[1] - self.grid[0])

    def margins(self) -> tuple[float, float]:
        """Grid extent beyond ``0`` on the left and ``dim - 1`` on the right."""
        return float(-self.grid[0]), float(self.grid[-1] - (self.dim - 1))


def log_kerr_diagonal(model: KerrModel, nu: float, weight: float = 1.0) -> np.ndarray:
    """Logs of the diagonal entries of ``sqrt(weight) * A(nu, eps)``.

    Exact where the dense matrix would underflow; used for certifying
    reversibility of operators whose entries leave double range.
    """
    n = np.arange(model.dim)
    return 0.5 * log_gaussian_coefficient(n, nu, model.epsilon) + 0.5 * math.log(weight)


def kerr_operator(model: KerrModel, nu: float) -> np.ndarray:
    """Diagonal measurement operator ``sum_n sqrt(C_n(nu, eps)) |n><n|``."""
    logc = 2.0 * log_kerr_diagonal(model, nu)
    if np.any(logc < _LOG_FLOOR):
        low = int(np.argmin(logc))
        warnings.warn(
            f"A({nu}, {model.epsilon:g}) has coefficients below 1e-300 (e.g. n={low}); "
            "it is logically reversible but not numerically resolvable",
            ReversibilityMarginalWarning,
            stacklevel=2,
        )
    return np.diag(np.exp(0.5 * logc)).astype(np.complex128)


def grid_violations(model: KerrModel) -> list[str]:
    """Names of the grid rules the model breaks (empty if none)."""
    eps = model.epsilon
    problems = []
    lo, hi = model.margins()
    need = MIN_MARGIN_SIGMAS * eps
    if lo < need - 1e-12:
        problems.append(f"left margin {lo:.6g} < 5*epsilon = {need:.6g}")
    if hi < need - 1e-12:
        problems.append(f"right margin {hi:.6g} < 5*epsilon = {need:.6g}")
    if model.spacing > MAX_SPACING_FRACTION * eps + 1e-12:
        problems.append(f"spacing {model.spacing:.6g} > epsilon/2 = {eps / 2:.6g}")
    return problems


def discretized_family(model: KerrModel) -> MeasurementFamily:
    """Finite family ``{sqrt(dnu) A(nu_k, eps)}`` over the model grid.

    Labels are the grid values ``nu_k`` (floats).  The completeness
    deviation is stored in ``metadata["completeness_deviation"]`` and
    labels whose operators have entries below the underflow floor in
    ``metadata["marginal_labels"]``.
    """
    problems = grid_violations(model)
    if problems:
        raise GridConfigurationError("; ".join(problems))
    dnu = model.spacing
    n = np.arange(model.dim)
    logc = log_gaussian_coefficient(n[None, :], model.grid[:, None], model.epsilon)
    diag = np.sqrt(dnu) * np.exp(0.5 * logc)
    ops = np.zeros((len(model.grid), model.dim, model.dim), dtype=np.complex128)
    ops[:, n, n] = diag
    marginal = [float(nu) for nu, row in zip(model.grid, logc) if np.any(row < _LOG_FLOOR)]
    fam = MeasurementFamily(
        tuple(zip((float(v) for v in model.grid), ops)),
        name=f"Kerr QND, epsilon={model.epsilon:g}, dim={model.dim}",
        metadata={
            "epsilon": model.epsilon,
            "spacing": dnu,
            "marginal_labels": marginal,
            "log_singular_values": 0.5 * logc + 0.5 * math.log(dnu),
        },
    )
    fam.metadata["completeness_deviation"] = check_completeness(fam).max_deviation
    if marginal:
        warnings.warn(
            f"{len(marginal)} of {len(model.grid)} outcomes have coefficients below 1e-300",
            ReversibilityMarginalWarning,
            stacklevel=2,
        )
    return fam


def rounding_probability(model: KerrModel, n: int) -> float:
    """Probability that the estimate ``nu`` lands within 1/2 of ``n`` for input ``|n>``.

    Integrates the continuous outcome density ``<n|A(nu)^dag A(nu)|n>``
    over ``[n - 1/2, n + 1/2]`` by adaptive quadrature.
    """
    if not 0 <= n < model.dim:
        raise ValidationError(f"n = {n} outside truncation dim {model.dim}")

    def density(nu):
        return math.exp(2.0 * log_kerr_diagonal(model, nu)[n])

    value, _ = integrate.quad(density, n - 0.5, n + 0.5, points=[n], epsabs=1e-14, epsrel=1e-12, limit=200)
    return value


def sharp_limit_distribution(models: Sequence[KerrModel], n: int) -> list[tuple[float, float]]:
    """``(epsilon, rounding probability)`` for each model, in the given order.

    The models must be ordered by strictly decreasing epsilon.
    """
    eps = [m.epsilon for m in models]
    if any(b >= a for a, b in zip(eps, eps[1:])):
        raise ValidationError("models must be ordered by strictly decreasing epsilon")
    return [(m.epsilon, rounding_probability(m, n)) for m in models]

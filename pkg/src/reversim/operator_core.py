"""Dense complex-matrix primitives: states, Fock ladder operators, distances.

Everything here works on plain ``numpy`` arrays of dtype ``complex128``.
The truncation dimension of the Fock space is always an explicit argument.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .errors import NotPSDError, ValidationError

HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-12
PSD_TOL = 1e-10
NORM_TOL = 1e-12


def as_matrix(m, name: str = "matrix") -> np.ndarray:
    """Coerce ``m`` to a 2-D complex array with at least one row and column."""
    arr = np.asarray(m, dtype=np.complex128)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValidationError(f"{name} must be a non-empty 2-D array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} has non-finite entries")
    return arr


def as_square(m, name: str = "matrix") -> np.ndarray:
    arr = as_matrix(m, name)
    if arr.shape[0] != arr.shape[1]:
        raise ValidationError(f"{name} must be square, got shape {arr.shape}")
    return arr


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=np.complex128, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class PureState:
    """Unit-norm state vector on a ``dim``-dimensional space."""

    amplitudes: np.ndarray

    def __post_init__(self):
        vec = np.asarray(self.amplitudes, dtype=np.complex128)
        if vec.ndim != 1 or vec.size < 1:
            raise ValidationError("amplitudes must be a non-empty 1-D array")
        norm2 = float(np.vdot(vec, vec).real)
        if abs(norm2 - 1.0) > NORM_TOL:
            raise ValidationError(f"state is not normalized: sum |amp|^2 = {norm2!r}")
        object.__setattr__(self, "amplitudes", _frozen(vec))

    @classmethod
    def normalized(cls, vec) -> "PureState":
        vec = np.asarray(vec, dtype=np.complex128)
        norm = np.linalg.norm(vec)
        if norm == 0:
            raise ValidationError("cannot normalize the zero vector")
        return cls(vec / norm)

    @property
    def dim(self) -> int:
        return self.amplitudes.shape[0]


@dataclass(frozen=True, eq=False)
class DensityOperator:
    """Hermitian, unit-trace, positive semidefinite ``dim x dim`` matrix.

    Construction validates all three properties (Hermiticity and trace to
    1e-12, eigenvalues to -1e-10) and stores a read-only copy.
    """

    matrix: np.ndarray

    def __post_init__(self):
        m = as_square(self.matrix, "density matrix")
        herm_dev = float(np.max(np.abs(m - m.conj().T)))
        if herm_dev > HERMITIAN_TOL:
            raise ValidationError(f"density matrix is not Hermitian (deviation {herm_dev:.3e})")
        tr = np.trace(m)
        if abs(tr - 1.0) > TRACE_TOL:
            raise ValidationError(f"density matrix trace is {tr.real!r}, expected 1")
        lo = float(np.linalg.eigvalsh(m)[0])
        if lo < -PSD_TOL:
            raise NotPSDError(f"density matrix has negative eigenvalue {lo:.3e}")
        object.__setattr__(self, "matrix", _frozen(m))

    @classmethod
    def from_unnormalized(cls, m) -> "DensityOperator":
        """Hermitize ``m`` and divide by its trace."""
        m = as_square(m)
        m = 0.5 * (m + m.conj().T)
        tr = np.trace(m).real
        if not tr > 0:
            raise ValidationError(f"cannot normalize matrix with trace {tr!r}")
        return cls(m / tr)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def populations(self) -> np.ndarray:
        return np.diag(self.matrix).real.copy()

    def purity(self) -> float:
        return float(np.real(np.trace(self.matrix @ self.matrix)))


def density_from_pure(psi) -> DensityOperator:
    """Return ``|psi><psi|``.

    ``psi`` may be a :class:`PureState` or a raw vector; raw vectors must
    already be normalized to within 1e-9.
    """
    if isinstance(psi, PureState):
        vec = psi.amplitudes
    else:
        vec = np.asarray(psi, dtype=np.complex128)
        if vec.ndim != 1 or vec.size < 1:
            raise ValidationError("state vector must be a non-empty 1-D array")
        norm = float(np.linalg.norm(vec))
        if abs(norm - 1.0) > 1e-9:
            raise ValidationError(f"state vector is not normalized (norm {norm!r})")
    rho = np.outer(vec, vec.conj())
    return DensityOperator.from_unnormalized(rho)


def basis_state(n: int, dim: int) -> PureState:
    if not 0 <= n < dim:
        raise ValidationError(f"basis index {n} outside truncated space of dim {dim}")
    vec = np.zeros(dim, dtype=np.complex128)
    vec[n] = 1.0
    return PureState(vec)


def fock_density(n: int, dim: int) -> DensityOperator:
    return density_from_pure(basis_state(n, dim))


def fock_operators(dim: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Annihilation, creation and number operators truncated to ``dim`` levels.

    ``a|n> = sqrt(n)|n-1>``; the creation operator is the adjoint of ``a``,
    so ``a^dag |dim-1>`` is cut off by the truncation.
    """
    if int(dim) != dim or dim < 2:
        raise ValidationError(f"Fock truncation needs dim >= 2, got {dim}")
    dim = int(dim)
    a = np.diag(np.sqrt(np.arange(1, dim, dtype=float)), k=1).astype(np.complex128)
    adag = a.conj().T.copy()
    number = np.diag(np.arange(dim, dtype=float)).astype(np.complex128)
    return a, adag, number


def number_exponential(coefficient: float, dim: int) -> np.ndarray:
    """``exp(coefficient * n)`` as a diagonal matrix on ``dim`` Fock levels."""
    return np.diag(np.exp(coefficient * np.arange(dim, dtype=float))).astype(np.complex128)


def coherent_state(alpha: complex, dim: int) -> PureState:
    """Coherent state ``|alpha>`` truncated to ``dim`` levels and renormalized.

    Amplitudes are built in log space, so large ``dim`` does not overflow
    ``n!``.  The caller picks ``dim`` large enough that the discarded tail
    is negligible.
    """
    if int(dim) != dim or dim < 1:
        raise ValidationError(f"dim must be >= 1, got {dim}")
    dim = int(dim)
    alpha = complex(alpha)
    n = np.arange(dim)
    if alpha == 0:
        return basis_state(0, dim)
    r, phase = abs(alpha), np.angle(alpha)
    log_mag = n * np.log(r) - 0.5 * gammaln(n + 1) - 0.5 * r * r
    amps = np.exp(log_mag - log_mag.max()) * np.exp(1j * phase * n)
    return PureState.normalized(amps)


def _check_pair(rho: DensityOperator, sigma: DensityOperator) -> None:
    if rho.dim != sigma.dim:
        raise ValidationError(f"dimension mismatch: {rho.dim} vs {sigma.dim}")


def fidelity(rho: DensityOperator, sigma: DensityOperator) -> float:
    """Uhlmann fidelity ``(tr sqrt(sqrt(rho) sigma sqrt(rho)))**2``.

    Evaluated as the squared trace norm of ``sqrt(rho) @ sqrt(sigma)``,
    which avoids a second matrix square root and stays accurate for
    rank-deficient states.
    """
    _check_pair(rho, sigma)
    prod = psd_sqrt(rho.matrix) @ psd_sqrt(sigma.matrix)
    nuclear = float(np.sum(np.linalg.svd(prod, compute_uv=False)))
    return min(max(nuclear * nuclear, 0.0), 1.0)


def trace_distance(rho: DensityOperator, sigma: DensityOperator) -> float:
    _check_pair(rho, sigma)
    sv = np.linalg.svd(rho.matrix - sigma.matrix, compute_uv=False)
    return min(0.5 * float(np.sum(sv)), 1.0)


def smallest_singular_value(m) -> float:
    m = as_matrix(m)
    return float(np.linalg.svd(m, compute_uv=False)[-1])


def psd_sqrt(m) -> np.ndarray:
    """Principal square root of a Hermitian PSD matrix.

    Eigenvalues in ``[-1e-10, 0)`` are treated as roundoff and clamped to
    zero; anything more negative raises :class:`NotPSDError`.
    """
    m = as_square(m)
    herm = 0.5 * (m + m.conj().T)
    if np.max(np.abs(m - herm)) > PSD_TOL:
        raise NotPSDError("matrix is not Hermitian")
    w, v = np.linalg.eigh(herm)
    if w[0] < -PSD_TOL:
        raise NotPSDError(f"matrix has negative eigenvalue {w[0]:.3e}")
    root = (v * np.sqrt(np.clip(w, 0.0, None))) @ v.conj().T
    return 0.5 * (root + root.conj().T)


def operator_norm(m) -> float:
    return float(np.linalg.svd(as_matrix(m), compute_uv=False)[0])


def max_abs(m) -> float:
    """Entrywise max-norm, the comparison metric used throughout."""
    return float(np.max(np.abs(np.asarray(m))))


# Random ensembles.  Pure states: normalized complex Gaussian vectors.
# Mixed states: Ginibre G G^dag / tr.


def random_pure_state(dim: int, rng: np.random.Generator) -> PureState:
    vec = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    return PureState.normalized(vec)


def random_density(dim: int, rng: np.random.Generator, rank: int | None = None) -> DensityOperator:
    k = dim if rank is None else rank
    g = rng.standard_normal((dim, k)) + 1j * rng.standard_normal((dim, k))
    return DensityOperator.from_unnormalized(g @ g.conj().T)

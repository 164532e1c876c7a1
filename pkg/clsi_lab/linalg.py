"""Dense complex matrix kernel.

Hermitian eigendecomposition, matrix functions, column-stacked superoperators,
Choi matrices and the divided-difference (double operator integral) transform.
Every function is pure and returns fresh arrays.
"""
import logging
import math
import numbers
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from numpy.typing import ArrayLike, NDArray

from clsi_lab.errors import (
    DimensionMismatchError,
    DomainError,
    NotHermitianError,
    NumericalFailureError,
    RankDeficiencyError,
)

log = logging.getLogger(__name__)


###############################################################################
# GLOBALS
###############################################################################

ComplexMatrix = NDArray[np.complex128]

HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-10
NEGATIVE_EIGEN_TOL = 1e-9
RESIDUAL_TOL = 1e-10
DEGENERACY_TOL = 1e-12
CP_TOL = 1e-9
JACOBI_MAX_SWEEPS = 100

# Derivatives for the scalar functions the divided-difference transform sees most.
_KNOWN_DERIVATIVES = {
    np.log: lambda w: 1.0 / w,
    np.exp: np.exp,
}


###############################################################################
# VALIDATION
###############################################################################

def as_matrix(a: ArrayLike, name: str = "matrix") -> ComplexMatrix:
    """Return `a` as a square complex array, rejecting other shapes and non-finite entries."""
    m = np.array(a, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] == 0:
        raise DimensionMismatchError(f"{name} must be a non-empty square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} has non-finite entries")
    return m


def max_abs(a: ArrayLike) -> float:
    a = np.asarray(a)
    return float(np.max(np.abs(a))) if a.size else 0.0


def hermitian(a: ArrayLike, name: str = "operator") -> ComplexMatrix:
    """Validate a Hermitian operator and return its exact symmetrization (A + A†)/2."""
    m = as_matrix(a, name)
    skew = max_abs(m - m.conj().T)
    if skew > HERMITIAN_TOL * max(max_abs(m), np.finfo(float).tiny):
        raise NotHermitianError(f"{name} is not Hermitian (‖A − A†‖ = {skew:.3e})")
    return (m + m.conj().T) / 2


def density(rho: ArrayLike, name: str = "state") -> ComplexMatrix:
    """Validate a density operator.

    Trace must be 1 within TRACE_TOL. Eigenvalues down to -NEGATIVE_EIGEN_TOL are
    clamped to zero and the state renormalized; anything more negative is rejected.
    """
    m = hermitian(rho, name)
    trace = float(np.real(np.trace(m)))
    if abs(trace - 1.0) > TRACE_TOL:
        raise ValueError(f"{name} must have unit trace, got {trace:.12g}")
    w, u = np.linalg.eigh(m)
    if w[0] < -NEGATIVE_EIGEN_TOL:
        raise ValueError(f"{name} is not positive semidefinite (eigenvalue {w[0]:.3e})")
    if w[0] < 0:
        w = np.clip(w, 0.0, None)
        m = (u * w) @ u.conj().T
        m = (m + m.conj().T) / 2
        m /= np.real(np.trace(m))
    return m


def same_dim(*mats: ArrayLike) -> int:
    dims = {np.shape(m)[0] for m in mats}
    if len(dims) != 1:
        raise DimensionMismatchError(f"operators have different dimensions {sorted(dims)}")
    return dims.pop()


###############################################################################
# EIGENDECOMPOSITION
###############################################################################

def jacobi_eigh(a: ArrayLike, max_sweeps: int = JACOBI_MAX_SWEEPS, tol: float = 1e-14):
    """Cyclic complex Jacobi eigensolver.

    Each pivot (p, q) is made real by a diagonal phase and then annihilated by a plane
    rotation. Returns ascending eigenvalues and a unitary whose columns are eigenvectors.
    """
    m = hermitian(a)
    n = m.shape[0]
    v = np.eye(n, dtype=complex)
    scale = max(np.linalg.norm(m), np.finfo(float).tiny)

    for _ in range(max_sweeps):
        off = np.linalg.norm(m - np.diag(np.diag(m)))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = m[p, q]
                magnitude = abs(apq)
                if magnitude <= tol * scale * 1e-3:
                    continue
                phase = apq / magnitude
                theta = 0.5 * math.atan2(2.0 * magnitude, (m[q, q] - m[p, p]).real)
                c, s = math.cos(theta), math.sin(theta)
                rot = np.array([[c, s], [-s * np.conj(phase), c * np.conj(phase)]])
                idx = [p, q]
                m[:, idx] = m[:, idx] @ rot
                m[idx, :] = rot.conj().T @ m[idx, :]
                m[p, q] = m[q, p] = 0.0
                v[:, idx] = v[:, idx] @ rot
    else:
        raise NumericalFailureError(f"Jacobi eigensolver did not converge in {max_sweeps} sweeps")

    w = np.real(np.diag(m))
    order = np.argsort(w)
    return w[order], v[:, order]


def eigh(a: ArrayLike):
    """Hermitian eigendecomposition A = U diag(λ) U† with ascending λ.

    LAPACK does the work; the in-house Jacobi sweeps take over if it fails. The
    reconstruction residual is checked either way.
    """
    m = hermitian(a)
    try:
        w, u = np.linalg.eigh(m)
    except np.linalg.LinAlgError as e:
        log.warning(f"LAPACK eigh failed ({e}); falling back to Jacobi sweeps")
        w, u = jacobi_eigh(m)

    scale = max(max_abs(m), np.finfo(float).tiny)
    residual = max_abs(m @ u - u * w)
    if residual > RESIDUAL_TOL * scale:
        raise NumericalFailureError(f"eigendecomposition residual {residual:.3e} exceeds tolerance")
    return w, u


def matrix_function(a: ArrayLike, f: Callable, name: str = "f") -> ComplexMatrix:
    """f(A) = U f(Λ) U† for Hermitian A; raises DomainError where f is undefined."""
    w, u = eigh(a)
    with np.errstate(all="ignore"):
        fw = np.asarray(f(w))
    bad = ~np.isfinite(fw)
    if np.any(bad):
        lam = float(w[np.argmax(bad)])
        raise DomainError(f"{name} is undefined at eigenvalue {lam:.6g}", eigenvalue=lam)
    out = (u * fw) @ u.conj().T
    if np.isrealobj(fw):
        out = (out + out.conj().T) / 2
    return out


def divided_difference_transform(
    sigma: ArrayLike,
    x: ArrayLike,
    f: Callable = np.log,
    fprime: Optional[Callable] = None,
) -> ComplexMatrix:
    """Apply J^f_σ: X_ij ↦ X_ij (f(λ_i) − f(λ_j)) / (λ_i − λ_j) in the eigenbasis of σ.

    Near-degenerate pairs (relative gap below DEGENERACY_TOL) use f′ at the midpoint.
    For f = log this is X ↦ ∫₀^∞ (σ + r)⁻¹ X (σ + r)⁻¹ dr.
    """
    s = hermitian(sigma, "sigma")
    xm = as_matrix(x, "X")
    same_dim(s, xm)
    w, u = eigh(s)
    if w[0] <= 0:
        raise RankDeficiencyError(f"sigma must be positive definite (smallest eigenvalue {w[0]:.3e})")

    if fprime is None:
        fprime = _KNOWN_DERIVATIVES.get(f) or _central_difference(f)

    fw = np.asarray(f(w), dtype=float)
    num = fw[:, None] - fw[None, :]
    den = w[:, None] - w[None, :]
    near = np.abs(den) <= DEGENERACY_TOL * w[-1]
    mid = np.asarray(fprime((w[:, None] + w[None, :]) / 2), dtype=float)
    gamma = np.where(near, mid, num / np.where(near, 1.0, den))

    xt = u.conj().T @ xm @ u
    return u @ (gamma * xt) @ u.conj().T


def _central_difference(f: Callable) -> Callable:
    def derivative(w):
        h = 1e-6 * np.maximum(np.abs(w), 1.0)
        return (f(w + h) - f(w - h)) / (2 * h)
    return derivative


###############################################################################
# SUPEROPERATORS
###############################################################################

def vec(x: ArrayLike) -> NDArray:
    """Column-stacking vectorization."""
    return np.asarray(x).reshape(-1, order="F")


def unvec(v: ArrayLike, n: Optional[int] = None) -> NDArray:
    v = np.asarray(v).reshape(-1)
    n = n or math.isqrt(v.size)
    if n * n != v.size:
        raise DimensionMismatchError(f"vector of length {v.size} is not a vectorized {n}x{n} matrix")
    return v.reshape((n, n), order="F")


def sandwich(a: ArrayLike, b: Optional[ArrayLike] = None) -> NDArray:
    """Matrix of x ↦ a x b under column stacking, i.e. bᵀ ⊗ a."""
    a = np.asarray(a, dtype=complex)
    b = np.eye(a.shape[0], dtype=complex) if b is None else np.asarray(b, dtype=complex)
    return np.kron(b.T, a)


@dataclass(frozen=True)
class Superoperator:
    """Linear map on M_n stored as an n²×n² matrix acting on vec(x)."""

    dim: int
    matrix: NDArray

    def __post_init__(self):
        if self.matrix.shape != (self.dim ** 2, self.dim ** 2):
            raise DimensionMismatchError(
                f"superoperator on M_{self.dim} needs shape {(self.dim ** 2,) * 2}, got {self.matrix.shape}"
            )

    def apply(self, x: ArrayLike) -> ComplexMatrix:
        xm = np.asarray(x)
        if xm.shape != (self.dim, self.dim):
            raise DimensionMismatchError(f"expected a {self.dim}x{self.dim} matrix, got {xm.shape}")
        return unvec(self.matrix @ vec(xm), self.dim)

    def compose(self, other: "Superoperator") -> "Superoperator":
        """self ∘ other."""
        if other.dim != self.dim:
            raise DimensionMismatchError(f"cannot compose maps on M_{self.dim} and M_{other.dim}")
        return Superoperator(self.dim, self.matrix @ other.matrix)

    def is_hermitian(self, tol: float = 1e-10) -> bool:
        return max_abs(self.matrix - self.matrix.conj().T) <= tol * max(1.0, max_abs(self.matrix))


def matrix_unit(n: int, i: int, j: int) -> NDArray:
    e = np.zeros((n, n), dtype=complex)
    e[i, j] = 1.0
    return e


def vectorize_map(phi: Callable[[NDArray], ArrayLike], n: int) -> Superoperator:
    """Superoperator of a linear map from its action on the matrix units."""
    s = np.zeros((n * n, n * n), dtype=complex)
    for k in range(n * n):
        i, j = k % n, k // n
        s[:, k] = vec(np.asarray(phi(matrix_unit(n, i, j)), dtype=complex))
    return Superoperator(n, s)


def choi_matrix(s: Superoperator) -> ComplexMatrix:
    """Σ_ij E_ij ⊗ Φ(E_ij); block (i, j) holds Φ(E_ij)."""
    n = s.dim
    choi = np.zeros((n * n, n * n), dtype=complex)
    for i in range(n):
        for j in range(n):
            choi[i * n:(i + 1) * n, j * n:(j + 1) * n] = unvec(s.matrix[:, i + j * n], n)
    return choi


def is_completely_positive(s: Superoperator, tol: float = CP_TOL) -> bool:
    choi = choi_matrix(s)
    skew = max_abs(choi - choi.conj().T)
    if skew > tol * max(1.0, max_abs(choi)):
        log.warning(f"Choi matrix is not Hermitian (skew {skew:.3e}); map is not Hermiticity-preserving")
        return False
    w = np.linalg.eigvalsh((choi + choi.conj().T) / 2)
    return bool(w[0] >= -tol)


###############################################################################
# SAMPLING
###############################################################################

def random_hermitian(n: int, rng: np.random.Generator) -> ComplexMatrix:
    g = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return (g + g.conj().T) / 2


def random_density(n: int, rng: np.random.Generator, rank: Optional[int] = None) -> ComplexMatrix:
    """Hilbert–Schmidt random state (full rank) or a random state of the given rank."""
    k = n if rank is None else rank
    g = rng.standard_normal((n, k)) + 1j * rng.standard_normal((n, k))
    rho = g @ g.conj().T
    rho = (rho + rho.conj().T) / 2
    return rho / np.real(np.trace(rho))


def random_unitary(n: int, rng: np.random.Generator) -> ComplexMatrix:
    g = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    q, r = np.linalg.qr(g)
    return q * (np.diag(r) / np.abs(np.diag(r)))


###############################################################################
# JSON
###############################################################################

def matrix_to_json(a: ArrayLike) -> list:
    """Row-major nested list of [re, im] pairs."""
    m = np.asarray(a, dtype=complex)
    return [[[float(z.real), float(z.imag)] for z in row] for row in m]


def matrix_from_json(data, name: str = "matrix") -> ComplexMatrix:
    if not isinstance(data, (list, tuple)):
        raise ValueError(f"{name}: expected a list of rows, got {type(data).__name__}")
    rows = []
    for i, row in enumerate(data):
        if not isinstance(row, (list, tuple)):
            raise ValueError(f"{name}[{i}]: expected a row list, got {type(row).__name__}")
        entries = []
        for j, entry in enumerate(row):
            if isinstance(entry, (list, tuple)):
                if len(entry) != 2:
                    raise ValueError(f"{name}[{i}][{j}]: complex entries are [re, im] pairs, got {entry}")
                re, im = entry
            else:
                re, im = entry, 0.0
            if not all(isinstance(v, numbers.Real) and not isinstance(v, bool) for v in (re, im)):
                raise ValueError(f"{name}[{i}][{j}]: entries must be numbers, got {entry!r}")
            entries.append(complex(re, im))
        rows.append(entries)
    if len({len(r) for r in rows}) > 1:
        raise DimensionMismatchError(f"{name} has rows of unequal length")
    return as_matrix(rows, name)

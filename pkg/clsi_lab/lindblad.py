"""Symmetric Lindblad generators.

L(x) = Σ_k (a_k² x + x a_k² − 2 a_k x a_k) for self-adjoint jumps a_k, generating the
semigroup T_t = e^{−tL}. The superoperator is Hermitian under the trace inner product,
so time evolution goes through one cached eigendecomposition.
"""
import logging
from dataclasses import dataclass
from functools import cached_property
from typing import List, Optional, Sequence

import numpy as np
from numpy.typing import ArrayLike

from clsi_lab.errors import (
    DegenerateGeneratorError,
    DimensionMismatchError,
    InconsistencyError,
    NumericalFailureError,
)
from clsi_lab.linalg import (
    NEGATIVE_EIGEN_TOL,
    ComplexMatrix,
    Superoperator,
    as_matrix,
    density,
    eigh,
    hermitian,
    max_abs,
    same_dim,
    sandwich,
    unvec,
    vec,
)

log = logging.getLogger(__name__)


###############################################################################
# GLOBALS
###############################################################################

ZERO_EIGEN_TOL = 1e-9
FORM_AGREEMENT_TOL = 1e-12


###############################################################################
# GENERATOR
###############################################################################

@dataclass(frozen=True, eq=False)
class LindbladGenerator:
    """Jump operators a_1..a_s on M_n plus lazily cached spectral data."""

    dim: int
    jumps: tuple

    @property
    def s(self) -> int:
        return len(self.jumps)

    @cached_property
    def superop(self) -> Superoperator:
        n = self.dim
        eye = np.eye(n, dtype=complex)
        s = np.zeros((n * n, n * n), dtype=complex)
        for a in self.jumps:
            a2 = a @ a
            s += sandwich(a2) + sandwich(eye, a2) - 2 * sandwich(a, a)
        return Superoperator(n, s)

    @cached_property
    def spectrum(self):
        """Ascending eigenvalues and eigenvectors of the superoperator."""
        w, v = eigh(self.superop.matrix)
        if w[0] < -ZERO_EIGEN_TOL * max(1.0, abs(w[-1])):
            raise InconsistencyError(f"generator has negative eigenvalue {w[0]:.3e}")
        return w, v

    @property
    def gap(self) -> float:
        return spectral_gap(self)


def _double_commutator_superop(jumps: Sequence[ComplexMatrix], n: int) -> np.ndarray:
    """−Σ ad_X² for the anti-Hermitian generators X_k = i·a_k."""
    eye = np.eye(n, dtype=complex)
    s = np.zeros((n * n, n * n), dtype=complex)
    for a in jumps:
        x = 1j * a
        ad = sandwich(x) - sandwich(eye, x)
        s -= ad @ ad
    return s


def build_generator(jumps: Sequence[ArrayLike], dim: Optional[int] = None) -> LindbladGenerator:
    """Build L from self-adjoint jumps and check it against the double-commutator form."""
    mats = [hermitian(a, f"jump {k}") for k, a in enumerate(jumps)]
    if not mats:
        if dim is None:
            raise DimensionMismatchError("dim is required for a generator without jumps")
        n = dim
    else:
        n = same_dim(*mats)
        if dim is not None and dim != n:
            raise DimensionMismatchError(f"jumps act on M_{n} but dim={dim} was declared")

    gen = LindbladGenerator(n, tuple(mats))
    s = gen.superop.matrix
    gap = max_abs(s - _double_commutator_superop(mats, n))
    if gap > FORM_AGREEMENT_TOL * max(1.0, max_abs(s)):
        raise InconsistencyError(f"sandwich and double-commutator forms differ by {gap:.3e}")

    log.debug(f"built generator on M_{n} with {len(mats)} jumps")
    return gen


def amplify(gen: LindbladGenerator, m: int) -> LindbladGenerator:
    """L ⊗ id_{M_m}, realized by lifting every jump to a ⊗ I_m."""
    if m < 1:
        raise ValueError(f"ancilla dimension must be >= 1, got {m}")
    if m == 1:
        return gen
    eye = np.eye(m, dtype=complex)
    return build_generator([np.kron(a, eye) for a in gen.jumps], dim=gen.dim * m)


###############################################################################
# ACTION AND EVOLUTION
###############################################################################

def _check_operand(gen: LindbladGenerator, x: ArrayLike) -> ComplexMatrix:
    xm = as_matrix(x, "x")
    if xm.shape[0] != gen.dim:
        raise DimensionMismatchError(f"generator acts on M_{gen.dim}, got a {xm.shape[0]}x{xm.shape[0]} matrix")
    return xm


def apply(gen: LindbladGenerator, x: ArrayLike) -> ComplexMatrix:
    xm = _check_operand(gen, x)
    out = np.zeros_like(xm)
    for a in gen.jumps:
        a2 = a @ a
        out += a2 @ xm + xm @ a2 - 2 * a @ xm @ a
    return out


def double_commutator(gen: LindbladGenerator, x: ArrayLike) -> ComplexMatrix:
    """−Σ_k [X_k, [X_k, x]] with X_k = i·a_k; agrees with apply()."""
    xm = _check_operand(gen, x)
    out = np.zeros_like(xm)
    for a in gen.jumps:
        g = 1j * a
        inner = g @ xm - xm @ g
        out -= g @ inner - inner @ g
    return out


def derivation(gen: LindbladGenerator, x: ArrayLike) -> List[ComplexMatrix]:
    """δ(x) = (i[a_1, x], ..., i[a_s, x]); L = δ*δ."""
    xm = _check_operand(gen, x)
    return [1j * (a @ xm - xm @ a) for a in gen.jumps]


def semigroup(gen: LindbladGenerator, t: float) -> Superoperator:
    """e^{−tS} as a superoperator."""
    if t < 0:
        raise ValueError(f"the semigroup is only defined for t >= 0, got t={t}")
    w, v = gen.spectrum
    return Superoperator(gen.dim, (v * np.exp(-t * w)) @ v.conj().T)


def propagate(gen: LindbladGenerator, x: ArrayLike, t: float) -> ComplexMatrix:
    """T_t(x) for an arbitrary matrix x."""
    if t < 0:
        raise ValueError(f"the semigroup is only defined for t >= 0, got t={t}")
    xm = _check_operand(gen, x)
    w, v = gen.spectrum
    coeffs = v.conj().T @ vec(xm)
    return unvec(v @ (np.exp(-t * w) * coeffs), gen.dim)


def evolve(gen: LindbladGenerator, rho: ArrayLike, t: float) -> ComplexMatrix:
    """ρ_t = T_t(ρ), re-Hermitized, clamped at zero and renormalized."""
    state = density(rho)
    if state.shape[0] != gen.dim:
        raise DimensionMismatchError(f"generator acts on M_{gen.dim}, state is {state.shape[0]}x{state.shape[0]}")
    if t < 0:
        raise ValueError(f"the semigroup is only defined for t >= 0, got t={t}")
    if t == 0:
        return state

    out = propagate(gen, state, t)
    out = (out + out.conj().T) / 2
    w, u = np.linalg.eigh(out)
    if w[0] < -NEGATIVE_EIGEN_TOL:
        raise NumericalFailureError(f"evolved state has eigenvalue {w[0]:.3e} at t={t}")
    if w[0] < 0:
        out = (u * np.clip(w, 0.0, None)) @ u.conj().T
        out = (out + out.conj().T) / 2
    return out / np.real(np.trace(out))


###############################################################################
# SPECTRAL DATA
###############################################################################

def spectral_gap(gen: LindbladGenerator) -> float:
    """Smallest superoperator eigenvalue above the zero threshold."""
    w, _ = gen.spectrum
    threshold = ZERO_EIGEN_TOL * max(1.0, abs(w[-1]))
    positive = w[w > threshold]
    if positive.size == 0:
        raise DegenerateGeneratorError("generator has no nonzero eigenvalue (L = 0)")
    return float(positive[0])


def zero_multiplicity(gen: LindbladGenerator) -> int:
    w, _ = gen.spectrum
    return int(np.sum(w <= ZERO_EIGEN_TOL * max(1.0, abs(w[-1]))))

"""Fixed-point algebra N = {a_1, ..., a_s}′ and the conditional expectation E_N."""
import logging
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, List, Optional, Sequence, Union

import numpy as np
from numpy.typing import ArrayLike
from scipy.linalg import null_space

from clsi_lab.errors import AmbiguityError, DimensionMismatchError, InconsistencyError
from clsi_lab.lindblad import (
    ZERO_EIGEN_TOL,
    LindbladGenerator,
    build_generator,
    propagate,
    spectral_gap,
)
from clsi_lab.linalg import ComplexMatrix, Superoperator, as_matrix, hermitian, sandwich, unvec, vec

log = logging.getLogger(__name__)


###############################################################################
# GLOBALS
###############################################################################

SEPARATION_FACTOR = 1e3
ORTHONORMAL_DROP_TOL = 1e-8
LIMIT_TOL = 1e-6


###############################################################################
# COMMUTANT
###############################################################################

@dataclass(frozen=True, eq=False)
class CommutantBasis:
    """Hilbert–Schmidt orthonormal basis b_1..b_d of N; b_1 = I/√n."""

    dim: int
    basis: tuple

    @property
    def d(self) -> int:
        return len(self.basis)

    @cached_property
    def projector(self) -> np.ndarray:
        """n²×n² orthogonal projector onto vec(N)."""
        b = np.column_stack([vec(m) for m in self.basis])
        return b @ b.conj().T

    def superoperator(self) -> Superoperator:
        return Superoperator(self.dim, self.projector)


def _orthonormalize(vectors: Iterable[np.ndarray]) -> List[np.ndarray]:
    # modified Gram-Schmidt, two passes
    out: List[np.ndarray] = []
    for v in vectors:
        w = np.array(v, dtype=complex)
        for _ in range(2):
            for q in out:
                w -= (q.conj() @ w) * q
        norm = np.linalg.norm(w)
        if norm > ORTHONORMAL_DROP_TOL:
            out.append(w / norm)
    return out


def commutant_basis(
    jumps: Union[LindbladGenerator, Sequence[ArrayLike]],
    dim: Optional[int] = None,
) -> CommutantBasis:
    """Kernel of Σ_k ad_{a_k}† ad_{a_k}, which is the generator's own superoperator."""
    gen = jumps if isinstance(jumps, LindbladGenerator) else build_generator(jumps, dim)
    n = gen.dim
    w, v = gen.spectrum

    threshold = ZERO_EIGEN_TOL * max(1.0, abs(w[-1]))
    zero = w <= threshold
    nonzero = w[~zero]
    if nonzero.size and nonzero[0] < SEPARATION_FACTOR * threshold:
        raise AmbiguityError(
            f"cannot separate the kernel: first nonzero eigenvalue {nonzero[0]:.3e} "
            f"is within a factor {SEPARATION_FACTOR:g} of the threshold {threshold:.3e}"
        )

    candidates = [vec(np.eye(n, dtype=complex)) / math.sqrt(n)]
    candidates += [v[:, k] for k in np.flatnonzero(zero)]
    basis = _orthonormalize(candidates)
    if len(basis) != int(zero.sum()):
        raise InconsistencyError(f"kernel has dimension {int(zero.sum())} but {len(basis)} basis vectors survived")

    log.debug(f"fixed-point algebra on M_{n} has dimension {len(basis)}")
    return CommutantBasis(n, tuple(unvec(b, n) for b in basis))


def commutant_dimension(jumps: Sequence[ArrayLike], dim: Optional[int] = None) -> int:
    """dim {a_k}′ from the null space of the stacked commutator matrices."""
    mats = [hermitian(a) for a in jumps]
    if not mats:
        if dim is None:
            raise DimensionMismatchError("dim is required without jumps")
        return dim * dim
    n = mats[0].shape[0]
    eye = np.eye(n, dtype=complex)
    stacked = np.vstack([sandwich(a) - sandwich(eye, a) for a in mats])
    return int(null_space(stacked, rcond=1e-10).shape[1])


###############################################################################
# CONDITIONAL EXPECTATION
###############################################################################

def conditional_expectation(basis: CommutantBasis, x: ArrayLike) -> ComplexMatrix:
    """E_N(x) = Σ_i b_i tr(b_i† x)."""
    xm = as_matrix(x, "x")
    if xm.shape[0] != basis.dim:
        raise DimensionMismatchError(f"basis lives on M_{basis.dim}, got a {xm.shape[0]}x{xm.shape[0]} matrix")
    return unvec(basis.projector @ vec(xm), basis.dim)


def check_expectation_limit(
    gen: LindbladGenerator,
    basis: CommutantBasis,
    samples: Sequence[ArrayLike],
    t_max: float,
    tol: float = LIMIT_TOL,
) -> float:
    """Largest Frobenius deviation ‖T_{t_max}(x) − E_N(x)‖ over the samples."""
    gap = spectral_gap(gen)
    if t_max < 20.0 / gap:
        raise ValueError(f"t_max={t_max} is below 20/gap = {20.0 / gap:.4g}")

    deviation = 0.0
    for x in samples:
        diff = propagate(gen, x, t_max) - conditional_expectation(basis, x)
        deviation = max(deviation, float(np.linalg.norm(diff)))
    if deviation > tol:
        raise InconsistencyError(f"T_t does not converge to E_N: deviation {deviation:.3e} at t={t_max}")
    return deviation

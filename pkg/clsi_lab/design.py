"""Finite averaging designs Σ_j α_j u(g_j)† x u(g_j) = E_N(x).

Structured representations get exact designs first (finite rotation subgroups for
SU(2), phase grids for tori). Anything else goes through a feasibility LP over a
Haar-random pool, followed by Carathéodory support reduction.
"""
import logging
import math
from dataclasses import dataclass, replace
from functools import reduce
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import null_space
from scipy.optimize import linprog
from tenacity import Retrying, before_sleep_log, retry_if_exception_type, stop_after_attempt

from clsi_lab.errors import DimensionMismatchError, InconsistencyError, PoolExhaustedError
from clsi_lab.fixedpoint import CommutantBasis, commutant_dimension
from clsi_lab.liegroup import SU2, TORUS, Representation, haar_sample
from clsi_lab.linalg import Superoperator, is_completely_positive, matrix_to_json, max_abs, sandwich

log = logging.getLogger(__name__)


###############################################################################
# GLOBALS
###############################################################################

WEIGHT_TOL = 1e-12
LP_TOL = 1e-10
VERIFY_TOL = 1e-8
COMMUTE_TOL = 1e-8
RANK_RTOL = 1e-10
MAX_GROUP_ORDER = 240
DEFAULT_ATTEMPTS = 4

_PHI = (1 + math.sqrt(5)) / 2
_I2 = np.eye(2, dtype=complex)
_SX = np.array([[0, 1], [1, 0]], dtype=complex)
_SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
_SZ = np.array([[1, 0], [0, -1]], dtype=complex)


def _rotation(angle: float, axis: Sequence[float]) -> np.ndarray:
    n = np.asarray(axis, dtype=float)
    n = n / np.linalg.norm(n)
    return math.cos(angle / 2) * _I2 - 1j * math.sin(angle / 2) * (n[0] * _SX + n[1] * _SY + n[2] * _SZ)


# (name, largest spin l in End(V) the subgroup averages exactly, SU(2) generators)
FINITE_SUBGROUPS = (
    ("klein", 1, (-1j * _SX, -1j * _SZ)),
    ("tetrahedral", 2, (-1j * _SX, -1j * _SZ, (_I2 - 1j * (_SX + _SY + _SZ)) / 2)),
    ("octahedral", 3, (-1j * _SX, -1j * _SZ, (_I2 - 1j * (_SX + _SY + _SZ)) / 2, _rotation(math.pi / 2, (0, 0, 1)))),
    ("icosahedral", 5, (-1j * _SX, -1j * _SZ, (_I2 - 1j * (_SX + _SY + _SZ)) / 2, _rotation(2 * math.pi / 5, (0, 1, _PHI)))),
)


###############################################################################
# DESIGN
###############################################################################

@dataclass
class AveragingDesign:
    """Group elements g_j (defining representation), their images u(g_j) and weights α_j."""

    elements: tuple
    unitaries: tuple
    weights: np.ndarray
    source: str = "lp"
    residual: float = math.nan
    reduction_failed: bool = False

    def __post_init__(self):
        if len(self.unitaries) != len(self.weights) or len(self.elements) != len(self.weights):
            raise DimensionMismatchError("elements, unitaries and weights must have the same length")
        if np.any(self.weights < -WEIGHT_TOL) or abs(float(np.sum(self.weights)) - 1.0) > 1e-12:
            raise ValueError("design weights must form a probability vector")

    @property
    def m(self) -> int:
        return len(self.weights)

    @property
    def dim(self) -> int:
        return self.unitaries[0].shape[0]

    def to_dict(self) -> dict:
        return {
            "m": self.m,
            "weights": self.weights.tolist(),
            "unitaries": [matrix_to_json(u) for u in self.unitaries],
            "elements": [matrix_to_json(g) for g in self.elements],
            "residual": self.residual,
            "source": self.source,
            "reduction_failed": self.reduction_failed,
        }


def caratheodory_cap(n: int) -> int:
    return n * n + 4 * n + 2


def _adjoint_superop(u: np.ndarray) -> np.ndarray:
    """x ↦ u† x u as an n²×n² matrix."""
    return sandwich(u.conj().T, u)


def channel_superoperator(design: AveragingDesign) -> Superoperator:
    mat = sum(a * _adjoint_superop(u) for a, u in zip(design.weights, design.unitaries))
    return Superoperator(design.dim, mat)


def verify_design(design: AveragingDesign, basis: CommutantBasis) -> float:
    """max over matrix units E_ij of ‖Σ_j α_j u_j† E_ij u_j − E_N(E_ij)‖_F."""
    if design.dim != basis.dim:
        raise DimensionMismatchError(f"design acts on M_{design.dim}, basis on M_{basis.dim}")
    diff = channel_superoperator(design).matrix - basis.projector
    # column i + j·n is vec of the image of E_ij
    return float(np.max(np.linalg.norm(diff, axis=0)))


def _finalize(design: AveragingDesign, basis: CommutantBasis) -> AveragingDesign:
    design.residual = verify_design(design, basis)
    if not is_completely_positive(channel_superoperator(design)):
        raise InconsistencyError("design channel has a non-PSD Choi matrix")
    return design


###############################################################################
# STRUCTURED DESIGNS
###############################################################################

def close_group(generators: Sequence[np.ndarray], cap: int = MAX_GROUP_ORDER) -> List[np.ndarray]:
    """Breadth-first closure of a finite subgroup of SU(2) under multiplication."""
    elements = [_I2.copy()]
    frontier = [_I2.copy()]
    while frontier:
        nxt = []
        for g in frontier:
            for s in generators:
                h = g @ s
                if all(max_abs(h - e) > 1e-9 for e in elements):
                    elements.append(h)
                    nxt.append(h)
                    if len(elements) > cap:
                        raise InconsistencyError(f"group closure exceeded {cap} elements")
        frontier = nxt
    return elements


def _modulo_sign(elements: List[np.ndarray]) -> List[np.ndarray]:
    out: List[np.ndarray] = []
    for g in elements:
        if all(max_abs(g + e) > 1e-9 for e in out):
            out.append(g)
    return out


def _uniform(elements, rep, source) -> AveragingDesign:
    elements = tuple(np.asarray(g) for g in elements)
    unitaries = tuple(rep.image(g) for g in elements)
    return AveragingDesign(elements, unitaries, np.full(len(elements), 1.0 / len(elements)), source)


def torus_grid_design(rep: Representation) -> AveragingDesign:
    """Product grid of phases that averages every weight difference w_b − w_a to zero."""
    w = np.asarray(rep.weights)
    delta = (w[None, :, :] - w[:, None, :]).reshape(-1, w.shape[1])
    axes = []
    for k in range(w.shape[1]):
        nonzero = np.abs(delta[:, k][delta[:, k] != 0])
        if nonzero.size == 0:
            axes.append(np.zeros(1))
            continue
        g = reduce(math.gcd, nonzero.tolist())
        size = int(nonzero.max() // g) + 1
        axes.append(2 * math.pi * np.arange(size) / (size * g))
    grid = np.array(np.meshgrid(*axes, indexing="ij")).reshape(w.shape[1], -1).T
    elements = [np.diag(np.exp(1j * theta)) for theta in grid]
    return _uniform(elements, rep, "torus-grid")


def finite_subgroup_design(rep: Representation) -> Optional[AveragingDesign]:
    """Smallest listed rotation subgroup whose average matches the SU(2) twirl, if any."""
    top_spin = 2 * rep.max_spin
    for name, strength, generators in FINITE_SUBGROUPS:
        if top_spin > strength:
            continue
        elements = close_group(generators)
        center = rep.center_image
        if max_abs(center - center[0, 0] * np.eye(rep.dim)) < 1e-12:
            elements = _modulo_sign(elements)
        return _uniform(elements, rep, f"subgroup:{name}")
    return None


def structured_design(rep: Representation) -> Optional[AveragingDesign]:
    if all(max_abs(img) == 0 for img in rep.algebra_images):
        d = 2 if rep.group == SU2 else rep.algebra_dim
        return _uniform([np.eye(d, dtype=complex)], rep, "trivial")
    if rep.group == TORUS:
        return torus_grid_design(rep)
    return finite_subgroup_design(rep)


###############################################################################
# LP DESIGNS
###############################################################################

def _real_columns(unitaries: Sequence[np.ndarray]) -> np.ndarray:
    cols = [_adjoint_superop(u).ravel() for u in unitaries]
    a = np.array(cols).T
    return np.vstack([a.real, a.imag])


def _target_column(basis: CommutantBasis) -> np.ndarray:
    p = basis.projector.ravel()
    return np.concatenate([p.real, p.imag])


def _compress(a: np.ndarray, b: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Independent rows of [A b] by SVD; b stays outside range(A) if it was."""
    aug = np.column_stack([a, b])
    u, s, _ = np.linalg.svd(aug, full_matrices=False)
    rank = int(np.sum(s > RANK_RTOL * s[0]))
    u = u[:, :rank]
    return u.T @ a, u.T @ b


def _lp_design(rep: Representation, basis: CommutantBasis, pool_size: int, rng: np.random.Generator) -> AveragingDesign:
    d = 2 if rep.group == SU2 else rep.algebra_dim
    elements = haar_sample(rep.group, pool_size, rng, d)
    unitaries = rep.images(elements)
    a = np.vstack([_real_columns(unitaries), np.ones((1, pool_size))])
    b = np.concatenate([_target_column(basis), [1.0]])
    a_c, b_c = _compress(a, b)

    result = linprog(
        np.zeros(pool_size),
        A_eq=a_c,
        b_eq=b_c,
        bounds=(0, None),
        method="highs-ds",
        options={"primal_feasibility_tolerance": LP_TOL, "dual_feasibility_tolerance": LP_TOL},
    )
    if result.status != 0:
        raise PoolExhaustedError(f"pool of {pool_size} elements is infeasible: {result.message}")

    alpha = np.clip(result.x, 0.0, None)
    support = np.flatnonzero(alpha > WEIGHT_TOL)
    polished, *_ = np.linalg.lstsq(a[:, support], b, rcond=None)
    if np.all(polished > 0):
        alpha = np.zeros(pool_size)
        alpha[support] = polished
    alpha = alpha[support] / alpha[support].sum()
    design = AveragingDesign(
        tuple(elements[support]), tuple(unitaries[support]), alpha, source=f"lp:{pool_size}"
    )
    design.residual = verify_design(design, basis)
    if design.residual > VERIFY_TOL:
        raise PoolExhaustedError(f"LP solution misses E_N by {design.residual:.3e} at pool size {pool_size}")
    return design


###############################################################################
# SUPPORT REDUCTION
###############################################################################

def reduce_support(design: AveragingDesign, basis: Optional[CommutantBasis] = None) -> AveragingDesign:
    """Carathéodory elimination down to affinely independent channel coordinates.

    Breakdown (residual lost or cap not reached) returns the input with reduction_failed set.
    """
    alpha = design.weights.copy()
    keep = np.arange(design.m)
    coords = np.vstack([_real_columns(design.unitaries), np.ones((1, design.m))])

    while keep.size > 1:
        z = null_space(coords[:, keep], rcond=RANK_RTOL)
        if z.shape[1] == 0:
            break
        z = z[:, 0]
        if not np.any(z > 0):
            z = -z
        positive = z > 0
        ratios = np.full(keep.size, np.inf)
        ratios[positive] = alpha[keep][positive] / z[positive]
        pivot = int(np.argmin(ratios))
        alpha[keep] = alpha[keep] - ratios[pivot] * z
        alpha[keep[pivot]] = 0.0
        keep = keep[alpha[keep] > WEIGHT_TOL]

    weights = np.clip(alpha[keep], 0.0, None)
    weights = weights / weights.sum()
    reduced = AveragingDesign(
        tuple(design.elements[i] for i in keep),
        tuple(design.unitaries[i] for i in keep),
        weights,
        source=design.source,
    )

    if basis is not None:
        reduced.residual = verify_design(reduced, basis)
        if reduced.residual > VERIFY_TOL:
            log.warning(f"support reduction lost accuracy (residual {reduced.residual:.3e}); keeping the unreduced design")
            return replace(design, reduction_failed=True)
    if reduced.m > caratheodory_cap(design.dim):
        log.warning(f"reduced design has {reduced.m} elements, above the cap {caratheodory_cap(design.dim)}")
        reduced.reduction_failed = True
    return reduced


###############################################################################
# ENTRY POINT
###############################################################################

def _check_oracle(rep: Representation, basis: CommutantBasis) -> None:
    if basis.dim != rep.dim:
        raise DimensionMismatchError(f"representation has dimension {rep.dim}, E_N acts on M_{basis.dim}")
    for img in rep.algebra_images:
        for b in basis.basis:
            if max_abs(img @ b - b @ img) > COMMUTE_TOL:
                raise InconsistencyError("E_N does not fix the commutant of the representation")
    expected = commutant_dimension([-1j * img for img in rep.algebra_images], dim=rep.dim)
    if expected != basis.d:
        raise InconsistencyError(f"E_N has rank {basis.d}, the representation's commutant has dimension {expected}")


def find_design(
    rep: Representation,
    basis: CommutantBasis,
    pool_size: int = 2000,
    seed: int = 0,
    max_attempts: int = DEFAULT_ATTEMPTS,
    use_shortcuts: bool = True,
) -> AveragingDesign:
    """Exact structured design when one applies, else LP over a pool that doubles on failure."""
    _check_oracle(rep, basis)

    if use_shortcuts:
        design = structured_design(rep)
        if design is not None:
            design = _finalize(design, basis)
            if design.residual <= VERIFY_TOL:
                if design.m > caratheodory_cap(rep.dim):
                    design = _finalize(reduce_support(design, basis), basis)
                log.info(f"{design.source} design with {design.m} elements, residual {design.residual:.2e}")
                return design
            log.warning(f"{design.source} design misses E_N by {design.residual:.3e}; falling back to the LP")

    children = np.random.SeedSequence(seed).spawn(max_attempts)
    for attempt in Retrying(
        stop=stop_after_attempt(max_attempts),
        retry=retry_if_exception_type(PoolExhaustedError),
        before_sleep=before_sleep_log(log, logging.WARNING),
        reraise=True,
    ):
        with attempt:
            k = attempt.retry_state.attempt_number - 1
            size = pool_size * 2 ** k
            design = _lp_design(rep, basis, size, np.random.default_rng(children[k]))

    design = _finalize(reduce_support(design, basis), basis)
    log.info(f"LP design with {design.m} elements, residual {design.residual:.2e}")
    return design

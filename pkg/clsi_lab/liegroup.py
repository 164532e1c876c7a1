"""Compact matrix Lie groups SU(2) and T^d, their representations and transference.

Group elements are kept in the defining representation (2×2 for SU(2), d×d diagonal
for the torus). Algebra elements are coordinate vectors in a fixed orthonormal basis:
{−iσ_k/2} for su(2) under ⟨A,B⟩ = −2 tr(AB), {i E_kk} for the torus under −tr(AB).
A representation u is given by the images φ_u of that basis.
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import cached_property
from typing import List, NamedTuple, Optional, Sequence

import numpy as np
from numpy.typing import ArrayLike
from scipy.linalg import block_diag

from clsi_lab.errors import ConfigurationError, DimensionMismatchError, InconsistencyError
from clsi_lab.linalg import ComplexMatrix, as_matrix, hermitian, max_abs

log = logging.getLogger(__name__)


###############################################################################
# GLOBALS
###############################################################################

SU2 = "su2"
TORUS = "torus"

MAX_SPIN = 3.5
MAX_TORUS_DIM = 4
HOMOMORPHISM_TOL = 1e-10
RANK_TOL = 1e-10
HAAR_CHUNK = 50_000

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULIS = (SIGMA_X, SIGMA_Y, SIGMA_Z)

DIRECTION_LABELS = {"X": 0, "Y": 1, "Z": 2}


def algebra_basis(group: str, d: int = 1) -> tuple:
    if group == SU2:
        return tuple(-0.5j * p for p in PAULIS)
    if group == TORUS:
        return tuple(1j * np.diag(np.eye(d)[k]).astype(complex) for k in range(d))
    raise ConfigurationError(f"unsupported group '{group}'")


def inner_product(group: str, a: ArrayLike, b: ArrayLike) -> float:
    scale = 2.0 if group == SU2 else 1.0
    return float(np.real(-scale * np.trace(np.asarray(a) @ np.asarray(b))))


def identity_element(group: str, d: int = 1) -> np.ndarray:
    return np.eye(2 if group == SU2 else d, dtype=complex)


###############################################################################
# EXPONENTIALS
###############################################################################

def expm_skew(k: ArrayLike) -> np.ndarray:
    """exp(K) for (a stack of) anti-Hermitian K through the eigendecomposition of iK."""
    k = np.asarray(k, dtype=complex)
    h = 1j * k
    h = (h + np.conj(np.swapaxes(h, -1, -2))) / 2
    w, v = np.linalg.eigh(h)
    return (v * np.exp(-1j * w)[..., None, :]) @ np.conj(np.swapaxes(v, -1, -2))


def su2_coordinates(g: ArrayLike):
    """Quaternion (a0, a) with g = a0·I − i a·σ, for one element or a stack."""
    g = np.asarray(g, dtype=complex)
    a0 = np.real(g[..., 0, 0] + g[..., 1, 1]) / 2
    a = np.stack([np.real(0.5j * np.einsum("...ij,ji->...", g, p)) for p in PAULIS], axis=-1)
    return a0, a


def su2_log(g: ArrayLike) -> np.ndarray:
    """Principal algebra coordinates c with exp(Σ c_k (−iσ_k/2)) = g."""
    a0, a = su2_coordinates(g)
    norm = np.linalg.norm(a, axis=-1)
    theta = np.arctan2(norm, a0)
    with np.errstate(invalid="ignore", divide="ignore"):
        axis = np.where(norm[..., None] > 1e-300, a / norm[..., None], np.array([0.0, 0.0, 1.0]))
    return 2 * theta[..., None] * axis


def group_exp(group: str, coeffs: ArrayLike, d: int = 1) -> np.ndarray:
    """exp of an algebra element given by coordinates, in the defining representation."""
    c = np.asarray(coeffs, dtype=float)
    if group == TORUS:
        return np.diag(np.exp(1j * c)).astype(complex)
    return expm_skew(np.einsum("k,kij->ij", c, np.asarray(algebra_basis(SU2))))


def group_inverse(g: ArrayLike) -> np.ndarray:
    return np.conj(np.asarray(g)).T


###############################################################################
# REPRESENTATIONS
###############################################################################

@dataclass(frozen=True, eq=False)
class Representation:
    """Unitary representation through the images φ_u(B_k) of the algebra basis."""

    group: str
    dim: int
    algebra_images: tuple
    label: str = ""
    spins: tuple = ()
    weights: Optional[np.ndarray] = None

    def __post_init__(self):
        for img in self.algebra_images:
            if img.shape != (self.dim, self.dim):
                raise DimensionMismatchError(f"algebra image of shape {img.shape} in a {self.dim}-dim representation")
            if max_abs(img + img.conj().T) > 1e-12 * max(1.0, max_abs(img)):
                raise ValueError("algebra images must be anti-Hermitian")
        residual = homomorphism_residual(self)
        if residual > HOMOMORPHISM_TOL:
            raise InconsistencyError(f"algebra map is not a homomorphism (residual {residual:.3e})")

    @property
    def algebra_dim(self) -> int:
        return len(self.algebra_images)

    @property
    def max_spin(self) -> float:
        return max(self.spins) if self.spins else 0.0

    def algebra_map(self, coeffs: ArrayLike) -> np.ndarray:
        return np.einsum("k,kij->ij", np.asarray(coeffs, dtype=float), np.asarray(self.algebra_images))

    @cached_property
    def center_image(self) -> np.ndarray:
        """u(−I) for SU(2): ±1 on integer/half-integer spin blocks."""
        return expm_skew(self.algebra_map([0.0, 0.0, 2 * math.pi]))

    def images(self, gs: ArrayLike) -> np.ndarray:
        """u(g) for a stack of defining-representation elements."""
        gs = np.asarray(gs, dtype=complex)
        single = gs.ndim == 2
        gs = gs[None] if single else gs
        if self.group == TORUS:
            theta = np.angle(np.diagonal(gs, axis1=-2, axis2=-1))
            phases = np.exp(1j * theta @ np.asarray(self.weights, dtype=float).T)
            out = phases[..., :, None] * np.eye(self.dim)
        else:
            a0, _ = su2_coordinates(gs)
            flip = a0 < 0
            gs = np.where(flip[:, None, None], -gs, gs)
            coeffs = su2_log(gs)
            out = expm_skew(np.einsum("nk,kij->nij", coeffs, np.asarray(self.algebra_images)))
            out = np.where(flip[:, None, None], self.center_image @ out, out)
        return out[0] if single else out

    def image(self, g: ArrayLike) -> np.ndarray:
        return self.images(np.asarray(g))


def _structure_coordinates(group: str, basis: Sequence[np.ndarray], i: int, j: int) -> np.ndarray:
    bracket = basis[i] @ basis[j] - basis[j] @ basis[i]
    return np.array([inner_product(group, b, bracket) for b in basis])


def homomorphism_residual(rep: Representation) -> float:
    """max ‖[φ(B_i), φ(B_j)] − φ([B_i, B_j])‖ over basis pairs."""
    d = 1 if rep.group == SU2 else rep.algebra_dim
    basis = algebra_basis(rep.group, d)
    if len(basis) != rep.algebra_dim:
        raise DimensionMismatchError(f"{rep.group} algebra has dimension {len(basis)}, got {rep.algebra_dim} images")
    imgs = rep.algebra_images
    worst = 0.0
    for i in range(len(imgs)):
        for j in range(i + 1, len(imgs)):
            lhs = imgs[i] @ imgs[j] - imgs[j] @ imgs[i]
            rhs = np.einsum("k,kab->ab", _structure_coordinates(rep.group, basis, i, j), np.asarray(imgs))
            worst = max(worst, max_abs(lhs - rhs))
    return worst


def spin_matrices(j: float):
    """Angular momentum matrices J_x, J_y, J_z in the basis m = j, j−1, ..., −j."""
    two_j = 2 * j
    if two_j < 0 or not math.isclose(two_j, round(two_j), abs_tol=1e-12):
        raise ValueError(f"spin must be a non-negative half-integer, got {j}")
    dim = int(round(two_j)) + 1
    m = j - np.arange(dim)
    jp = np.zeros((dim, dim), dtype=complex)
    for k in range(1, dim):
        jp[k - 1, k] = math.sqrt(j * (j + 1) - m[k] * (m[k] + 1))
    jx = (jp + jp.T) / 2
    jy = (jp - jp.T) / 2j
    jz = np.diag(m).astype(complex)
    return jx, jy, jz


def su2_spin_representation(j: float) -> Representation:
    """Spin-j irreducible representation: φ(−iσ_k/2) = −iJ_k."""
    if j > MAX_SPIN:
        raise ValueError(f"spins above {MAX_SPIN} are not supported, got {j}")
    jx, jy, jz = spin_matrices(j)
    return Representation(
        group=SU2,
        dim=jx.shape[0],
        algebra_images=(-1j * jx, -1j * jy, -1j * jz),
        label=f"spin-{j:g}",
        spins=(float(j),),
    )


def torus_representation(weights: ArrayLike) -> Representation:
    """Diagonal representation θ ↦ diag(exp(i w_a·θ)) for integer weight rows w_a."""
    w = np.atleast_2d(np.asarray(weights))
    if not np.allclose(w, np.round(w)):
        raise ValueError("torus weights must be integers")
    w = np.round(w).astype(int)
    n, d = w.shape
    if d > MAX_TORUS_DIM:
        raise ValueError(f"tori of dimension above {MAX_TORUS_DIM} are not supported, got {d}")
    images = tuple(1j * np.diag(w[:, k]).astype(complex) for k in range(d))
    return Representation(group=TORUS, dim=n, algebra_images=images, label=f"torus weights {w.tolist()}", weights=w)


def _coupled_spins(j1: float, j2: float) -> List[float]:
    return [abs(j1 - j2) + k for k in range(int(round(min(2 * j1, 2 * j2))) + 1)]


def direct_sum(r1: Representation, r2: Representation) -> Representation:
    if r1.group != r2.group or r1.algebra_dim != r2.algebra_dim:
        raise DimensionMismatchError("direct sums need representations of the same group")
    images = tuple(block_diag(a, b) for a, b in zip(r1.algebra_images, r2.algebra_images))
    weights = None if r1.weights is None else np.vstack([r1.weights, r2.weights])
    return Representation(r1.group, r1.dim + r2.dim, images, f"({r1.label}) + ({r2.label})", r1.spins + r2.spins, weights)


def tensor_product(r1: Representation, r2: Representation) -> Representation:
    if r1.group != r2.group or r1.algebra_dim != r2.algebra_dim:
        raise DimensionMismatchError("tensor products need representations of the same group")
    e1, e2 = np.eye(r1.dim), np.eye(r2.dim)
    images = tuple(np.kron(a, e2) + np.kron(e1, b) for a, b in zip(r1.algebra_images, r2.algebra_images))
    spins = tuple(s for a in r1.spins for b in r2.spins for s in _coupled_spins(a, b))
    weights = None
    if r1.weights is not None:
        weights = (r1.weights[:, None, :] + r2.weights[None, :, :]).reshape(-1, r1.weights.shape[1])
    return Representation(r1.group, r1.dim * r2.dim, images, f"({r1.label}) x ({r2.label})", spins, weights)


###############################################################################
# HORIZONTAL SYSTEMS
###############################################################################

@dataclass(frozen=True, eq=False)
class HorizontalSystem:
    """Directions X_1..X_s as coordinate rows in the orthonormal algebra basis."""

    group: str
    algebra_dim: int
    coefficients: np.ndarray
    labels: tuple = ()

    def __post_init__(self):
        c = self.coefficients
        if c.ndim != 2 or c.shape[1] != self.algebra_dim or c.shape[0] == 0:
            raise DimensionMismatchError(f"direction coefficients must be s x {self.algebra_dim}, got {c.shape}")
        if np.linalg.svd(c, compute_uv=False)[-1] <= RANK_TOL:
            raise ValueError("directions must be linearly independent")

    @property
    def s(self) -> int:
        return self.coefficients.shape[0]

    @property
    def basis(self) -> tuple:
        return algebra_basis(self.group, self.algebra_dim)

    @property
    def defining_dim(self) -> int:
        return 2 if self.group == SU2 else self.algebra_dim

    def _matrices(self, coeffs: np.ndarray) -> tuple:
        basis = np.asarray(self.basis)
        return tuple(np.einsum("k,kij->ij", row, basis) for row in coeffs)

    @property
    def directions(self) -> tuple:
        return self._matrices(self.coefficients)

    @cached_property
    def orthonormal_coefficients(self) -> np.ndarray:
        # Gram-Schmidt on the rows keeps span{X_1..X_k} for every k
        q, r = np.linalg.qr(self.coefficients.T)
        return (q * np.sign(np.diag(r))).T

    @property
    def orthonormal_directions(self) -> tuple:
        return self._matrices(self.orthonormal_coefficients)

    @cached_property
    def gram(self) -> np.ndarray:
        return self.coefficients @ self.coefficients.T

    @property
    def is_orthonormal(self) -> bool:
        return bool(np.allclose(self.gram, np.eye(self.s), atol=1e-12))

    @cached_property
    def basis_change_constant(self) -> float:
        """σ_min(C)²: the factor relating L_X to the generator of the orthonormalized set."""
        if self.is_orthonormal:
            return 1.0
        return float(np.linalg.svd(self.coefficients, compute_uv=False)[-1] ** 2)

    def identity(self) -> np.ndarray:
        return identity_element(self.group, self.algebra_dim)


def su2_system(directions: Sequence) -> HorizontalSystem:
    """Directions given as labels "X", "Y", "Z" or as coordinate triples."""
    rows, labels = [], []
    for item in directions:
        if isinstance(item, str):
            key = item.strip().upper()
            if key not in DIRECTION_LABELS:
                raise ConfigurationError(f"unknown su(2) direction '{item}'")
            rows.append(np.eye(3)[DIRECTION_LABELS[key]])
            labels.append(key)
        else:
            rows.append(np.asarray(item, dtype=float))
            labels.append(str(list(item)))
    return HorizontalSystem(SU2, 3, np.array(rows, dtype=float), tuple(labels))


def torus_system(d: int, directions: Sequence[Sequence[float]]) -> HorizontalSystem:
    if not 1 <= d <= MAX_TORUS_DIM:
        raise ConfigurationError(f"torus dimension must be in 1..{MAX_TORUS_DIM}, got {d}")
    rows = np.array(directions, dtype=float).reshape(-1, d)
    return HorizontalSystem(TORUS, d, rows, tuple(str(r.tolist()) for r in rows))


###############################################################################
# HORMANDER CONDITION
###############################################################################

class HormanderResult(NamedTuple):
    is_hormander: bool
    depth: Optional[int]


def _real_coordinates(a: np.ndarray) -> np.ndarray:
    return np.concatenate([a.real.ravel(), a.imag.ravel()])


def hormander_check(h: HorizontalSystem, max_depth: Optional[int] = None) -> HormanderResult:
    """First bracket depth at which X and its iterated brackets span the algebra."""
    max_depth = max_depth or h.algebra_dim
    if max_depth < 1:
        raise ValueError(f"max_depth must be >= 1, got {max_depth}")

    span: List[np.ndarray] = []

    def absorb(candidates):
        kept = []
        for c in candidates:
            trial = np.array([_real_coordinates(m) for m in span + [c]])
            if np.linalg.matrix_rank(trial, tol=RANK_TOL) > len(span):
                span.append(c)
                kept.append(c)
        return kept

    level = absorb(list(h.directions))
    if len(span) == h.algebra_dim:
        return HormanderResult(True, 1)
    for depth in range(2, max_depth + 1):
        brackets = [x @ y - y @ x for x in h.directions for y in level]
        level = absorb(brackets)
        if len(span) == h.algebra_dim:
            return HormanderResult(True, depth)
        if not level:
            break
    return HormanderResult(False, None)


###############################################################################
# TRANSFERENCE
###############################################################################

def _check_pair(rep: Representation, h: HorizontalSystem) -> None:
    if rep.group != h.group or rep.algebra_dim != h.algebra_dim:
        raise DimensionMismatchError(
            f"representation of {rep.group} (algebra dim {rep.algebra_dim}) does not match "
            f"system on {h.group} (algebra dim {h.algebra_dim})"
        )


def transfer_lindbladian(rep: Representation, h: HorizontalSystem) -> List[ComplexMatrix]:
    """Jumps a_k = −i·φ_u(X_k), so that u(exp(tX_k)) = e^{i t a_k}."""
    _check_pair(rep, h)
    return [hermitian(-1j * rep.algebra_map(row), f"a_{k}") for k, row in enumerate(h.coefficients)]


def intertwining_residual(
    rep: Representation,
    h: HorizontalSystem,
    g: ArrayLike,
    x: ArrayLike,
    k: int,
    step: float = 1e-5,
) -> float:
    """‖d/dt u(e^{tX_k}g)† x u(e^{tX_k}g)|₀ + i u(g)†[a_k, x]u(g)‖ by central differences."""
    _check_pair(rep, h)
    xm = as_matrix(x, "x")
    a = transfer_lindbladian(rep, h)[k]
    row = h.coefficients[k]

    def pulled_back(t):
        u = rep.image(group_exp(h.group, t * row, h.algebra_dim) @ g)
        return u.conj().T @ xm @ u

    derivative = (pulled_back(step) - pulled_back(-step)) / (2 * step)
    u = rep.image(g)
    expected = -1j * u.conj().T @ (a @ xm - xm @ a) @ u
    return max_abs(derivative - expected)


###############################################################################
# HAAR MEASURE
###############################################################################

def haar_sample(group: str, count: int, rng: np.random.Generator, d: int = 1) -> np.ndarray:
    """Haar-random elements in the defining representation."""
    if group == TORUS:
        theta = rng.uniform(0.0, 2 * math.pi, size=(count, d))
        return np.exp(1j * theta)[..., :, None] * np.eye(d)
    q = rng.standard_normal((count, 4))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    g = np.empty((count, 2, 2), dtype=complex)
    g[:, 0, 0] = q[:, 0] - 1j * q[:, 3]
    g[:, 0, 1] = -q[:, 2] - 1j * q[:, 1]
    g[:, 1, 0] = q[:, 2] - 1j * q[:, 1]
    g[:, 1, 1] = q[:, 0] + 1j * q[:, 3]
    return g


def _torus_grid_size(rep: Representation, n_quad: int) -> np.ndarray:
    w = np.asarray(rep.weights)
    spread = w.max(axis=0) - w.min(axis=0)
    base = max(1, int(round(n_quad ** (1.0 / w.shape[1]))))
    return np.maximum(base, spread + 1)


def haar_twirl(
    rep: Representation,
    x: ArrayLike,
    n_quad: int,
    seed: int = 0,
    max_workers: Optional[int] = None,
) -> ComplexMatrix:
    """∫ u(g)† x u(g) dg.

    SU(2): Monte Carlo over uniform S³ samples, sharded with per-shard seeds.
    Torus: product grid, exact for the trigonometric polynomials the weights produce.
    """
    if n_quad < 1:
        raise ValueError(f"n_quad must be >= 1, got {n_quad}")
    xm = as_matrix(x, "x")
    if xm.shape[0] != rep.dim:
        raise DimensionMismatchError(f"representation has dimension {rep.dim}, got a {xm.shape[0]}x{xm.shape[0]} matrix")

    if rep.group == TORUS:
        w = np.asarray(rep.weights)
        grid = _torus_grid_size(rep, n_quad)
        delta = w[None, :, :] - w[:, None, :]  # w_b − w_a
        factor = np.ones(delta.shape[:2], dtype=complex)
        for k, size in enumerate(grid):
            angles = 2 * math.pi * np.arange(size) / size
            factor *= np.exp(1j * delta[..., k, None] * angles).mean(axis=-1)
        return xm * factor

    shards = [HAAR_CHUNK] * (n_quad // HAAR_CHUNK)
    if n_quad % HAAR_CHUNK:
        shards.append(n_quad % HAAR_CHUNK)
    seeds = np.random.SeedSequence(seed).spawn(len(shards))

    def shard_sum(args):
        count, child = args
        u = rep.images(haar_sample(SU2, count, np.random.default_rng(child)))
        return np.einsum("nba,bc,ncd->ad", u.conj(), xm, u)

    with ThreadPoolExecutor(max_workers=max_workers) as executor:
        partial = list(executor.map(shard_sum, zip(shards, seeds)))
    return sum(partial) / n_quad


def build_system(config) -> tuple:
    """(HorizontalSystem, Representation) from a validated SystemConfig."""
    if config.group == SU2:
        rep = su2_spin_representation(config.spin)
        for extra in config.extra_spins:
            rep = direct_sum(rep, su2_spin_representation(extra))
        return su2_system(config.directions), rep
    return torus_system(config.d, config.directions), torus_representation(config.weights)

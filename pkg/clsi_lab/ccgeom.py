"""Carnot–Carathéodory distances on SU(2) and tori by horizontal-path optimization.

A path has K piecewise-constant segments. Segment i moves with velocity v_i in the
orthonormalized horizontal directions for unit time, so its length is |v_i| and the
endpoint is Π_i exp(Σ_k v_ik X_k). Every returned length belongs to a feasible path and
is therefore an upper bound on the true distance.
"""
import itertools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from numpy.typing import ArrayLike
from scipy.optimize import least_squares, minimize
from tqdm import tqdm

from clsi_lab.errors import DimensionMismatchError, UnreachedTargetError
from clsi_lab.liegroup import (
    SU2,
    TORUS,
    HorizontalSystem,
    group_exp,
    group_inverse,
    haar_sample,
    hormander_check,
    su2_log,
)

log = logging.getLogger(__name__)


###############################################################################
# GLOBALS
###############################################################################

PENALTY_SCHEDULE = (1e1, 1e2, 1e3, 1e4, 1e5, 1e6)
FEASIBILITY_TOL = 1e-8  # on ‖endpoint − target‖²_F
SMOOTHING = 1e-4
N_RESTARTS = 3


###############################################################################
# PATHS
###############################################################################

def path_endpoint(h: HorizontalSystem, controls: ArrayLike) -> np.ndarray:
    """Π_i exp(Σ_k v_ik X_k) in the defining representation."""
    v = np.atleast_2d(np.asarray(controls, dtype=float))
    coeffs = v @ h.orthonormal_coefficients
    if h.group == TORUS:
        return np.diag(np.exp(1j * coeffs.sum(axis=0)))

    # exp(A) = cos ω I + (sin ω / ω) A for A = −i (c/2)·σ, ω = |c|/2
    a = np.einsum("kc,cij->kij", coeffs, np.asarray(h.basis))
    omega = np.linalg.norm(coeffs, axis=1) / 2
    safe = np.where(omega > 1e-8, omega, 1.0)
    sinc = np.where(omega > 1e-8, np.sin(omega) / safe, 1 - omega ** 2 / 6)
    segments = np.cos(omega)[:, None, None] * np.eye(2) + sinc[:, None, None] * a
    out = np.eye(2, dtype=complex)
    for seg in segments:
        out = out @ seg
    return out


@dataclass(frozen=True)
class HorizontalPath:
    controls: np.ndarray  # K × s, row i is τ_i λ_i

    @property
    def K(self) -> int:
        return self.controls.shape[0]

    @property
    def durations(self) -> np.ndarray:
        return np.linalg.norm(self.controls, axis=1)

    @property
    def unit_controls(self) -> np.ndarray:
        d = self.durations
        return np.divide(self.controls, d[:, None], out=np.zeros_like(self.controls), where=d[:, None] > 0)

    @property
    def length(self) -> float:
        return float(self.durations.sum())

    def endpoint(self, h: HorizontalSystem) -> np.ndarray:
        return path_endpoint(h, self.controls)

    def refine(self) -> "HorizontalPath":
        """Split every segment in two; endpoint and length are unchanged."""
        return HorizontalPath(np.repeat(self.controls / 2, 2, axis=0))

    def to_dict(self) -> dict:
        return {"durations": self.durations.tolist(), "controls": self.unit_controls.tolist()}


def lift_path(path: HorizontalPath, sub: HorizontalSystem, system: HorizontalSystem) -> HorizontalPath:
    """Re-express a path of a sub-system in the directions of a larger system."""
    if sub.group != system.group or sub.algebra_dim != system.algebra_dim:
        raise DimensionMismatchError("paths can only be lifted between systems on the same group")
    velocity = path.controls @ sub.orthonormal_coefficients
    lifted = velocity @ system.orthonormal_coefficients.T
    if np.max(np.abs(lifted @ system.orthonormal_coefficients - velocity), initial=0.0) > 1e-10:
        raise DimensionMismatchError("sub-system directions are not contained in the larger system")
    return HorizontalPath(lifted)


def squared_residual(h: HorizontalSystem, path: HorizontalPath, target: np.ndarray) -> float:
    r = path.endpoint(h) - target
    return float(np.real(np.vdot(r, r)))


###############################################################################
# DISTANCE
###############################################################################

def _principal_coordinates(h: HorizontalSystem, target: np.ndarray) -> np.ndarray:
    if h.group == TORUS:
        return np.angle(np.diag(target))
    return su2_log(target)


def _initial_guesses(h, target, K, rng, warm_start):
    s = h.s
    straight = h.orthonormal_coefficients @ _principal_coordinates(h, target)
    guesses = [np.tile(straight / K, (K, 1))]
    if warm_start is not None:
        guesses.append(warm_start.controls)
    for _ in range(N_RESTARTS):
        guesses.append(rng.normal(scale=math.pi / K, size=(K, s)))
    return guesses


def _solve_from(h, target, guess, opt_budget):
    K, s = guess.shape

    def penalized(x, mu):
        v = x.reshape(K, s)
        smooth = np.sum(np.sqrt(np.sum(v ** 2, axis=1) + SMOOTHING ** 2)) - K * SMOOTHING
        r = path_endpoint(h, v) - target
        return smooth + mu * float(np.real(np.vdot(r, r)))

    def residual(x):
        r = (path_endpoint(h, x.reshape(K, s)) - target).ravel()
        return np.concatenate([r.real, r.imag])

    x = guess.ravel().astype(float)
    for mu in PENALTY_SCHEDULE:
        x = minimize(penalized, x, args=(mu,), method="L-BFGS-B", options={"maxiter": opt_budget}).x
    # restore the endpoint exactly with a small correction
    x = least_squares(residual, x, method="trf", xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=50 * (x.size + 1)).x
    path = HorizontalPath(x.reshape(K, s))
    return path, squared_residual(h, path, target)


def cc_distance_upper(
    h: HorizontalSystem,
    target: ArrayLike,
    K: int = 12,
    opt_budget: int = 200,
    seed: int = 0,
    warm_start: Optional[HorizontalPath] = None,
) -> Tuple[float, HorizontalPath]:
    """Shortest feasible path found from the identity to target.

    A feasible warm start caps the result: the returned length never exceeds it.
    """
    depth = hormander_check(h)
    if not depth.is_hormander:
        raise ValueError("directions do not satisfy the Hörmander condition; the distance is infinite")
    if K < 2 * depth.depth:
        raise ValueError(f"need at least {2 * depth.depth} segments for bracket depth {depth.depth}, got K={K}")
    target = np.asarray(target, dtype=complex)
    if target.shape != (h.defining_dim, h.defining_dim):
        raise DimensionMismatchError(f"target must be {h.defining_dim}x{h.defining_dim}, got {target.shape}")
    if warm_start is not None and warm_start.K != K:
        raise DimensionMismatchError(f"warm start has {warm_start.K} segments, expected {K}")

    rng = np.random.default_rng(seed)
    best: Optional[HorizontalPath] = None
    best_residual = math.inf
    for guess in _initial_guesses(h, target, K, rng, warm_start):
        path, res = _solve_from(h, target, guess, opt_budget)
        best_residual = min(best_residual, res)
        if res <= FEASIBILITY_TOL and (best is None or path.length < best.length):
            best = path

    if warm_start is not None and squared_residual(h, warm_start, target) <= FEASIBILITY_TOL:
        if best is None or warm_start.length <= best.length:
            best = warm_start
    if best is None:
        raise UnreachedTargetError(f"no path met the endpoint tolerance (best residual {best_residual:.3e})", best_residual)
    return best.length, best


def cc_distance_between(h: HorizontalSystem, g: ArrayLike, k: ArrayLike, **kwargs) -> Tuple[float, HorizontalPath]:
    """d(g, k) = d(e, g⁻¹k) by left invariance."""
    return cc_distance_upper(h, group_inverse(g) @ np.asarray(k), **kwargs)


###############################################################################
# DIAMETER
###############################################################################

@dataclass
class TargetResult:
    label: str
    length: float
    residual: float

    def to_dict(self) -> dict:
        return {"label": self.label, "length": self.length, "residual": self.residual}


@dataclass
class DiameterEstimate:
    d_x: float
    targets: List[TargetResult] = field(default_factory=list)
    K: int = 0
    seed: int = 0

    @property
    def argmax(self) -> TargetResult:
        return max(self.targets, key=lambda t: t.length)

    def to_dict(self) -> dict:
        return {
            "d_x": self.d_x,
            "K": self.K,
            "seed": self.seed,
            "upper_bound": True,
            "targets": [t.to_dict() for t in self.targets],
        }


def structured_targets(h: HorizontalSystem) -> List[Tuple[str, np.ndarray]]:
    """Candidates where diameters of symmetric spaces tend to be attained."""
    if h.group == SU2:
        out = [("-I", -np.eye(2, dtype=complex))]
        for phi in (math.pi / 2, math.pi, 3 * math.pi / 2):
            out.append((f"exp({phi:.4f} e_z)", group_exp(SU2, [0.0, 0.0, phi])))
        return out
    out = []
    for signs in itertools.product((1.0, -1.0), repeat=h.algebra_dim):
        if all(s > 0 for s in signs):
            continue
        out.append((f"diag{tuple(int(s) for s in signs)}", np.diag(np.array(signs, dtype=complex))))
    return out


def cc_diameter(
    h: HorizontalSystem,
    n_targets: int = 64,
    K: int = 12,
    opt_budget: int = 200,
    seed: int = 0,
    max_workers: Optional[int] = None,
    progress: bool = False,
    extra_targets: Sequence[Tuple[str, np.ndarray]] = (),
) -> DiameterEstimate:
    """max over structured and Haar-sampled targets of cc_distance_upper."""
    children = np.random.SeedSequence(seed).spawn(2)
    haar = haar_sample(h.group, n_targets, np.random.default_rng(children[0]), h.algebra_dim)
    targets = list(structured_targets(h)) + list(extra_targets)
    targets += [(f"haar[{i}]", g) for i, g in enumerate(haar)]
    seeds = children[1].spawn(len(targets))

    def run(item):
        (label, g), child = item
        rng_seed = int(np.random.default_rng(child).integers(2 ** 31))
        try:
            length, path = cc_distance_upper(h, g, K=K, opt_budget=opt_budget, seed=rng_seed)
        except UnreachedTargetError as e:
            raise UnreachedTargetError(f"target {label}: {e}", e.residual) from e
        return TargetResult(label, length, squared_residual(h, path, g))

    with ThreadPoolExecutor(max_workers=max_workers) as executor:
        rows = list(tqdm(
            executor.map(run, zip(targets, seeds)),
            total=len(targets),
            desc="CC targets",
            disable=not progress,
        ))

    estimate = DiameterEstimate(d_x=max(r.length for r in rows), targets=rows, K=K, seed=seed)
    log.info(f"CC diameter upper bound {estimate.d_x:.6g} attained at {estimate.argmax.label}")
    return estimate

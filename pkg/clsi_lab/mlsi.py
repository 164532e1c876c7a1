"""Numerical MLSI/CLSI estimates and decay verification.

Convention: λ = inf I(ρ) / (2 D(ρ‖E_Nρ)), so 2λD ≤ I and D(T_tρ‖E_Nρ) ≤ e^{−2λt} D(ρ‖E_Nρ).
The factor-free convention λD ≤ I is reported alongside as lambda_d = 2·lambda_est.
Estimates are infima over finitely many states, hence upper bounds on the true constant.
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
from numpy.typing import ArrayLike
from scipy.optimize import minimize

from clsi_lab.entropy import decay_curve, entropy_production, relative_entropy
from clsi_lab.errors import ClsiLabError, InconsistencyError, NearFixedPointError
from clsi_lab.fixedpoint import CommutantBasis, commutant_basis, conditional_expectation
from clsi_lab.lindblad import LindbladGenerator, amplify, spectral_gap
from clsi_lab.linalg import density, matrix_to_json, random_density, unvec

log = logging.getLogger(__name__)


###############################################################################
# GLOBALS
###############################################################################

NEAR_FIXED_TOL = 1e-12
OBJECTIVE_D_FLOOR = 1e-8
GAP_SLACK = 0.05
LINEARIZATION_SCALE = 2e-3
CONVENTION = "2D"

# fractions of Hilbert–Schmidt, pure and near-fixed-point samples
ENSEMBLE_MIX = (0.5, 0.3, 0.2)


###############################################################################
# RATIO
###############################################################################

def mlsi_ratio(gen: LindbladGenerator, rho: ArrayLike, basis: Optional[CommutantBasis] = None) -> float:
    """I(ρ) / (2 D(ρ‖E_Nρ))."""
    basis = basis or commutant_basis(gen)
    state = density(rho)
    sigma = density(conditional_expectation(basis, state), "E_N(rho)")
    d = relative_entropy(state, sigma)
    if d <= NEAR_FIXED_TOL:
        raise NearFixedPointError(f"D(rho‖E_N rho) = {d:.3e} is too small for a stable ratio")
    return entropy_production(gen, state) / (2 * d)


def _ratio_or_none(gen, rho, basis) -> Optional[float]:
    """Ratio, or None when D is below the optimizer floor or the evaluation fails."""
    try:
        state = density(rho)
        sigma = density(conditional_expectation(basis, state), "E_N(rho)")
        d = relative_entropy(state, sigma)
        if d < OBJECTIVE_D_FLOOR:
            return None
        return entropy_production(gen, state) / (2 * d)
    except (ClsiLabError, ValueError):
        return None


###############################################################################
# ESTIMATE
###############################################################################

@dataclass
class MlsiEstimate:
    lambda_est: float
    ancilla_dim: int
    argmin_state: np.ndarray
    samples_used: int
    optimizer_iterations: int
    gap: float
    converged: bool = True
    convention_flag: str = CONVENTION

    @property
    def lambda_d(self) -> float:
        """Same infimum under the factor-free convention λD ≤ I."""
        return 2 * self.lambda_est

    def to_dict(self) -> dict:
        return {
            "lambda_est": self.lambda_est,
            "lambda_d": self.lambda_d,
            "convention_flag": self.convention_flag,
            "ancilla_dim": self.ancilla_dim,
            "gap": self.gap,
            "samples_used": self.samples_used,
            "optimizer_iterations": self.optimizer_iterations,
            "converged": self.converged,
            "argmin_state": matrix_to_json(self.argmin_state),
        }


def near_identity_state(gen: LindbladGenerator) -> np.ndarray:
    """I/N + εX with X a Hermitian eigenvector of the gap; its ratio tends to the gap as ε → 0."""
    n = gen.dim
    w, v = gen.spectrum
    gap = spectral_gap(gen)
    k = int(np.flatnonzero(np.isclose(w, gap, rtol=1e-9, atol=0.0))[0])
    vec_matrix = unvec(v[:, k], n)
    x = (vec_matrix + vec_matrix.conj().T) / 2
    if np.linalg.norm(x) < 1e-6:
        x = (vec_matrix - vec_matrix.conj().T) / 2j
    x /= np.linalg.norm(x, 2)
    return np.eye(n) / n + (LINEARIZATION_SCALE / n) * x


def _draw_state(kind: str, n: int, basis: CommutantBasis, rng: np.random.Generator) -> np.ndarray:
    if kind == "hs":
        return random_density(n, rng)
    if kind == "pure":
        return random_density(n, rng, rank=1)
    sigma0 = conditional_expectation(basis, random_density(n, rng))
    sigma0 = (sigma0 + sigma0.conj().T) / 2
    eps = 10 ** rng.uniform(-2.0, -0.5)
    return (1 - eps) * sigma0 + eps * random_density(n, rng)


def _ensemble_kinds(n_samples: int) -> List[str]:
    n_hs = int(round(ENSEMBLE_MIX[0] * n_samples))
    n_pure = int(round(ENSEMBLE_MIX[1] * n_samples))
    n_near = max(n_samples - n_hs - n_pure, 0)
    return ["hs"] * n_hs + ["pure"] * n_pure + ["near"] * n_near


def _to_params(rho: np.ndarray) -> np.ndarray:
    w, u = np.linalg.eigh((rho + rho.conj().T) / 2)
    g = u * np.sqrt(np.clip(w, 0.0, None))
    return np.concatenate([g.real.ravel(), g.imag.ravel()])


def _from_params(x: np.ndarray, n: int) -> np.ndarray:
    g = x[: n * n].reshape(n, n) + 1j * x[n * n:].reshape(n, n)
    rho = g @ g.conj().T
    rho = (rho + rho.conj().T) / 2
    return rho / np.real(np.trace(rho))


def _local_search(gen, basis, rho, start_value, opt_budget, penalty):
    n = gen.dim

    def objective(x):
        value = _ratio_or_none(gen, _from_params(x, n), basis)
        return penalty if value is None else value

    result = minimize(objective, _to_params(rho), method="L-BFGS-B", options={"maxiter": opt_budget})
    if result.fun < start_value:
        return float(result.fun), _from_params(result.x, n), int(result.nit), bool(result.success)
    return start_value, rho, int(result.nit), bool(result.success)


def estimate_mlsi(
    gen: LindbladGenerator,
    m: int = 1,
    n_samples: int = 100,
    opt_budget: int = 20,
    seed: int = 0,
    n_starts: Optional[int] = None,
    max_workers: Optional[int] = None,
) -> MlsiEstimate:
    """Smallest ratio found over sampled and locally refined states on M_{nm}.

    Deterministic for a fixed seed: each sample has its own generator spawned from
    the seed, and reductions keep the lowest index on ties.
    """
    if m < 1:
        raise ValueError(f"ancilla dimension must be >= 1, got {m}")
    lifted = amplify(gen, m)
    n = lifted.dim
    basis = commutant_basis(lifted)
    basis.projector
    gap = spectral_gap(lifted)

    kinds = _ensemble_kinds(n_samples)
    rngs = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(len(kinds))]
    candidates = [near_identity_state(lifted)]
    candidates += [_draw_state(kind, n, basis, rng) for kind, rng in zip(kinds, rngs)]

    if m > 1:
        base = estimate_mlsi(gen, 1, n_samples, opt_budget, seed, n_starts, max_workers)
        candidates.append(np.kron(base.argmin_state, np.eye(m) / m))

    with ThreadPoolExecutor(max_workers=max_workers) as executor:
        values = list(executor.map(lambda r: _ratio_or_none(lifted, r, basis), candidates))

    scored = [(v, i) for i, v in enumerate(values) if v is not None]
    if not scored:
        raise InconsistencyError("no sampled state produced a finite ratio")
    scored.sort()
    best_value, best_index = scored[0]
    best_state = candidates[best_index]

    iterations = 0
    converged = True
    if opt_budget > 0:
        starts = scored[: n_starts or max(1, math.ceil(n_samples / 10))]
        penalty = 1e3 * max(gap, 1.0)
        with ThreadPoolExecutor(max_workers=max_workers) as executor:
            refined = list(executor.map(
                lambda vi: _local_search(lifted, basis, candidates[vi[1]], vi[0], opt_budget, penalty),
                starts,
            ))
        for value, state, nit, success in refined:
            iterations += nit
            converged = converged and success
            if value < best_value:
                best_value, best_state = value, state

    if best_value > gap * (1 + GAP_SLACK):
        raise InconsistencyError(f"estimate {best_value:.6g} exceeds the spectral gap {gap:.6g}")
    if not converged:
        log.warning("local searches hit the iteration budget before stabilizing")

    log.info(f"MLSI estimate (m={m}): {best_value:.6g} [{CONVENTION}], {2 * best_value:.6g} [D], gap {gap:.6g}")
    return MlsiEstimate(
        lambda_est=float(best_value),
        ancilla_dim=m,
        argmin_state=best_state,
        samples_used=len(candidates),
        optimizer_iterations=iterations,
        gap=gap,
        converged=converged,
    )


###############################################################################
# DECAY VERIFICATION
###############################################################################

@dataclass
class DecayVerification:
    max_violation: float
    witness_state: Optional[int]
    witness_time: Optional[float]
    exponent_convention: str = "2lambda"
    violations: List[float] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.max_violation <= 1e-8

    def to_dict(self) -> dict:
        return {
            "max_violation": self.max_violation,
            "witness_state": self.witness_state,
            "witness_time": self.witness_time,
            "exponent_convention": self.exponent_convention,
        }


def verify_decay(
    gen: LindbladGenerator,
    lam: float,
    states: Sequence[ArrayLike],
    t_grid: Sequence[float],
    basis: Optional[CommutantBasis] = None,
    max_workers: Optional[int] = None,
) -> DecayVerification:
    """Largest D(T_tρ‖E_Nρ) − e^{−2λt} D(ρ‖E_Nρ) over states and grid times."""
    if lam <= 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    basis = basis or commutant_basis(gen)

    worst, witness_state, witness_time = -math.inf, None, None
    per_state = []
    for idx, rho in enumerate(states):
        curve = decay_curve(gen, rho, t_grid, basis, max_workers=max_workers)
        envelope = np.exp(-2 * lam * curve.times) * curve.entropies[0]
        excess = curve.entropies - envelope
        j = int(np.argmax(excess))
        per_state.append(float(excess[j]))
        if excess[j] > worst:
            worst, witness_state, witness_time = float(excess[j]), idx, float(curve.times[j])

    if worst > 1e-8:
        log.warning(f"decay bound violated by {worst:.3e} (state {witness_state}, t={witness_time:g})")
    return DecayVerification(
        max_violation=max(worst, 0.0) if per_state else 0.0,
        witness_state=witness_state,
        witness_time=witness_time,
        violations=per_state,
    )

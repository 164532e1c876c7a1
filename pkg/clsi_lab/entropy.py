"""Relative entropy, Fisher information and entropy decay along T_t."""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import numpy as np
from numpy.typing import ArrayLike

from clsi_lab.errors import InconsistencyError
from clsi_lab.fixedpoint import CommutantBasis, commutant_basis, conditional_expectation
from clsi_lab.lindblad import LindbladGenerator, apply, derivation, evolve
from clsi_lab.linalg import density, divided_difference_transform, eigh, matrix_function, same_dim

log = logging.getLogger(__name__)


###############################################################################
# GLOBALS
###############################################################################

SUPPORT_TOL = 1e-12
LEAK_TOL = 1e-10
REGULARIZATION_EPS = 1e-10
SINGULAR_TOL = 1e-12
FISHER_AGREEMENT_TOL = 1e-7
MONOTONE_TOL = 1e-10
H_RANGE = (1e-5, 1e-3)


###############################################################################
# RELATIVE ENTROPY
###############################################################################

def relative_entropy(rho: ArrayLike, sigma: ArrayLike) -> float:
    """D(ρ‖σ) = tr(ρ log ρ − ρ log σ) in nats, or math.inf when supp ρ ⊄ supp σ."""
    r = density(rho, "rho")
    s = density(sigma, "sigma")
    same_dim(r, s)

    ws, us = eigh(s)
    support = ws > SUPPORT_TOL
    kernel = us[:, ~support]
    if kernel.size:
        leak = float(np.real(np.trace(kernel.conj().T @ r @ kernel)))
        if leak > LEAK_TOL:
            return math.inf

    wr = np.linalg.eigvalsh(r)
    wr = wr[wr > 0]
    entropy_term = float(np.sum(wr * np.log(wr)))

    us_supp = us[:, support]
    log_sigma = (us_supp * np.log(ws[support])) @ us_supp.conj().T
    cross_term = float(np.real(np.trace(r @ log_sigma)))

    d = entropy_term - cross_term
    if d < -1e-9:
        log.warning(f"relative entropy came out negative ({d:.3e}); clamping to 0")
    return max(d, 0.0)


###############################################################################
# FISHER INFORMATION
###############################################################################

class FisherInformation(NamedTuple):
    value: float
    divided_difference_value: float
    regularized: bool


def fisher_information(gen: LindbladGenerator, rho: ArrayLike) -> FisherInformation:
    """I(ρ) = tr(L(ρ) log ρ), cross-checked against Σ_k tr(δ_k J^log_ρ(δ_k)).

    Singular states are replaced by (1 − ε)ρ + ε I/n before taking logs and the
    result carries regularized=True.
    """
    r = density(rho, "rho")
    n = r.shape[0]
    regularized = bool(np.linalg.eigvalsh(r)[0] < SINGULAR_TOL)
    if regularized:
        r = (1 - REGULARIZATION_EPS) * r + REGULARIZATION_EPS * np.eye(n) / n

    log_r = matrix_function(r, np.log, "log")
    trace_form = float(np.real(np.trace(apply(gen, r) @ log_r)))
    dd_form = 0.0
    for block in derivation(gen, r):
        dd_form += float(np.real(np.trace(block @ divided_difference_transform(r, block))))

    if abs(trace_form - dd_form) > FISHER_AGREEMENT_TOL * max(1.0, abs(trace_form)):
        raise InconsistencyError(f"Fisher information forms disagree: {trace_form:.12g} vs {dd_form:.12g}")
    return FisherInformation(trace_form, dd_form, regularized)


def entropy_production(gen: LindbladGenerator, rho: ArrayLike) -> float:
    return fisher_information(gen, rho).value


###############################################################################
# DECAY CURVES
###############################################################################

@dataclass
class DecayCurve:
    times: np.ndarray
    entropies: np.ndarray
    fisher: np.ndarray

    def __post_init__(self):
        jumps = np.diff(self.entropies)
        slack = MONOTONE_TOL * max(1.0, float(self.entropies[0]) if self.entropies.size else 1.0)
        if jumps.size and jumps.max() > slack:
            log.warning(f"entropy increased by {jumps.max():.3e} along the flow")

    def is_monotone(self, tol: float = MONOTONE_TOL) -> bool:
        return bool(np.all(np.diff(self.entropies) <= tol * max(1.0, float(self.entropies[0]))))

    def to_csv(self, path, lam: Optional[float] = None, exponent: float = 2.0) -> None:
        """Write t, D, I and, given λ, the predicted envelope e^{−exponent·λ·t}·D(0)."""
        columns = [self.times, self.entropies, self.fisher]
        header = "t,D,I"
        if lam is not None:
            columns.append(np.exp(-exponent * lam * self.times) * self.entropies[0])
            header += ",bound"
        np.savetxt(path, np.column_stack(columns), delimiter=",", header=header, comments="")


def decay_curve(
    gen: LindbladGenerator,
    rho: ArrayLike,
    t_grid: Sequence[float],
    basis: Optional[CommutantBasis] = None,
    max_workers: Optional[int] = None,
) -> DecayCurve:
    """D(T_tρ‖E_Nρ) and I(T_tρ) on an ascending grid starting at 0."""
    times = np.asarray(t_grid, dtype=float)
    if times.size == 0 or times[0] != 0 or np.any(np.diff(times) <= 0):
        raise ValueError("t_grid must be strictly ascending and start at 0")

    state = density(rho)
    basis = basis or commutant_basis(gen)
    sigma = density(conditional_expectation(basis, state), "E_N(rho)")
    gen.spectrum  # warm the cache before fanning out

    def point(t):
        rt = evolve(gen, state, t)
        return relative_entropy(rt, sigma), entropy_production(gen, rt)

    with ThreadPoolExecutor(max_workers=max_workers) as executor:
        results = list(executor.map(point, times))

    return DecayCurve(
        times=times,
        entropies=np.array([r[0] for r in results]),
        fisher=np.array([r[1] for r in results]),
    )


###############################################################################
# DE BRUIJN CHECK
###############################################################################

class DeBruijnOrder(NamedTuple):
    ratio: float
    constant: float


def de_bruijn_residual(
    gen: LindbladGenerator,
    rho: ArrayLike,
    t: float,
    h: float,
    basis: Optional[CommutantBasis] = None,
) -> float:
    """|(D(t+h) − D(t−h)) / 2h + I(T_tρ)|, which vanishes to second order in h."""
    if not H_RANGE[0] <= h <= H_RANGE[1]:
        log.warning(f"step h={h:g} is outside [{H_RANGE[0]:g}, {H_RANGE[1]:g}]; expect cancellation or truncation error")
    if t - h < 0:
        raise ValueError(f"need t >= h for a central difference, got t={t}, h={h}")

    state = density(rho)
    basis = basis or commutant_basis(gen)
    sigma = density(conditional_expectation(basis, state), "E_N(rho)")

    d_plus = relative_entropy(evolve(gen, state, t + h), sigma)
    d_minus = relative_entropy(evolve(gen, state, t - h), sigma)
    fisher = entropy_production(gen, evolve(gen, state, t))
    return abs((d_plus - d_minus) / (2 * h) + fisher)


def de_bruijn_order(gen: LindbladGenerator, rho: ArrayLike, t: float, h: float) -> DeBruijnOrder:
    """Richardson comparison: residual(h)/residual(h/2) ≈ 4 and C = residual(h)/h²."""
    basis = commutant_basis(gen)
    coarse = de_bruijn_residual(gen, rho, t, h, basis)
    fine = de_bruijn_residual(gen, rho, t, h / 2, basis)
    ratio = coarse / fine if fine > 0 else math.inf
    return DeBruijnOrder(ratio=ratio, constant=coarse / h ** 2)

"""Weighted unit interval: discrete Laplacian Δ_μ = δ*δ and (C)MLSI estimates.

Cells sit at x_i = (i + ½)/N so densities vanishing at 0 are never evaluated there.
Edges join neighbouring cells, plus cell N−1 to cell 0 when periodic; otherwise the
boundary is reflecting (Neumann). With μ_i = h(x_i)Δx/Z and κ_e = h_e/(ZΔx),

    Δ_μ = M⁻¹ Dᵀ K D,     E(f, g) = Σ_e κ_e (δf)_e (δg)_e,

which is self-adjoint in L₂(μ) and kills constants. Ratios use inf I/(2D).
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import cached_property
from tokenize import TokenError
from typing import Callable, List, NamedTuple, Optional, Union

import numpy as np
import sympy as sp
from numpy.typing import ArrayLike
from scipy.integrate import quad
from scipy.optimize import minimize, minimize_scalar
from scipy.special import erfc
from sympy.parsing.sympy_parser import convert_xor, parse_expr, standard_transformations

from clsi_lab.errors import ConfigurationError, DegenerateGeneratorError, InconsistencyError

log = logging.getLogger(__name__)


###############################################################################
# GLOBALS
###############################################################################

MIN_GRID = 16
ZERO_EIGEN_TOL = 1e-9
OBJECTIVE_D_FLOOR = 1e-10
GAP_SLACK = 0.05
LINEARIZATION_SCALE = 2e-3
DEGENERACY_TOL = 1e-12
MEASURE_GRID = 10001

# literature values on the unit interval with Lebesgue measure
REFERENCE_CONSTANTS = {
    "mlsi_closed_uniform": 4 * math.pi ** 2,
    "mlsi_open_uniform": math.pi ** 2,
    "clsi_open_uniform_lower": 0.2,
    "clsi_open_uniform_lower_sharp": math.pi ** 2 / math.log(3),
}

X = sp.Symbol("x", positive=True)
N_PARAM = sp.Symbol("n")
_ALLOWED = {"x": X, "n": N_PARAM, "exp": sp.exp, "log": sp.log, "sqrt": sp.sqrt, "pi": sp.pi, "E": sp.E}


def open_from_closed(value: float) -> float:
    """Constant on (0,1) from the one on [0,1] (symmetrization and periodization)."""
    return value / 4


###############################################################################
# DENSITIES
###############################################################################

class Density(NamedTuple):
    expr: sp.Expr
    func: Callable[[np.ndarray], np.ndarray]


def parse_density(text: str, n: Optional[float] = None) -> Density:
    """Parse "x^(n-1)", "exp(-x^2/2)", ... into a sympy expression and a numpy callable."""
    try:
        expr = parse_expr(text, local_dict=dict(_ALLOWED), transformations=standard_transformations + (convert_xor,))
    except (SyntaxError, TypeError, TokenError, sp.SympifyError) as e:
        raise ConfigurationError(f"cannot parse density '{text}': {e}") from e
    if N_PARAM in expr.free_symbols:
        if n is None:
            raise ConfigurationError(f"density '{text}' uses n but no value was given")
        expr = expr.subs(N_PARAM, n)
    unknown = expr.free_symbols - {X}
    if unknown:
        raise ConfigurationError(f"density '{text}' has unknown symbols {sorted(map(str, unknown))}")
    return Density(expr, _lambdify(expr))


def _lambdify(expr: sp.Expr) -> Callable[[np.ndarray], np.ndarray]:
    raw = sp.lambdify(X, expr, "numpy")

    def func(x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.broadcast_to(np.asarray(raw(x), dtype=float), x.shape).copy()

    return func


def _as_density(h) -> Optional[Density]:
    if isinstance(h, Density):
        return h
    if isinstance(h, str):
        return parse_density(h)
    if isinstance(h, sp.Expr):
        return Density(h, _lambdify(h))
    return None


###############################################################################
# WEIGHTED INTERVAL
###############################################################################

@dataclass(frozen=True, eq=False)
class WeightedInterval:
    grid: int
    periodic: bool
    points: np.ndarray
    cell_density: np.ndarray
    edge_density: np.ndarray

    @property
    def dx(self) -> float:
        return 1.0 / self.grid

    @cached_property
    def normalizer(self) -> float:
        return float(np.sum(self.cell_density) * self.dx)

    @cached_property
    def mass(self) -> np.ndarray:
        return self.cell_density * self.dx / self.normalizer

    @cached_property
    def conductance(self) -> np.ndarray:
        return self.edge_density / (self.normalizer * self.dx)

    @cached_property
    def edges(self):
        tails = np.arange(self.grid - 1)
        heads = tails + 1
        if self.periodic:
            tails = np.append(tails, self.grid - 1)
            heads = np.append(heads, 0)
        return tails, heads

    @cached_property
    def difference(self) -> np.ndarray:
        """D: (δf)_e = f(head) − f(tail)."""
        tails, heads = self.edges
        d = np.zeros((tails.size, self.grid))
        d[np.arange(tails.size), heads] = 1.0
        d[np.arange(tails.size), tails] -= 1.0
        return d

    @cached_property
    def laplacian(self) -> np.ndarray:
        d = self.difference
        return (d.T * self.conductance) @ d / self.mass[:, None]

    @cached_property
    def symmetric_laplacian(self) -> np.ndarray:
        """M^{1/2} Δ_μ M^{-1/2}, similar to Δ_μ and symmetric."""
        s = np.sqrt(self.mass)
        d = self.difference
        return ((d.T * self.conductance) @ d) / np.outer(s, s)

    @cached_property
    def spectrum(self):
        """Eigenvalues of Δ_μ and μ-orthonormal eigenfunctions (columns)."""
        w, u = np.linalg.eigh(self.symmetric_laplacian)
        return w, u / np.sqrt(self.mass)[:, None]

    def self_adjointness_residual(self) -> float:
        weighted = self.mass[:, None] * self.laplacian
        return float(np.max(np.abs(weighted - weighted.T)))

    def expectation(self, f: np.ndarray) -> np.ndarray:
        return np.einsum("i,i...->...", self.mass, f)

    def dirichlet_form(self, f: np.ndarray, g: np.ndarray) -> float:
        tails, heads = self.edges
        return float(np.sum(self.conductance * (f[heads] - f[tails]) * (g[heads] - g[tails])))


def build_interval(h: Union[str, Density, Callable, ArrayLike], grid: int, periodic: bool) -> WeightedInterval:
    """Discretize a density given as an expression, a callable, or samples at the cells."""
    if grid < MIN_GRID:
        raise ValueError(f"grid must have at least {MIN_GRID} cells, got {grid}")
    points = (np.arange(grid) + 0.5) / grid
    density = _as_density(h)
    if density is not None:
        func = density.func
    elif callable(h):
        func = h
    else:
        func = None

    if func is not None:
        inner = np.arange(1, grid) / grid
        cells = np.broadcast_to(np.asarray(func(points), dtype=float), points.shape).copy()
        edges = np.broadcast_to(np.asarray(func(inner), dtype=float), inner.shape).copy()
    else:
        cells = np.asarray(h, dtype=float).ravel()
        if cells.size != grid:
            raise ValueError(f"expected {grid} density samples, got {cells.size}")
        edges = (cells[:-1] + cells[1:]) / 2

    if not np.all(np.isfinite(cells)) or np.any(cells <= 0) or np.any(edges <= 0) or not np.all(np.isfinite(edges)):
        raise ValueError("density must be finite and positive on the grid")
    if periodic:
        edges = np.append(edges, (cells[-1] + cells[0]) / 2)
    return WeightedInterval(grid, periodic, points, cells, edges)


def interval_spectral_gap(w: WeightedInterval) -> float:
    vals, _ = w.spectrum
    threshold = ZERO_EIGEN_TOL * max(1.0, abs(vals[-1]))
    positive = vals[vals > threshold]
    if positive.size == 0:
        raise DegenerateGeneratorError("weighted Laplacian has no nonzero eigenvalue")
    return float(positive[0])


def _gap_function(w: WeightedInterval) -> np.ndarray:
    vals, funcs = w.spectrum
    threshold = ZERO_EIGEN_TOL * max(1.0, abs(vals[-1]))
    k = int(np.flatnonzero(vals > threshold)[0])
    v = funcs[:, k]
    return v / np.max(np.abs(v))


###############################################################################
# ENTROPY AND FISHER INFORMATION
###############################################################################

def _batched_eigh(f: np.ndarray):
    f = (f + np.conj(np.swapaxes(f, -1, -2))) / 2
    return np.linalg.eigh(f)


def _batched_function(f: np.ndarray, func) -> np.ndarray:
    w, v = _batched_eigh(f)
    return (v * func(w)[..., None, :]) @ np.conj(np.swapaxes(v, -1, -2))


def _as_grid_matrices(f: ArrayLike) -> np.ndarray:
    f = np.asarray(f, dtype=complex)
    return f[:, None, None] if f.ndim == 1 else f


def interval_entropy(w: WeightedInterval, f: ArrayLike) -> float:
    """Σ_i μ_i tr(f_i log f_i) − tr(E_μf log E_μf) for positive f: grid → M_d."""
    fm = _as_grid_matrices(f)
    vals = np.linalg.eigvalsh((fm + np.conj(np.swapaxes(fm, -1, -2))) / 2)
    if np.any(vals <= 0):
        raise ValueError("grid function must be positive definite everywhere")
    per_cell = np.sum(vals * np.log(vals), axis=-1)
    mean_vals = np.linalg.eigvalsh(w.expectation(fm))
    return max(float(np.dot(w.mass, per_cell) - np.sum(mean_vals * np.log(mean_vals))), 0.0)


def interval_fisher(
    w: WeightedInterval,
    f: ArrayLike,
    form: str = "dirichlet",
    truncation: Optional[float] = None,
) -> float:
    """Entropy production ⟨Δ_μ f, log f⟩_μ in one of two discretizations.

    dirichlet: Σ_e κ_e tr(δf_e δ(log f)_e), optionally with log clipped to [−n, n].
    integral:  Σ_e κ_e tr(δf_e J^log_{f̄_e}(δf_e)) with f̄_e the edge midpoint value.
    """
    fm = _as_grid_matrices(f)
    tails, heads = w.edges
    df = fm[heads] - fm[tails]

    if form == "dirichlet":
        if truncation is not None:
            logs = _batched_function(fm, lambda x: np.clip(np.log(x), -truncation, truncation))
        else:
            logs = _batched_function(fm, np.log)
        dlog = logs[heads] - logs[tails]
        return float(np.real(np.einsum("e,eab,eba->", w.conductance, df, dlog)))

    if form == "integral":
        vals, vecs = _batched_eigh((fm[heads] + fm[tails]) / 2)
        rotated = np.conj(np.swapaxes(vecs, -1, -2)) @ df @ vecs
        li = np.log(vals)
        diff = vals[..., :, None] - vals[..., None, :]
        close = np.abs(diff) <= DEGENERACY_TOL * np.maximum(1.0, np.abs(vals[..., :, None]))
        mid = (vals[..., :, None] + vals[..., None, :]) / 2
        with np.errstate(divide="ignore", invalid="ignore"):
            gamma = np.where(close, 1.0 / mid, (li[..., :, None] - li[..., None, :]) / np.where(close, 1.0, diff))
        return float(np.real(np.einsum("e,eab->", w.conductance, np.abs(rotated) ** 2 * gamma)))

    raise ValueError(f"unknown Fisher form '{form}'")


def interval_ratio(w: WeightedInterval, f: ArrayLike, form: str = "dirichlet") -> float:
    """I(f) / (2 D(f‖E_μf))."""
    d = interval_entropy(w, f)
    if d < OBJECTIVE_D_FLOOR:
        raise ValueError(f"entropy {d:.3e} is too small for a stable ratio")
    return interval_fisher(w, f, form) / (2 * d)


def linearized_ratio(w: WeightedInterval, eps: float = 1e-3) -> float:
    """I/D at 1 + ε·v_gap, which tends to 2 × gap as ε → 0."""
    f = 1 + eps * _gap_function(w)
    return interval_fisher(w, f) / interval_entropy(w, f)


###############################################################################
# ESTIMATE
###############################################################################

@dataclass
class IntervalEstimate:
    lambda_est: float
    gap: float
    matrix_dim: int
    argmin: np.ndarray
    samples_used: int
    optimizer_iterations: int
    convention_flag: str = "2D"

    @property
    def lambda_d(self) -> float:
        return 2 * self.lambda_est

    @property
    def lambda_open(self) -> float:
        return open_from_closed(self.lambda_est)

    def to_dict(self) -> dict:
        return {
            "lambda_est": self.lambda_est,
            "lambda_d": self.lambda_d,
            "lambda_open": self.lambda_open,
            "gap": self.gap,
            "matrix_dim": self.matrix_dim,
            "samples_used": self.samples_used,
            "optimizer_iterations": self.optimizer_iterations,
            "convention_flag": self.convention_flag,
        }


def fourier_modes(w: WeightedInterval, n_modes: int) -> np.ndarray:
    """Columns cos/sin(2πkx) on the circle, cos(πkx) with reflecting ends."""
    x = w.points
    k = np.arange(1, n_modes + 1)
    if w.periodic:
        return np.column_stack([np.cos(2 * math.pi * np.outer(x, k)), np.sin(2 * math.pi * np.outer(x, k))])
    return np.cos(math.pi * np.outer(x, k))


def _hermitian_from_params(p: np.ndarray, d: int) -> np.ndarray:
    h = np.zeros((d, d), dtype=complex)
    h[np.diag_indices(d)] = p[:d]
    iu = np.triu_indices(d, 1)
    m = iu[0].size
    h[iu] = p[d:d + m] + 1j * p[d + m:d + 2 * m]
    h[(iu[1], iu[0])] = np.conj(h[iu])
    return h


def _grid_function(w: WeightedInterval, modes: np.ndarray, params: np.ndarray, d: int) -> np.ndarray:
    coeffs = params.reshape(modes.shape[1], d * d)
    hs = np.array([_hermitian_from_params(c, d) for c in coeffs])
    logs = np.einsum("ik,kab->iab", modes, hs)
    f = _batched_function(logs, np.exp)
    return f / np.real(np.einsum("i,iaa->", w.mass, f))


def _safe_ratio(w, f) -> Optional[float]:
    try:
        return interval_ratio(w, f)
    except (ValueError, np.linalg.LinAlgError):
        return None


def interval_mlsi_estimate(
    w: WeightedInterval,
    matrix_dim: int = 1,
    n_samples: int = 64,
    opt_budget: int = 50,
    seed: int = 0,
    n_modes: int = 8,
    max_workers: Optional[int] = None,
) -> IntervalEstimate:
    """Smallest I/(2D) over f = exp(Σ_k H_k φ_k(x)), a near-identity linearization state and, for d > 1,
    the scalar minimizer tensored with I_d."""
    if matrix_dim < 1:
        raise ValueError(f"matrix_dim must be >= 1, got {matrix_dim}")
    d = matrix_dim
    gap = interval_spectral_gap(w)
    modes = fourier_modes(w, n_modes)
    n_params = modes.shape[1] * d * d

    rngs = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n_samples)]

    def draw(rng):
        amp = 10 ** rng.uniform(-1.5, 0.3)
        decay = np.repeat(1.0 / np.tile(np.arange(1, n_modes + 1), modes.shape[1] // n_modes), d * d)
        return amp * decay * rng.standard_normal(n_params)

    param_sets = [draw(rng) for rng in rngs]
    near_identity = (1 + LINEARIZATION_SCALE * _gap_function(w))[:, None, None] * np.eye(d)
    grids: List[np.ndarray] = [near_identity]
    if d > 1:
        base = interval_mlsi_estimate(w, 1, n_samples, opt_budget, seed, n_modes, max_workers)
        grids.append(np.real(base.argmin[:, 0, 0])[:, None, None] * np.eye(d))

    with ThreadPoolExecutor(max_workers=max_workers) as executor:
        sampled = list(executor.map(lambda p: _safe_ratio(w, _grid_function(w, modes, p, d)), param_sets))
        fixed = list(executor.map(lambda f: _safe_ratio(w, f), grids))

    best_value, best_f = math.inf, None
    for value, f in zip(fixed, grids):
        if value is not None and value < best_value:
            best_value, best_f = value, f

    scored = sorted((v, i) for i, v in enumerate(sampled) if v is not None)
    iterations = 0
    if scored and opt_budget > 0:
        penalty = 1e3 * max(gap, 1.0)

        def objective(p):
            value = _safe_ratio(w, _grid_function(w, modes, p, d))
            return penalty if value is None else value

        starts = scored[: max(1, math.ceil(n_samples / 16))]
        with ThreadPoolExecutor(max_workers=max_workers) as executor:
            results = list(executor.map(
                lambda vi: minimize(objective, param_sets[vi[1]], method="L-BFGS-B", options={"maxiter": opt_budget}),
                starts,
            ))
        for (start_value, i), res in zip(starts, results):
            iterations += int(res.nit)
            if start_value < best_value:
                best_value, best_f = start_value, _grid_function(w, modes, param_sets[i], d)
            if res.fun < best_value:
                best_value, best_f = float(res.fun), _grid_function(w, modes, res.x, d)
    elif scored and scored[0][0] < best_value:
        best_value, best_f = scored[0][0], _grid_function(w, modes, param_sets[scored[0][1]], d)

    if best_f is None:
        raise InconsistencyError("no sampled density produced a finite ratio")
    if best_value > gap * (1 + GAP_SLACK):
        raise InconsistencyError(f"interval estimate {best_value:.6g} exceeds the gap {gap:.6g}")
    log.info(f"interval MLSI estimate (d={d}): {best_value:.6g} [2D], gap {gap:.6g}")
    return IntervalEstimate(float(best_value), gap, d, best_f, len(param_sets) + len(grids), iterations)


###############################################################################
# CURVATURE AND COMPARISON BOUNDS
###############################################################################

class CurvatureCheck(NamedTuple):
    holds: bool
    a: float
    clsi_closed: Optional[float]
    clsi_open: Optional[float]
    window_shrunk: bool


def _evaluation_window(func: Callable, grid: int):
    x = np.linspace(0.0, 1.0, grid)
    values = func(x)
    if np.all(np.isfinite(values)):
        return x, values, False
    x = np.linspace(1e-6, 1 - 1e-6, grid)
    return x, func(x), True


def curvature_lower_bound(h: Union[str, Density], k: float, grid: int = 1001) -> CurvatureCheck:
    """min of k h² − h″h − h′² over [0,1]; positive means CLSI ≥ 2e^{−k} on [0,1]."""
    density = _as_density(h)
    expr = k * density.expr ** 2 - sp.diff(density.expr, X, 2) * density.expr - sp.diff(density.expr, X) ** 2
    x, values, shrunk = _evaluation_window(_lambdify(sp.simplify(expr)), grid)
    if shrunk:
        log.warning("curvature expression is singular at an endpoint; evaluated on [1e-6, 1 - 1e-6]")
    values = values[np.isfinite(values)]
    a = float(values.min())
    if a > 0:
        return CurvatureCheck(True, a, 2 * math.exp(-k), math.exp(-k) / 2, shrunk)
    return CurvatureCheck(False, a, None, None, shrunk)


def bakry_emery_hessian(potential: Union[str, sp.Expr], n: Optional[float] = None, grid: int = 1001) -> float:
    """min V″ over (0,1] for dν ∝ e^{−V}dx."""
    expr = parse_density(potential, n).expr if isinstance(potential, str) else potential
    func = _lambdify(sp.diff(expr, X, 2))
    x = np.linspace(1.0 / grid, 1.0, grid)
    values = func(x)
    return float(np.min(values[np.isfinite(values)]))


def clsi_from_curvature(k: float) -> float:
    """Curvature K > 0 gives CLSI ≥ 2K under the inf I/(2D) convention."""
    if k <= 0:
        raise ValueError(f"curvature must be positive, got {k}")
    return 2 * k


class MeasureComparison(NamedTuple):
    bound: float
    inf_ratio: float
    sup_ratio: float
    support_restricted: bool


def _normalized(expr: sp.Expr) -> sp.Expr:
    func = _lambdify(expr)
    total, _ = quad(lambda t: float(func(np.array([t]))[0]), 0.0, 1.0, limit=200)
    if not np.isfinite(total) or total <= 0:
        raise ValueError("density must have a positive finite integral over (0,1)")
    return expr / total


def change_of_measure_bound(
    mu: Union[str, Density],
    nu: Union[str, Density],
    clsi_nu: float,
    grid: int = MEASURE_GRID,
) -> MeasureComparison:
    """clsi_ν · inf(dν/dμ) / sup(dν/dμ) over [0,1]."""
    if clsi_nu < 0:
        raise ValueError(f"clsi_nu must be non-negative, got {clsi_nu}")
    ratio = sp.simplify(_normalized(_as_density(nu).expr) / _normalized(_as_density(mu).expr))
    values = _lambdify(ratio)(np.linspace(0.0, 1.0, grid))
    usable = np.isfinite(values) & (values > 0)
    restricted = not bool(np.all(usable))
    if restricted:
        log.warning("density ratio vanishes or blows up on [0,1]; using its support only")
    if not np.any(usable):
        raise ValueError("density ratio has no finite positive values on [0,1]")
    lo, hi = float(values[usable].min()), float(values[usable].max())
    return MeasureComparison(clsi_nu * lo / hi, lo, hi, restricted)


class GrowthBound(NamedTuple):
    positive: bool
    sup_gprime_sq: float
    lower_bound: float


def growth_order_bound(alpha: float, beta: float, c1: float, c2: float) -> GrowthBound:
    """CLSI lower bound for densities with c1 x^α ≤ h ≤ c2 β x^{β−1}.

    The transport map onto the half-Gaussian has derivative bounded by an explicit
    envelope; its squared supremum over x > 0 gives CLSI ≥ 2 / sup g′².
    """
    if not (0 <= alpha < beta) or beta < 1 or c1 <= 0 or c2 <= 0:
        raise ValueError(f"need 0 <= alpha < beta, beta >= 1, c1, c2 > 0; got {alpha}, {beta}, {c1}, {c2}")
    r = alpha / beta
    tail = erfc(1 / math.sqrt(2))
    small_x = math.sqrt(2 / math.pi) * c2 ** r / (c1 * tail ** r)

    def log_envelope(x):
        return (
            -math.log(c1) + r * math.log(c2) + 0.5 * (1 - r) * math.log(2 / math.pi)
            + r * math.log(x + 1 / x) - 0.5 * x * x * (1 - r)
        )

    upper = max(1e4, 10 * math.sqrt(max(r, 1e-12) / (1 - r)))
    xs = np.geomspace(1.0, upper, 4000)
    values = np.array([log_envelope(x) for x in xs])
    j = int(np.argmax(values))
    lo, hi = xs[max(j - 1, 0)], xs[min(j + 1, xs.size - 1)]
    best = values[j]
    if hi > lo:
        res = minimize_scalar(lambda x: -log_envelope(x), bounds=(lo, hi), method="bounded")
        best = max(best, -float(res.fun))

    sup_log = max(math.log(small_x), best)
    sup_sq = math.exp(2 * sup_log)
    bound = 2 / sup_sq
    return GrowthBound(bound > 0, sup_sq, bound)

"""Adaptively weighted l1 coordinate descent with covariance updates.

The solved problem, for a signal y of length n and the implicit dictionary A:

    minimize_theta  ||y - A theta||^2 / (2n) + lambda * sum_i w_i |theta_i|

where w_i = 1 / |theta_ols_i|^gamma are the adaptive weights from entry-wise
univariate least squares.  Each coordinate visit applies the exact
one-dimensional minimizer

    theta_i <- clip( soft(<r_-i, A_i>, n * lambda * w_i) / <A_i, A_i>, lo, hi )

with the partial-residual correlation <r_-i, A_i> obtained by covariance
update: cached <A_i, y> minus a sum of O(1) Gram entries over the active
set, never touching the residual vector.  Columns with infinite weight
(theta_ols = 0 and gamma > 0) or zero norm are permanently excluded.

Coordinates are visited in the fixed block order slope, step, spike, sine,
cosine, ascending index.  The sweep is chunk-vectorized: candidate values
for a run of coordinates are evaluated against the frozen state and the
sweep commits at the first coordinate that would change, which reproduces
the sequential update order exactly (coordinates that do not move do not
alter the state).

A fit converges when a full sweep leaves the active set unchanged and
moves no coefficient by more than tol * max(1, ||y||_inf); the residual
correlations are then rebuilt from scratch and the sweep must stay quiet
once more, so accumulated drift cannot fake convergence.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import dictionary as dct
from .dictionary import ColumnId, DictionarySpec
from .signals import Signal

__all__ = [
    "Signal",
    "AdaptiveWeights",
    "SparseCoefficients",
    "SolverConfig",
    "FitResult",
    "NumericalFailure",
    "soft_threshold",
    "ols_init",
    "lambda_max",
    "FitState",
    "coordinate_update",
    "fit_single",
    "fit_path",
    "objective_value",
    "DEFAULT_GAMMAS",
]

DEFAULT_GAMMAS = (0.0, 0.5, 1.0, 2.0)


class NumericalFailure(RuntimeError):
    """A coordinate update produced a non-finite value."""

    def __init__(self, column, lam=None, gamma=None):
        self.column = column
        self.lam = lam
        self.gamma = gamma
        grid = "" if lam is None else f" at (lambda={lam!r}, gamma={gamma!r})"
        super().__init__(f"non-finite update for column {column}{grid}")


def soft_threshold(z, threshold):
    """sign(z) * max(|z| - threshold, 0)."""
    if threshold < 0:
        raise ValueError("threshold must be nonnegative")
    return math.copysign(max(abs(z) - threshold, 0.0), z)


@dataclass(frozen=True)
class AdaptiveWeights:
    """Per-column penalty multipliers w_i = 1 / |theta_ols_i|^gamma.

    gamma = 0 gives w_i = 1 for every column (plain lasso), including
    columns whose univariate estimate is exactly zero; for gamma > 0 those
    columns get infinite weight and are permanently excluded from fits.
    """

    theta_ols: np.ndarray
    gamma: float
    values: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        ols = np.asarray(self.theta_ols, dtype=float)
        if not np.all(np.isfinite(ols)):
            raise ValueError("theta_ols must be finite")
        if self.gamma < 0:
            raise ValueError("gamma must be nonnegative")
        if self.gamma == 0.0:
            w = np.ones_like(ols)
        else:
            with np.errstate(divide="ignore"):
                w = np.abs(ols) ** (-float(self.gamma))
        w.setflags(write=False)
        object.__setattr__(self, "theta_ols", ols)
        object.__setattr__(self, "values", w)

    @property
    def finite(self):
        """Mask of columns that may enter the model."""
        return np.isfinite(self.values)


@dataclass(frozen=True)
class SparseCoefficients:
    """Nonzero coefficients as an ordered ColumnId -> value mapping."""

    entries: dict

    def __post_init__(self):
        for c, v in self.entries.items():
            if not isinstance(c, ColumnId):
                raise ValueError(f"keys must be ColumnId, got {c!r}")
            if v == 0.0 or not math.isfinite(v):
                raise ValueError(f"coefficient for {c} must be finite and nonzero")

    @property
    def active(self):
        return tuple(self.entries)

    def get(self, c, default=0.0):
        return self.entries.get(c, default)

    def to_vector(self, spec):
        vec = np.zeros(spec.p)
        for c, v in self.entries.items():
            vec[spec.flat_index(c)] = v
        return vec

    @classmethod
    def from_vector(cls, spec, vec):
        vec = np.asarray(vec, dtype=float)
        entries = {
            spec.column_at(int(i)): float(vec[i]) for i in np.flatnonzero(vec)
        }
        return cls(entries)

    def __len__(self):
        return len(self.entries)


@dataclass(frozen=True)
class SolverConfig:
    tol: float = 1e-7  # coefficient-change tolerance, relative to max(1, ||y||_inf)
    max_cycles: int = 10_000
    center_signal: bool = True

    def __post_init__(self):
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.max_cycles < 1:
            raise ValueError("max_cycles must be at least 1")


@dataclass(frozen=True)
class FitResult:
    """Solution at one (lambda, gamma) grid point."""

    lam: float
    gamma: float
    coefficients: SparseCoefficients
    rss: float
    n_active: int
    converged: bool
    cycles_used: int
    baseline: float = 0.0


def ols_init(spec, y):
    """Entry-wise univariate least-squares estimates <A_i,y>/<A_i,A_i>.

    Zero-norm columns (a sine at omega exactly pi) get estimate 0, which
    excludes them from any fit with gamma > 0; they are also excluded
    unconditionally by the solver since their updates are vacuous.
    """
    cy = dct.signal_correlations(spec, y)
    diag = dct.gram_diagonal(spec)
    with np.errstate(invalid="ignore", divide="ignore"):
        theta = np.where(diag > 0, cy / np.where(diag > 0, diag, 1.0), 0.0)
    return theta


def lambda_max(spec, y, weights):
    """Smallest lambda at which the all-zero solution is optimal."""
    cy = dct.signal_correlations(spec, y)
    diag = dct.gram_diagonal(spec)
    usable = weights.finite & (diag > 0)
    if not usable.any():
        raise ValueError("no usable columns: every weight is infinite")
    return float(np.max(np.abs(cy[usable]) / (spec.n * weights.values[usable])))


class FitState:
    """Mutable working state of one coordinate-descent fit.

    Arrays, indexed by flat column position:
      theta      current coefficients
      cr         <y - A theta, A_i> maintained by covariance updates
      cy, diag   cached <A_i, y> and <A_i, A_i>
      tau        per-coordinate threshold n * lambda * w_i (inf = excluded)
      lo, hi     box bounds
    """

    __slots__ = (
        "spec", "lam", "gamma", "n", "cy", "diag", "diag_safe",
        "tau", "lo", "hi", "theta", "cr",
    )

    def __init__(self, spec, y, lam, weights, warm=None):
        if lam < 0:
            raise ValueError("lambda must be nonnegative")
        n = spec.n
        w = weights.values
        if w.shape != (spec.p,):
            raise ValueError(
                f"weights cover {w.shape[0]} columns, dictionary has {spec.p}"
            )
        self.spec = spec
        self.lam = float(lam)
        self.gamma = float(weights.gamma)
        self.n = n
        self.cy = dct.signal_correlations(spec, y)
        self.diag = dct.gram_diagonal(spec)
        self.diag_safe = np.where(self.diag > 0, self.diag, 1.0)
        tau = np.where(np.isfinite(w), n * self.lam * w, np.inf)
        tau[self.diag <= 0] = np.inf  # zero-norm columns never move
        self.tau = tau
        self.lo, self.hi = spec.bound_arrays()
        theta = np.zeros(spec.p)
        if warm is not None:
            if isinstance(warm, SparseCoefficients):
                theta = warm.to_vector(spec)
            else:
                theta = np.array(warm, dtype=float)
            theta[~np.isfinite(tau)] = 0.0
            np.clip(theta, self.lo, self.hi, out=theta)
        self.theta = theta
        self.cr = None
        self.refresh()

    def refresh(self):
        """Rebuild residual correlations from theta (clears update drift)."""
        cr = self.cy.copy()
        for i in np.flatnonzero(self.theta):
            cr -= self.theta[i] * dct.gram_column(self.spec, int(i))
        self.cr = cr

    def residual_correlation(self, i):
        """<r_-i, A_i> with coordinate i's own contribution removed."""
        return float(self.cr[i] + self.diag[i] * self.theta[i])


def coordinate_update(state, i):
    """Exact minimizer of the objective along coordinate i (not committed)."""
    c = state.cr[i] + state.diag[i] * state.theta[i]
    z = math.copysign(max(abs(c) - state.tau[i], 0.0), c) / state.diag_safe[i]
    return min(max(z, state.lo[i]), state.hi[i])


def _sweep(state):
    """One full pass over all coordinates; returns (max |change|, active set changed).

    Vectorized between commits: candidates for coordinates [pos, p) are all
    computed from the frozen state, and only the first coordinate whose
    value would change is committed before rescanning from the next index.
    """
    theta, cr = state.theta, state.cr
    diag, diag_safe, tau = state.diag, state.diag_safe, state.tau
    lo, hi = state.lo, state.hi
    p = theta.shape[0]
    max_delta = 0.0
    active_changed = False
    pos = 0
    while pos < p:
        c = cr[pos:] + diag[pos:] * theta[pos:]
        cand = np.sign(c) * np.maximum(np.abs(c) - tau[pos:], 0.0) / diag_safe[pos:]
        np.clip(cand, lo[pos:], hi[pos:], out=cand)
        moved = np.flatnonzero(cand != theta[pos:])
        if moved.size == 0:
            break
        i = pos + int(moved[0])
        new = float(cand[moved[0]])
        if not math.isfinite(new):
            raise NumericalFailure(state.spec.column_at(i), state.lam, state.gamma)
        old = float(theta[i])
        delta = new - old
        theta[i] = new
        cr -= delta * dct.gram_column(state.spec, i)
        if (old == 0.0) != (new == 0.0):
            active_changed = True
        if abs(delta) > max_delta:
            max_delta = abs(delta)
        pos = i + 1
    return max_delta, active_changed


def fit_single(spec, y, lam, weights, warm=None, config=None, baseline=0.0):
    """Coordinate descent at one (lambda, gamma) point.

    ``warm`` may be a SparseCoefficients or a dense vector; it is clipped
    into the configured bounds and purged of excluded columns before use.
    """
    config = config or SolverConfig()
    values = np.asarray(getattr(y, "values", y), dtype=float)
    state = FitState(spec, y, lam, weights, warm)
    tol_abs = config.tol * max(1.0, float(np.max(np.abs(values))))
    converged = False
    cycles = 0
    verifying = False  # last quiet sweep ran on freshly rebuilt correlations?
    while cycles < config.max_cycles:
        cycles += 1
        max_delta, active_changed = _sweep(state)
        quiet = (not active_changed) and (max_delta < tol_abs)
        if quiet and verifying:
            converged = True
            break
        if quiet:
            state.refresh()
            verifying = True
        else:
            verifying = False
    coeffs = SparseCoefficients.from_vector(spec, state.theta)
    fitted = dct.synthesize(spec, state.theta)
    rss = float(((values - fitted) ** 2).sum())
    return FitResult(
        lam=float(lam),
        gamma=float(weights.gamma),
        coefficients=coeffs,
        rss=rss,
        n_active=len(coeffs),
        converged=converged,
        cycles_used=cycles,
        baseline=baseline,
    )


def _lambda_grid(lmax, count, min_ratio):
    if lmax <= 0.0:
        return [0.0]
    return list(np.geomspace(lmax, lmax * min_ratio, count))


def fit_path(
    spec,
    y,
    lambdas=None,
    gammas=DEFAULT_GAMMAS,
    n_lambda=50,
    lambda_min_ratio=1e-4,
    config=None,
    workers=None,
):
    """Warm-started fits over the whole (lambda, gamma) grid.

    For each gamma the weights are computed once and lambda is traversed in
    decreasing order, warm-starting every fit from the previous solution
    (the first fit starts from zero).  When no explicit lambda grid is
    given, each gamma gets ``n_lambda`` log-spaced values from its own
    lambda_max down to ``lambda_min_ratio`` times it.

    With ``workers`` > 1, distinct gamma paths run concurrently; they share
    only read-only caches, so results are identical to the serial run.
    """
    config = config or SolverConfig()
    values = np.asarray(getattr(y, "values", y), dtype=float)
    if config.center_signal:
        baseline = float(values.mean())
        target = Signal(values - baseline)
    else:
        baseline = 0.0
        target = y if isinstance(y, Signal) else Signal(values)
    theta_ols = ols_init(spec, target)
    dct.gram_diagonal(spec)  # build shared caches before any worker starts
    dct.signal_correlations(spec, target)
    if lambdas is not None:
        lambdas = sorted((float(l) for l in lambdas), reverse=True)

    def run_gamma(gamma):
        weights = AdaptiveWeights(theta_ols, gamma)
        if lambdas is None:
            grid = _lambda_grid(lambda_max(spec, target, weights), n_lambda, lambda_min_ratio)
        else:
            grid = lambdas
        out = []
        warm = None
        for lam in grid:
            fit = fit_single(
                spec, target, lam, weights, warm=warm, config=config, baseline=baseline
            )
            out.append(fit)
            warm = fit.coefficients
        return out

    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=int(workers)) as pool:
            per_gamma = list(pool.map(run_gamma, gammas))
    else:
        per_gamma = [run_gamma(g) for g in gammas]
    return [fit for chunk in per_gamma for fit in chunk]


def objective_value(spec, y, fit, weights=None):
    """Penalized objective ||y - A theta||^2/(2n) + lambda * sum w_i |theta_i|.

    ``y`` must be the signal the fit was computed against (centered when the
    path centered).  Weights default to fresh OLS weights at fit.gamma.
    """
    values = np.asarray(getattr(y, "values", y), dtype=float)
    if weights is None:
        weights = AdaptiveWeights(ols_init(spec, y), fit.gamma)
    theta = fit.coefficients.to_vector(spec)
    fitted = dct.synthesize(spec, theta)
    rss = float(((values - fitted) ** 2).sum())
    penalty = 0.0
    for c, v in fit.coefficients.entries.items():
        penalty += weights.values[spec.flat_index(c)] * abs(v)
    return rss / (2.0 * spec.n) + fit.lam * penalty

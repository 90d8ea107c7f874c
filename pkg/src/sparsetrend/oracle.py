"""Independent dense reference solver and KKT checker.

Everything here works on an explicitly materialized dictionary with plain
dense linear algebra, deliberately sharing no machinery with the
coordinate-descent solver: agreement between the two is then meaningful
evidence of correctness.  The solver is FISTA (accelerated proximal
gradient) with backtracking line search and function-value restarts,
applied to

    F(theta) = ||y - A theta||^2 / (2n) + lambda * sum_i w_i |theta_i|

subject to optional per-column box constraints.  Desk-scale only: n is
capped at 256.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import dictionary as dct

__all__ = ["DenseProblem", "OracleError", "KktReport", "oracle_solve", "kkt_check",
           "kkt_from_correlations", "dense_problem", "objective"]

MAX_ORACLE_N = 256


class OracleError(RuntimeError):
    """The reference solver failed to reach stationarity within its cap."""


@dataclass
class DenseProblem:
    """A fully materialized weighted-lasso instance."""

    matrix: np.ndarray  # (n, p)
    y: np.ndarray
    weights: np.ndarray  # per-column penalty multipliers; +inf excludes a column
    lam: float
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None

    def __post_init__(self):
        A = np.asarray(self.matrix, dtype=float)
        if A.ndim != 2:
            raise ValueError("matrix must be 2-D")
        n, p = A.shape
        if n > MAX_ORACLE_N:
            raise ValueError(f"oracle problems are capped at n={MAX_ORACLE_N}, got {n}")
        y = np.asarray(self.y, dtype=float)
        if y.shape != (n,):
            raise ValueError("y length must match the matrix rows")
        w = np.asarray(self.weights, dtype=float)
        if w.shape != (p,):
            raise ValueError("weights must have one entry per column")
        if np.any(w < 0) or np.any(np.isnan(w)):
            raise ValueError("weights must be nonnegative (or +inf)")
        if self.lam < 0:
            raise ValueError("lambda must be nonnegative")
        lo = np.full(p, -np.inf) if self.lower is None else np.asarray(self.lower, float)
        hi = np.full(p, np.inf) if self.upper is None else np.asarray(self.upper, float)
        if lo.shape != (p,) or hi.shape != (p,):
            raise ValueError("bounds must have one entry per column")
        if np.any(lo > 0) or np.any(hi < 0):
            raise ValueError("bounds must keep zero feasible (lower <= 0 <= upper)")
        self.matrix, self.y, self.weights = A, y, w
        self.lower, self.upper = lo, hi
        self.lam = float(self.lam)

    @property
    def shape(self):
        return self.matrix.shape


def dense_problem(spec, y, weights, lam):
    """Materialize a DictionarySpec fit into a DenseProblem."""
    lo, hi = spec.bound_arrays()
    return DenseProblem(
        matrix=dct.materialize(spec),
        y=np.asarray(getattr(y, "values", y), dtype=float),
        weights=np.asarray(weights.values if hasattr(weights, "values") else weights, float),
        lam=lam,
        lower=lo,
        upper=hi,
    )


def objective(prob, theta):
    """F(theta) for a dense problem; +inf if an excluded column is nonzero."""
    theta = np.asarray(theta, dtype=float)
    r = prob.y - prob.matrix @ theta
    loss = 0.5 * float(r @ r) / prob.matrix.shape[0]
    nz = theta != 0.0
    if np.any(nz & ~np.isfinite(prob.weights)):
        return math.inf
    return loss + prob.lam * float(prob.weights[nz] @ np.abs(theta[nz]))


def oracle_solve(prob, tol=1e-9, max_iter=200_000):
    """Solve a DenseProblem to a proximal-gradient fixed-point residual < tol.

    Returns the coefficient vector; raises OracleError if the iteration cap
    is hit first.  The residual is ||theta - prox(theta - grad/L) ||_inf at
    the current backtracked step 1/L.
    """
    A, y, lam = prob.matrix, prob.y, prob.lam
    n, p = A.shape
    keep = np.isfinite(prob.weights)
    Ak = A[:, keep]
    wk = prob.weights[keep]
    lok, hik = prob.lower[keep], prob.upper[keep]
    thresh = lam * wk

    def grad(x):
        return Ak.T @ (Ak @ x - y) / n

    def gval(x):
        r = y - Ak @ x
        return 0.5 * float(r @ r) / n

    def fval(x):
        return gval(x) + float(thresh @ np.abs(x))

    def prox(v, step):
        out = np.sign(v) * np.maximum(np.abs(v) - step * thresh, 0.0)
        return np.clip(out, lok, hik)

    if Ak.shape[1] == 0:
        return np.zeros(p)

    # crude spectral-norm estimate for the initial step size
    rng = np.random.default_rng(0)
    v = rng.standard_normal(Ak.shape[1])
    for _ in range(20):
        v = Ak.T @ (Ak @ v)
        norm = np.linalg.norm(v)
        if norm == 0:
            break
        v /= norm
    L = max(norm / n if norm else 1.0, 1e-12)

    theta = np.zeros(Ak.shape[1])
    f_theta = fval(theta)
    momentum = theta.copy()
    tk = 1.0
    for it in range(1, max_iter + 1):
        g = grad(momentum)
        gm = gval(momentum)
        while True:
            cand = prox(momentum - g / L, 1.0 / L)
            d = cand - momentum
            quad = gm + float(g @ d) + 0.5 * L * float(d @ d)
            if gval(cand) <= quad + 1e-12 * (1.0 + abs(quad)):
                break
            L *= 2.0
        f_cand = fval(cand)
        if f_cand <= f_theta:
            t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * tk * tk))
            momentum = cand + ((tk - 1.0) / t_next) * (cand - theta)
            theta, f_theta, tk = cand, f_cand, t_next
        else:  # momentum overshot: restart from the best iterate
            momentum = theta.copy()
            tk = 1.0
            continue
        if it % 5 == 0 or it == 1:
            gt = grad(theta)
            residual = float(np.max(np.abs(theta - prox(theta - gt / L, 1.0 / L))))
            if residual < tol:
                full = np.zeros(p)
                full[keep] = theta
                return full
    raise OracleError(f"no stationarity after {max_iter} iterations (tol={tol})")


@dataclass(frozen=True)
class KktReport:
    """Worst-case optimality violations, by condition.

    stationarity : active coordinates strictly inside their bounds,
                   |<A_i, r>/n - lambda w_i sign(theta_i)|
    inactive     : zero coordinates, excess of |<A_i, r>/n| over lambda w_i
                   (one-sided when zero sits on a bound)
    bound        : coordinates clipped at a bound, one-sided excess
    excluded     : largest |theta_i| on infinite-weight columns (must be 0)
    """

    stationarity: float
    inactive: float
    bound: float
    excluded: float

    @property
    def worst(self):
        return max(self.stationarity, self.inactive, self.bound, self.excluded)


def kkt_from_correlations(g, theta, lam, weights, lower, upper):
    """Classify optimality violations given g_i = <A_i, y - A theta> / n."""
    theta = np.asarray(theta, dtype=float)
    g = np.asarray(g, dtype=float)
    w = np.asarray(weights, dtype=float)
    finite = np.isfinite(w)

    excluded = float(np.max(np.abs(theta[~finite]), initial=0.0))

    stationarity = 0.0
    inactive = 0.0
    bound = 0.0
    for i in np.flatnonzero(finite):
        ti, gi, li = theta[i], g[i], lam * w[i]
        if ti == 0.0:
            v = 0.0
            if upper[i] > 0.0:
                v = max(v, gi - li)
            if lower[i] < 0.0:
                v = max(v, -gi - li)
            inactive = max(inactive, v)
        elif ti > 0.0:
            if ti == upper[i]:
                bound = max(bound, max(li - gi, 0.0))
            else:
                stationarity = max(stationarity, abs(gi - li))
        else:
            if ti == lower[i]:
                bound = max(bound, max(gi + li, 0.0))
            else:
                stationarity = max(stationarity, abs(gi + li))
    return KktReport(
        stationarity=stationarity, inactive=inactive, bound=bound, excluded=excluded
    )


def kkt_check(prob, theta):
    """Subgradient optimality report for a candidate solution."""
    theta = np.asarray(theta, dtype=float)
    A, y = prob.matrix, prob.y
    g = A.T @ (y - A @ theta) / A.shape[0]
    return kkt_from_correlations(g, theta, prob.lam, prob.weights, prob.lower, prob.upper)

"""Model selection over the (lambda, gamma) grid with EBIC.

EBIC of a fit with k active columns on n samples from a p-column dictionary:

    n * ln(max(rss, floor) / n) + k * ln(n) + 2 * xi * k * ln(p)

xi = 0 is plain BIC; xi = 1 (the default) applies the strongest
model-space penalty, appropriate here since p > n.  Smaller is better.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

__all__ = ["SelectionError", "SelectionReport", "ebic_score", "select_model"]

_LOG_GUARD = 1e-300  # keeps ln() finite when rss and floor are both zero


class SelectionError(RuntimeError):
    """No converged fit was available to select from."""


def ebic_score(fit, n, p, xi, rss_floor=0.0):
    """EBIC of one fit; ``rss_floor`` (typically 1e-12 * ||y||^2) guards the log."""
    if n < 1 or p < 1:
        raise ValueError("n and p must be positive")
    if not 0.0 <= xi <= 1.0:
        raise ValueError("xi must lie in [0, 1]")
    if fit.rss < 0:
        raise ValueError("rss must be nonnegative")
    k = fit.n_active
    rss = max(fit.rss, rss_floor, _LOG_GUARD)
    return n * math.log(rss / n) + k * math.log(n) + 2.0 * xi * k * math.log(p)


@dataclass(frozen=True)
class SelectionReport:
    """EBIC scores over the grid and the winning fit.

    Ties in score are broken toward larger lambda, then larger gamma
    (the sparser model).  Non-converged fits are never scored.
    """

    scores: dict
    best: tuple
    best_fit: object
    ebic_xi: float


def select_model(results, n, p, xi=1.0, rss_floor=None):
    """Pick the EBIC-minimizing converged fit from a list of FitResults.

    When ``rss_floor`` is not given it is derived as 1e-12 times the largest
    rss among the converged fits (the null fit's rss equals ||y||^2 whenever
    the lambda_max endpoint is on the grid).
    """
    if not results:
        raise SelectionError("no fits to select from")
    converged = [r for r in results if r.converged]
    if not converged:
        raise SelectionError("every fit failed to converge; nothing to select")
    if rss_floor is None:
        rss_floor = 1e-12 * max(r.rss for r in converged)
    scores = {}
    best = None
    best_key = None
    for fit in converged:
        s = ebic_score(fit, n, p, xi, rss_floor)
        scores[(fit.lam, fit.gamma)] = s
        key = (s, -fit.lam, -fit.gamma)
        if best_key is None or key < best_key:
            best_key = key
            best = fit
    return SelectionReport(
        scores=scores, best=(best.lam, best.gamma), best_fit=best, ebic_xi=float(xi)
    )

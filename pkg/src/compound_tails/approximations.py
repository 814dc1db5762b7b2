"""Closed-form approximations and bounds for random-sum tails."""
from __future__ import annotations

import math
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
from scipy import optimize

from .compound_engine import TailCurve, exact_compound_tail
from .distributions import CountModel, SeverityModel, discretize_severity, make_degenerate_count
from .errors import DomainError, NumericError

__all__ = [
    "heavy_n_approx",
    "heavy_x_approx",
    "foss_corrected",
    "cramer_rate",
    "tang_bound",
    "sum_excess_tail",
    "calibrate_tang_constant",
    "calibrate_tang",
    "chernoff_lower_tail",
]

FOSS_WINDOW = (0.5, 2.0 / 3.0)


def _grid(x_grid) -> np.ndarray:
    x = np.asarray(x_grid, dtype=float).reshape(-1)
    if np.any(x < 0) or np.any(~np.isfinite(x)):
        raise DomainError("x grid must be finite and nonnegative")
    return x


def heavy_n_approx(count: CountModel, mu: float, x_grid) -> TailCurve:
    """P[S_N > x] ~ P[N > x/mu]."""
    if not mu > 0:
        raise DomainError("mu must be positive")
    x = _grid(x_grid)
    return TailCurve(x, np.asarray(count.logtail(x / mu), dtype=float), provenance="approximation(heavy_n)")


def heavy_x_approx(count_mean: float, severity: SeverityModel, x_grid) -> TailCurve:
    """P[S_N > x] ~ E[N] P[X > x], capped at probability 1."""
    if not (0 < count_mean < math.inf):
        raise DomainError(f"heavy-X approximation needs a finite positive count mean, got {count_mean}")
    x = _grid(x_grid)
    lt = math.log(count_mean) + np.asarray(severity.logtail(x), dtype=float)
    return TailCurve(x, np.minimum(lt, 0.0), provenance="approximation(heavy_x)")


def foss_corrected(beta: float, x_grid) -> TailCurve:
    """Discretized Weibull count tail times exp(beta^2 x^(2 beta - 1) / 2).

    Only meaningful for unit-mean exponential claims and beta in [1/2, 2/3).
    """
    lo, hi = FOSS_WINDOW
    if not lo <= beta < hi:
        raise DomainError(f"beta must lie in [1/2, 2/3), got {beta}")
    x = _grid(x_grid)
    lt = -((np.floor(x) + 1.0) ** beta) + 0.5 * beta**2 * x ** (2 * beta - 1)
    return TailCurve(x, np.minimum(lt, 0.0), provenance="approximation(foss)")


def cramer_rate(n: int, a_n: float, sigma2: float) -> float:
    """Leading-order log P[S_n > n mu + a_n] (and of the lower deviation)."""
    if not sigma2 > 0:
        raise DomainError("sigma2 must be positive")
    if n < 1 or int(n) != n:
        raise DomainError("n must be a positive integer")
    if a_n < 0:
        raise DomainError("a_n must be nonnegative")
    return -(a_n**2) / (2.0 * sigma2 * n)


def tang_bound(n, x, v: float, C: float, q: float, severity: SeverityModel):
    """n P[X - mu > v x] + C x^(-q), evaluated elementwise."""
    if not (v > 0 and C > 0 and q > 0):
        raise DomainError("v, C and q must be positive")
    n = np.asarray(n, dtype=float)
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise DomainError("x must be positive")
    out = n * np.asarray(severity.tail(severity.mu + v * x)) + C * x ** (-q)
    return out if out.ndim else float(out)


def sum_excess_tail(severity: SeverityModel, n: int, x: float, h: float = 1 / 64) -> float:
    """P[S_n - n mu > x] for iid claims.

    Closed form when the severity provides one, else the lattice oracle
    with a degenerate count (round lattice, so O(h^2) error).
    """
    thr = n * severity.mu + x
    lt = severity.nfold_logtail(n, thr)
    if lt is None:
        # mass cut off past thr counts as exceeding thr, which is exact here
        eps = float(severity.tail(thr + 2 * h)) or 1e-16
        lat = discretize_severity(severity, h, "round", eps=min(max(eps, 1e-300), 1e-3))
        lt = exact_compound_tail(make_degenerate_count(n), lat, [thr]).log_tail[0]
    return float(np.exp(lt))


def calibrate_tang_constant(
    severity: SeverityModel,
    n_grid,
    x_grid,
    v: float,
    q: float,
    oracle: Optional[Callable[[int, float], float]] = None,
    safety: float = 1.0,
) -> float:
    """Smallest C making the bound hold on every (n, x) of the calibration grid.

    C = max over the grid of (P[S_n - n mu > x] - n P[X - mu > v x]) x^q,
    times ``safety``; floored at a tiny positive number.
    """
    if not (v > 0 and q > 0 and safety >= 1):
        raise DomainError("v and q must be positive and safety >= 1")
    oracle = oracle or (lambda n, x: sum_excess_tail(severity, int(n), float(x)))
    best = 0.0
    for n in np.asarray(n_grid).ravel():
        for x in np.asarray(x_grid, dtype=float).ravel():
            gap = oracle(int(n), float(x)) - float(n) * float(severity.tail(severity.mu + v * x))
            best = max(best, gap * x**q)
    return max(best * safety, 1e-300)


def calibrate_tang(
    severity: SeverityModel,
    n_grid,
    x_grid,
    q: float,
    v_grid: Sequence[float] = (0.1, 0.25, 0.5, 0.75, 0.9),
    oracle: Optional[Callable[[int, float], float]] = None,
    safety: float = 1.0,
) -> Tuple[float, float]:
    """Pick (v, C) for the bound on a calibration grid.

    Every v in ``v_grid`` gets its own calibrated C; the pair with the
    smallest mean log-bound over the grid (the tightest) wins.
    """
    oracle = oracle or (lambda n, x: sum_excess_tail(severity, int(n), float(x)))
    cache = {}

    def cached(n, x):
        key = (int(n), float(x))
        if key not in cache:
            cache[key] = oracle(*key)
        return cache[key]

    pts = [(int(n), float(x)) for n in np.asarray(n_grid).ravel() for x in np.asarray(x_grid, dtype=float).ravel()]
    best = None
    for v in v_grid:
        C = calibrate_tang_constant(severity, n_grid, x_grid, v, q, oracle=cached, safety=safety)
        score = float(np.mean([math.log(tang_bound(n, x, v, C, q, severity)) for n, x in pts]))
        if best is None or score < best[0]:
            best = (score, float(v), C)
    return best[1], best[2]


def chernoff_lower_tail(severity: SeverityModel, epsilon: float, x: float, tol: float = 1e-10) -> float:
    """Upper bound on log P[S_m <= x] with m = ceil((1 + epsilon) x).

    Minimizes t x + m log E[exp(-t X)] over t > 0 by golden-section search.
    When m times the essential infimum of X exceeds x the probability is
    exactly zero and so is the infimum: -inf is returned.
    """
    if not epsilon > 0:
        raise DomainError("epsilon must be positive")
    if not x > 0:
        raise DomainError("x must be positive")
    m = math.ceil((1.0 + epsilon) * x)
    if m * severity.ess_inf > x:
        return -math.inf
    if severity.tail(0.0) <= 0:
        raise DomainError("severity is degenerate at 0")

    def phi(t):
        return t * x + m * severity.log_mgf(-t)

    # phi(0) = 0 and phi'(0) = x - m mu; the minimum sits at t = 0 otherwise
    if x >= m * severity.mu:
        return 0.0
    t1 = 1.0 / max(severity.mu, 1e-12)
    while not phi(t1) < 0.0:
        t1 /= 4.0
        if t1 < 1e-300:
            raise NumericError("could not bracket the Chernoff minimum")
    t2 = 2.0 * t1
    while phi(t2) < phi(t1):
        t1, t2 = t2, 2.0 * t2
        if t2 > 1e300:
            raise NumericError("Chernoff objective keeps decreasing; minimum not bracketed")
    res = optimize.minimize_scalar(phi, bracket=(0.0, t1, t2), method="golden", tol=tol)
    val = float(min(res.fun, phi(t1)))
    if not np.isfinite(val):
        raise NumericError("Chernoff objective is not finite at its minimum")
    return min(val, 0.0)

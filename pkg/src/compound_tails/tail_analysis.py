"""Finite-x diagnostics for limit statements about tails.

Every quantity of interest here is a limit as x grows.  The protocol is
fixed and explicit: evaluate on a geometric grid, keep the points where
the tail is representable (above ``TrendConfig.underflow``), aggregate over
the last ``window_decades`` of x, and classify the trend of the samples in
that window as converging, diverging (to +infinity) or inconclusive.
Statements of the form "r(x) -> 0" are checked as "-log r(x) diverges".
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .distributions import CountModel, count_mean_excess
from .errors import DomainError, NumericError

__all__ = [
    "TrendConfig",
    "LimitEstimate",
    "geometric_grid",
    "classify_trend",
    "cv_profile",
    "matuszewska_upper",
    "upper_order",
    "gumbel_aux",
    "self_neglect_check",
    "representation_integrand",
    "anderson_gumbel_check",
    "von_mises_frechet_check",
    "lower_order",
]

CONVERGING = "converging"
DIVERGING = "diverging"
INCONCLUSIVE = "inconclusive"


@dataclass(frozen=True)
class TrendConfig:
    """Thresholds of the finite-x protocol.

    dispersion_tol: relative spread of the window below which samples count
        as converged.
    window_decades: width of the aggregation window, in decades of x.
    rise_fraction: share of positive increments required for divergence.
    min_growth: minimal total rise over the window (absolute, or relative
        for samples above 1) required for divergence.
    stall_ratio: divergence also needs the second half of the window to
        rise by at least this fraction of the first half's rise.
    underflow: tails below this value are treated as unusable.
    """

    dispersion_tol: float = 1e-2
    window_decades: float = 1.0
    rise_fraction: float = 0.8
    min_growth: float = 0.05
    stall_ratio: float = 0.3
    underflow: float = 1e-300


DEFAULT_TREND = TrendConfig()


@dataclass
class LimitEstimate:
    """A finite-x proxy for a limit.

    ``samples`` is an (m, 2) array of (x, ratio) sorted by x; ``value`` is
    the ``aggregation`` (mean, min, max or a fitted slope) over the window.
    """

    value: float
    window: tuple
    trend: str
    samples: np.ndarray
    aggregation: str = "mean"
    extras: dict = field(default_factory=dict)

    @property
    def x(self) -> np.ndarray:
        return self.samples[:, 0]

    @property
    def ratio(self) -> np.ndarray:
        return self.samples[:, 1]

    @property
    def window_flag(self) -> np.ndarray:
        lo, hi = self.window
        return (self.x >= lo) & (self.x <= hi)

    def to_rows(self):
        """(x, ratio, window_flag) triples for CSV dumps."""
        return [(float(a), float(b), int(f)) for a, b, f in zip(self.x, self.ratio, self.window_flag)]


# ---------------------------------------------------------------------------
# grid and trend plumbing
# ---------------------------------------------------------------------------


def geometric_grid(lo: float = 2.0**4, hi: float = 2.0**40, per_octave: int = 4) -> np.ndarray:
    """Points lo * 2^(k/per_octave) up to hi."""
    if not 0 < lo < hi:
        raise DomainError("need 0 < lo < hi")
    k = int(math.floor(per_octave * math.log2(hi / lo) + 1e-9))
    return lo * 2.0 ** (np.arange(k + 1) / per_octave)


def _log_tail_fn(tail) -> Callable:
    if hasattr(tail, "logtail"):
        return tail.logtail

    def lt(x):
        with np.errstate(divide="ignore"):
            return np.log(np.asarray(tail(x), dtype=float))

    return lt


def _grid(x_grid) -> np.ndarray:
    x = geometric_grid() if x_grid is None else np.asarray(x_grid, dtype=float).reshape(-1)
    if x.size < 3:
        raise DomainError("need at least three grid points")
    if np.any(np.diff(x) <= 0) or np.any(x <= 0):
        raise DomainError("grid must be positive and strictly increasing")
    return x


def _usable(x: np.ndarray, *logs: np.ndarray, cfg: TrendConfig) -> int:
    """Number of leading grid points where every log-tail is representable."""
    floor = math.log(cfg.underflow)
    ok = np.ones(x.shape, dtype=bool)
    for lg in logs:
        ok &= np.asarray(lg) > floor
    bad = np.nonzero(~ok)[0]
    m = int(bad[0]) if bad.size else len(x)
    if m < 3:
        largest = float(x[m - 1]) if m > 0 else None
        raise NumericError(
            f"tail below {cfg.underflow:g} on the grid; largest usable x is {largest}",
            largest_usable_x=largest,
        )
    return m


def _window(x: np.ndarray, cfg: TrendConfig) -> np.ndarray:
    sel = x >= x[-1] / 10.0**cfg.window_decades
    if sel.sum() < 3:
        sel = np.zeros(x.shape, dtype=bool)
        sel[-3:] = True
    return sel


def classify_trend(x, values, cfg: TrendConfig = DEFAULT_TREND) -> str:
    """Converging, diverging (to +inf) or inconclusive over the last window."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(values, dtype=float)
    w = v[_window(x, cfg)]
    if not np.all(np.isfinite(w)):
        return DIVERGING if np.isposinf(w[-1]) else INCONCLUSIVE
    scale = max(abs(float(np.mean(w))), 1e-300)
    if (w.max() - w.min()) / scale < cfg.dispersion_tol:
        return CONVERGING
    d = np.diff(w)
    rise = w[-1] - w[0]
    rel = rise / max(abs(w[0]), 1.0)
    half = len(w) // 2
    first = w[half] - w[0]
    second = w[-1] - w[half]
    if np.mean(d > 0) >= cfg.rise_fraction and rel > cfg.min_growth and second >= cfg.stall_ratio * first:
        return DIVERGING
    return INCONCLUSIVE


def _estimate(x, r, cfg, aggregation="mean", extras=None, trend=None) -> LimitEstimate:
    x = np.asarray(x, dtype=float)
    r = np.asarray(r, dtype=float)
    sel = _window(x, cfg)
    w = r[sel]
    value = {"mean": np.mean, "min": np.min, "max": np.max}[aggregation](w)
    return LimitEstimate(
        value=float(value),
        window=(float(x[sel][0]), float(x[sel][-1])),
        trend=classify_trend(x, r, cfg) if trend is None else trend,
        samples=np.column_stack([x, r]),
        aggregation=aggregation,
        extras=extras or {},
    )


# ---------------------------------------------------------------------------
# consistent / dominated variation
# ---------------------------------------------------------------------------


def cv_profile(tail, y: float, x_grid=None, cfg: TrendConfig = DEFAULT_TREND,
               y_ladder: Sequence[float] = (0.9, 0.95, 0.99)) -> LimitEstimate:
    """Samples of tail(x y)/tail(x) for a fixed y in (0, 1).

    The trend is ``converging`` only if the window is flat and the window
    means over ``y_ladder`` extrapolate to 1 as y -> 1; the extrapolated
    intercept is stored in ``extras["y_to_1"]``.
    """
    if not 0 < y < 1:
        raise DomainError("y must lie in (0, 1)")
    lt = _log_tail_fn(tail)
    x = _grid(x_grid)
    lx = np.asarray(lt(x), dtype=float)
    m = _usable(x, lx, cfg=cfg)
    x, lx = x[:m], lx[:m]
    r = np.exp(np.asarray(lt(x * y), dtype=float) - lx)
    sel = _window(x, cfg)
    ys = np.array(sorted(set(y_ladder) | {y}))
    means = np.array([np.mean(np.asarray(lt(x[sel] * yy)) - lx[sel]) for yy in ys])
    # log-ratio mean is ~ c (1 - y) near y = 1; the intercept must vanish
    slope, intercept = np.polyfit(1.0 - ys, means, 1)
    trend = classify_trend(x, r, cfg)
    to_one = abs(intercept) < 10 * cfg.dispersion_tol
    if trend == CONVERGING and not to_one:
        trend = INCONCLUSIVE
    return _estimate(x, r, cfg, extras={"y_to_1": float(math.exp(intercept)), "log_slope": float(slope)}, trend=trend)


def matuszewska_upper(tail, y_grid: Sequence[float] = (1.5, 2.0, 4.0, 8.0), x_grid=None,
                      cfg: TrendConfig = DEFAULT_TREND) -> LimitEstimate:
    """Upper Matuszewska index of 1/tail.

    For each y the liminf of tail(x y)/tail(x) is proxied by the window
    minimum; ``value`` is the slope of -log of those minima against log y
    (a fit through the origin).  ``samples`` hold the same slope computed
    pointwise in x, whose trend decides divergence (index infinite).
    """
    ys = np.asarray(y_grid, dtype=float)
    if np.any(ys <= 1):
        raise DomainError("y_grid values must exceed 1")
    lt = _log_tail_fn(tail)
    x = _grid(x_grid)
    lx = np.asarray(lt(x), dtype=float)
    lxy = np.array([np.asarray(lt(x * yy), dtype=float) for yy in ys])
    m = _usable(x, lx, *lxy, cfg=cfg)
    x, lx, lxy = x[:m], lx[:m], lxy[:, :m]
    neg = -(lxy - lx[None, :])  # -log tail(xy)/tail(x), one row per y
    ly = np.log(ys)
    pointwise = (ly @ neg) / (ly @ ly)
    sel = _window(x, cfg)
    worst = neg[:, sel].min(axis=1)  # -log of the liminf proxy
    value = float((ly @ worst) / (ly @ ly))
    if np.all(lx == lx[0]) and np.all(lxy == lx[0]):
        trend = INCONCLUSIVE  # the tail does not move on this grid
        value = float("nan")
    else:
        trend = classify_trend(x, pointwise, cfg)
    est = _estimate(x, pointwise, cfg, trend=trend, extras={"per_y": dict(zip(ys.tolist(), worst.tolist()))})
    est.value = value
    est.aggregation = "slope"
    return est


def upper_order(tail, x_grid=None, cfg: TrendConfig = DEFAULT_TREND) -> LimitEstimate:
    """-log tail(x)/log x, with the window maximum as limsup proxy."""
    lt = _log_tail_fn(tail)
    x = _grid(x_grid)
    x = x[x > 1]
    lx = np.asarray(lt(x), dtype=float)
    m = _usable(x, lx, cfg=cfg)
    x, lx = x[:m], lx[:m]
    return _estimate(x, -lx / np.log(x), cfg, aggregation="max")


# ---------------------------------------------------------------------------
# Gumbel domain
# ---------------------------------------------------------------------------


def gumbel_aux(count: CountModel, x_grid=None) -> Callable:
    """The analytic auxiliary function if the model has one, else the mean excess."""
    if count.has_aux:
        return count.aux

    def mean_excess(x):
        xa = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.array([count_mean_excess(count, float(v)) for v in xa])
        return out if np.ndim(x) else float(out[0])

    return mean_excess


def self_neglect_check(a: Callable, x_grid=None, y_set: Sequence[float] = (1.0,),
                       cfg: TrendConfig = DEFAULT_TREND) -> LimitEstimate:
    """a(x + y a(x))/a(x) for each y; samples follow the y farthest from 1.

    ``extras["a_over_x"]`` is the LimitEstimate of a(x)/x, which must tend
    to 0 for a self-neglecting auxiliary function; ``extras["holds"]`` is
    the combined verdict (True, False or None when undecided).
    """
    x = _grid(x_grid)
    ax = np.asarray(a(x), dtype=float)
    if np.any(ax <= 0) or not np.all(np.isfinite(ax)):
        raise DomainError("auxiliary function must be positive and finite on the grid")
    ratios = np.array([np.asarray(a(x + yy * ax), dtype=float) / ax for yy in y_set])
    sel = _window(x, cfg)
    dev = np.abs(ratios[:, sel] - 1.0).max(axis=1)
    worst = int(np.argmax(dev))
    a_over_x = ax / x
    ax_est = _estimate(x, a_over_x, cfg)
    shrinking = classify_trend(x, -np.log(a_over_x), cfg) == DIVERGING or ax_est.value < cfg.dispersion_tol
    if shrinking:
        ax_est.trend = CONVERGING  # towards 0
    est = _estimate(x, ratios[worst], cfg)
    near_one = abs(est.value - 1.0) < 10 * cfg.dispersion_tol
    if near_one and shrinking and est.trend == CONVERGING:
        holds = True
    elif not near_one and est.trend == CONVERGING:
        holds = False
    else:
        holds = None
    est.extras = {"a_over_x": ax_est, "y": float(y_set[worst]), "holds": holds,
                  "per_y": {float(yy): float(d) for yy, d in zip(y_set, dev)}}
    return est


def representation_integrand(count: CountModel, x_grid=None, aux: Optional[Callable] = None,
                             cfg: TrendConfig = DEFAULT_TREND) -> LimitEstimate:
    """a(x) times the discrete log-derivative of the tail; tends to 1 in the Gumbel domain."""
    a = aux if aux is not None else gumbel_aux(count)
    x = _grid(x_grid)
    n = np.floor(x)
    lx = np.asarray(count.logtail(n), dtype=float)
    m = _usable(x, lx, cfg=cfg)
    x, n = x[:m], n[:m]
    drop = np.asarray(count.log_tail_drop(n), dtype=float)  # log tail(n-1) - log tail(n)
    g = np.asarray(a(x), dtype=float) * drop
    return _estimate(x, g, cfg)


def _int_grid(n_grid) -> np.ndarray:
    n = np.unique(np.floor(_grid(n_grid)))
    if n[0] < 1:
        raise DomainError("n grid must start at 1 or above")
    return n


def anderson_gumbel_check(count: CountModel, n_grid=None, cfg: TrendConfig = DEFAULT_TREND,
                          increment_tol: float = 0.05) -> LimitEstimate:
    """q_n = P[N > n]/P[N = n]: must diverge with vanishing increments.

    ``samples`` hold q_n; ``value`` is the largest |q_{n+1} - q_n| in the
    window, ``extras["holds"]`` the verdict.
    """
    n = _int_grid(n_grid)
    lx = np.asarray(count.logtail(n + 1), dtype=float)
    m = _usable(n, lx, cfg=cfg)
    n = n[:m]
    drop = np.asarray(count.log_tail_drop(np.concatenate([n, n + 1])), dtype=float)
    if np.any(drop <= 0):
        raise DomainError("zero probability mass on the n grid")
    q = 1.0 / np.expm1(drop)
    qn, qn1 = q[:m], q[m:]
    inc = qn1 - qn
    sel = _window(n, cfg)
    worst = float(np.max(np.abs(inc[sel])))
    q_trend = classify_trend(n, qn, cfg)
    inc_trend = classify_trend(n, -np.log(np.maximum(np.abs(inc), 1e-300)), cfg)
    vanishing = worst < increment_tol and (inc_trend != INCONCLUSIVE or worst < cfg.dispersion_tol)
    if q_trend == DIVERGING and vanishing:
        holds = True
    elif q_trend == CONVERGING or np.min(np.abs(inc[sel])) >= increment_tol:
        holds = False  # q_n bounded, or its increments stay away from 0
    else:
        holds = None
    est = _estimate(n, qn, cfg, trend=q_trend,
                    extras={"increments": inc, "increment_trend": inc_trend, "holds": holds})
    est.value = worst
    est.aggregation = "max_abs_increment"
    return est


def von_mises_frechet_check(count: CountModel, n_grid=None, cfg: TrendConfig = DEFAULT_TREND) -> LimitEstimate:
    """n P[N = n]/P[N > n], whose limit is the regular-variation index."""
    n = _int_grid(n_grid)
    lx = np.asarray(count.logtail(n), dtype=float)
    m = _usable(n, lx, cfg=cfg)
    n, lx = n[:m], lx[:m]
    lp = np.asarray(count.logpmf(n), dtype=float)
    if np.any(~np.isfinite(lp)):
        raise DomainError("zero probability mass on the n grid")
    return _estimate(n, n * np.exp(lp - lx), cfg)


def lower_order(f: Callable, x_grid=None, cfg: TrendConfig = DEFAULT_TREND, method: str = "ratio") -> LimitEstimate:
    """Lower order of a positive function, window minimum as liminf proxy.

    ``method="ratio"`` samples log f(x)/log x, which carries a log C/log x
    bias for f = C x^d.  ``method="slope"`` samples the local log-log slope,
    which removes constant factors exactly.
    """
    x = _grid(x_grid)
    x = x[x > 1]
    fx = np.asarray(f(x), dtype=float)
    if np.any(fx <= 0) or not np.all(np.isfinite(fx)):
        raise DomainError("f must be positive and finite on the grid")
    lf, lx = np.log(fx), np.log(x)
    if method == "ratio":
        return _estimate(x, lf / lx, cfg, aggregation="min")
    if method == "slope":
        s = np.diff(lf) / np.diff(lx)
        return _estimate(x[1:], s, cfg, aggregation="min")
    raise DomainError(f"unknown method {method!r}")

"""Desk-scale oracles for P[S_N > x] with N independent of the claims.

Two independent routes:

* :func:`exact_compound_tail` works on a lattice severity.  The law of S_N
  is assembled in the Fourier domain by evaluating the count's probability
  generating function at the lattice characteristic function, one
  frequency at a time, with only as many terms as that frequency needs.
  Counts beyond ``n_tr`` (where a Chernoff bound certifies P[S_n <= x] is
  negligible) enter through their tail probability, so heavy counts never
  force a huge ``n``.  Every approximation made is folded into brackets.
  A sequential log-scaled convolution (``method="direct"``) is kept as the
  correctness anchor for small problems.
* :func:`poisson_inversion_tail` uses the renewal identity
  P[S_N > t] = sum_k Poisson(k; t/mu) P[N > k] for exponential claims.

The recursion S_n = S_{n-1} + X_n in the direct method is the only serial
dependency; the Fourier route is independent across frequencies.
"""
from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import fft as sfft
from scipy import special, stats

from .distributions import CountModel, LatticePMF, SeverityModel, discretize_severity
from .errors import ContractError, DomainError, NumericError, ResourceError

__all__ = [
    "TailCurve",
    "exact_compound_tail",
    "lattice_compound_tail",
    "poisson_inversion_tail",
    "refine_and_extrapolate",
    "DEFAULT_MEMORY_BUDGET",
]

#: bytes the Fourier buffers may occupy before a ResourceError is raised
DEFAULT_MEMORY_BUDGET = int(os.environ.get("COMPOUND_TAILS_MEMORY", 1_500_000_000))

_EPS = np.finfo(float).eps
_LOG10 = math.log(10.0)


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


@dataclass
class TailCurve:
    """log P[S_N > x] on a grid, with optional brackets or MC standard errors."""

    x: np.ndarray
    log_tail: np.ndarray
    log_lower: Optional[np.ndarray] = None
    log_upper: Optional[np.ndarray] = None
    stderr: Optional[np.ndarray] = None
    provenance: str = "lattice_oracle"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.log_tail = np.asarray(self.log_tail, dtype=float)
        for name in ("log_lower", "log_upper", "stderr"):
            v = getattr(self, name)
            if v is not None:
                setattr(self, name, np.asarray(v, dtype=float))
        if self.x.shape != self.log_tail.shape:
            raise ContractError("x and log_tail must have the same shape")

    @property
    def tail(self) -> np.ndarray:
        return np.exp(self.log_tail)

    @property
    def has_brackets(self) -> bool:
        return self.log_lower is not None and self.log_upper is not None

    def lower(self) -> np.ndarray:
        return self.log_tail if self.log_lower is None else self.log_lower

    def upper(self) -> np.ndarray:
        return self.log_tail if self.log_upper is None else self.log_upper

    def check_invariants(self, atol: float = 1e-9) -> None:
        if np.any(np.diff(self.x) <= 0):
            raise ContractError("x grid must be strictly increasing")
        if np.any(self.log_tail > atol):
            raise ContractError("probabilities must not exceed 1")
        if self.has_brackets:
            lo, hi = self.log_lower, self.log_upper
            if np.any(lo > self.log_tail + atol) or np.any(self.log_tail > hi + atol):
                raise ContractError("bracket does not contain the point value")

    # -- serialization ------------------------------------------------------
    def to_csv(self, path=None) -> str:
        """CSV with columns x, log10_tail, log10_lower, log10_upper, provenance[, stderr]."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        header = ["x", "log10_tail", "log10_lower", "log10_upper", "provenance"]
        if self.stderr is not None:
            header.append("stderr")
        w.writerow(header)
        lo = self.log_lower if self.log_lower is not None else np.full(self.x.shape, np.nan)
        hi = self.log_upper if self.log_upper is not None else np.full(self.x.shape, np.nan)
        for i in range(len(self.x)):
            row = [
                _fmt(self.x[i]),
                _fmt(self.log_tail[i] / _LOG10),
                _fmt(lo[i] / _LOG10),
                _fmt(hi[i] / _LOG10),
                self.provenance,
            ]
            if self.stderr is not None:
                row.append(_fmt(self.stderr[i]))
            w.writerow(row)
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, path_or_text) -> "TailCurve":
        if isinstance(path_or_text, str) and "\n" in path_or_text:
            text = path_or_text
        else:
            with open(path_or_text, newline="") as fh:
                text = fh.read()
        rows = list(csv.DictReader(io.StringIO(text)))
        if not rows:
            raise ContractError("empty tail CSV")
        col = lambda k: np.array([float(r[k]) for r in rows]) * _LOG10  # noqa: E731
        lo, hi = col("log10_lower"), col("log10_upper")
        stderr = np.array([float(r["stderr"]) for r in rows]) if "stderr" in rows[0] else None
        return cls(
            x=np.array([float(r["x"]) for r in rows]),
            log_tail=col("log10_tail"),
            log_lower=None if np.all(np.isnan(lo)) else lo,
            log_upper=None if np.all(np.isnan(hi)) else hi,
            stderr=stderr,
            provenance=rows[0]["provenance"],
        )


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def _as_grid(x_grid) -> np.ndarray:
    x = np.asarray(x_grid, dtype=float).reshape(-1)
    if x.size == 0:
        raise ContractError("empty x grid")
    if np.any(x < 0) or np.any(~np.isfinite(x)):
        raise DomainError("x grid must be finite and nonnegative")
    if np.any(np.diff(x) <= 0):
        raise ContractError("x grid must be strictly increasing")
    return x


def _safe_log(v):
    v = np.asarray(v, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(v > 0, np.log(np.maximum(v, 1e-320)), -np.inf)


class _Chernoff:
    """Chernoff bounds for sums of iid lattice claims on a fixed t grid.

    Any t gives a valid bound, so minimizing over a grid is rigorous.
    """

    def __init__(self, lattice: LatticePMF, n_t: int = 96):
        scale = max(lattice.mean(), lattice.h)
        self.t = np.geomspace(1e-6, 1e3, n_t) / scale
        self.k_minus = lattice.log_mgf(-self.t)  # log E[e^{-tX}; X finite]
        span = (len(lattice) - 1) * lattice.h
        # upper deviations: t up to where exp(t * span) stays representable
        t_up = self.t[self.t * span < 600.0] if span > 0 else self.t
        self.t_up = t_up if t_up.size else self.t[:1]
        self.k_plus = lattice.log_mgf(self.t_up)
        self.ess_inf = lattice.offset * lattice.h

    def log_lower_tail(self, n, x):
        """Bound on log P[S_n <= x] (claims lost past the lattice count as large)."""
        n = np.asarray(n, dtype=float)
        x = np.asarray(x, dtype=float)
        b = np.min(self.t[None, :] * x[..., None] + n[..., None] * self.k_minus[None, :], axis=-1)
        b = np.minimum(b, 0.0)
        return np.where(n * self.ess_inf > x, -np.inf, b)

    def log_upper_tail(self, n, s):
        """Bound on log P[S_n >= s] for the finite part of the lattice law."""
        n = np.asarray(n, dtype=float)
        b = np.min(n[..., None] * self.k_plus[None, :] - self.t_up[None, :] * np.asarray(s)[..., None], axis=-1)
        return np.minimum(b, 0.0)


def _poly_eval(z: np.ndarray, coeffs: np.ndarray, block: int = 128) -> np.ndarray:
    """sum_n coeffs[n] z^n for every z, in blocks of powers."""
    n = len(coeffs)
    b = min(block, n)
    zp = np.power(z[:, None], np.arange(b)[None, :])
    zb = z**b
    acc = np.zeros(z.shape, dtype=complex)
    zpow = np.ones(z.shape, dtype=complex)
    for n0 in range(0, n, b):
        c = coeffs[n0:n0 + b]
        acc += zpow * (zp[:, : len(c)] @ c)
        zpow *= zb
    return acc


def _pgf_at(phi: np.ndarray, p: np.ndarray, tol: float = 1e-18) -> np.ndarray:
    """sum_{n < len(p)} p_n phi^n, truncating each frequency where |phi|^n < tol."""
    mag = np.abs(phi)
    with np.errstate(divide="ignore"):
        need = np.where(mag < 1.0, np.ceil(math.log(tol) / np.log(np.maximum(mag, 1e-300))), np.inf)
    need = np.clip(need, 1, len(p)).astype(np.int64)
    order = np.argsort(-need, kind="stable")
    sneed = need[order]
    out = np.empty(phi.shape, dtype=complex)
    i = 0
    while i < len(order):
        top = int(sneed[i])
        b = min(128, top)
        cap = max(1, (1 << 22) // b)
        # chunk of frequencies needing between top/2 and top terms
        j = int(np.searchsorted(-sneed, -max(top // 2, 1), side="right"))
        j = min(max(j, i + 1), i + cap)
        idx = order[i:j]
        out[idx] = _poly_eval(phi[idx], p[:top], block=b)
        i = j
    return out


def _lattice_tail_at(rev: np.ndarray, g: np.ndarray, x: np.ndarray, h: float, interpolate: bool) -> np.ndarray:
    """P[S > x] from the lattice masses g.

    Round lattices of continuous severities spread each mass over its cell
    (midpoint rule), which keeps the O(h^2) bias needed for extrapolation.
    """
    n = len(g)
    if interpolate:
        u = x / h
        k = np.floor(u + 0.5 + 1e-9).astype(np.int64)
        k = np.clip(k, 0, n - 1)
        frac = np.clip(k + 0.5 - u, 0.0, 1.0)
        return rev[k + 1] + g[k] * frac
    k = np.floor(x / h + 1e-9).astype(np.int64) + 1
    k = np.clip(k, 0, n)
    return rev[k]


# ---------------------------------------------------------------------------
# lattice oracle
# ---------------------------------------------------------------------------


def exact_compound_tail(
    count: CountModel,
    sev_lattice: LatticePMF,
    x_grid,
    eps_N: Optional[float] = None,
    *,
    method: str = "auto",
    memory_budget: int = DEFAULT_MEMORY_BUDGET,
    direct_ops_budget: float = 2e9,
) -> TailCurve:
    """P[S_N > x] for the lattice severity, with truncation brackets.

    ``eps_N`` bounds the count mass dropped from the sum; by default it is
    1e-14 times the heavy-N tail at the largest x.  For ``floor`` lattices
    the lower bracket is a rigorous lower bound for the continuous
    severity, for ``upper`` lattices the upper bracket is a rigorous upper
    bound.
    """
    x = _as_grid(x_grid)
    lat = sev_lattice
    h = lat.h
    mu_lat = max(lat.mean(), h)
    if eps_N is None:
        ref = float(np.exp(count.logtail(x[-1] / mu_lat)))
        eps_N = 1e-14 * ref if ref > 0 else 1e-300
        eps_N = min(max(eps_N, 1e-300), 1e-3)
    elif not 0 < eps_N <= 1e-3:
        raise DomainError("eps_N must lie in (0, 1e-3]")

    ch = _Chernoff(lat)
    n_eps = count.n_max(eps_N)
    # n_hi: P[S_{n_hi+1} <= x_max] is certified below 1e-18
    if ch.log_lower_tail(n_eps + 1, x[-1]) <= math.log(1e-18):
        lo, hi = 0, n_eps
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if ch.log_lower_tail(mid + 1, x[-1]) <= math.log(1e-18):
                hi = mid
            else:
                lo = mid
        n_tr = hi
    else:
        n_tr = n_eps
    p = count.pmf_array(n_tr)
    log_tail_tr = float(count.logtail(n_tr))

    # mass past the lattice behaves as an infinitely large claim
    lost = lat.tail_mass
    if method == "auto":
        ops = float(n_tr) * (len(lat) + x[-1] / h) * len(lat)
        method = "direct" if ops <= direct_ops_budget and n_tr <= 20_000 else "fft"

    if method == "direct":
        g, extra, wrap, L = _direct_compound(p, lat, x, h, memory_budget)
        roundoff = np.zeros(x.shape)
    elif method == "fft":
        g, extra, wrap, L, roundoff_scale = _fft_compound(p, lat, x, ch, n_tr, eps_N, memory_budget)
    else:
        raise DomainError(f"unknown method {method!r}")
    lost_total = lost + extra
    n = np.arange(len(p), dtype=float)
    lost_contrib = float(p @ -np.expm1(n * math.log1p(-min(lost_total, 1.0)))) if lost_total > 0 else 0.0

    interpolate = lat.mode == "round" and lat.continuous
    if interpolate:
        # N = 0 puts a genuine atom at 0, which must not be spread over a cell
        g = g.copy()
        g[0] = max(g[0] - p[0], 0.0)
    rev = np.concatenate([np.cumsum(g[::-1])[::-1], [0.0]])
    body = _lattice_tail_at(rev, g, x, h, interpolate)
    if method == "fft":
        m = np.maximum(L - x / h, 1.0)
        roundoff = roundoff_scale * np.sqrt(m)

    r_hi = math.exp(log_tail_tr)
    r_lo = r_hi * -np.expm1(ch.log_lower_tail(n_tr + 1, x))
    include_lost = lat.mode != "floor"
    point = body + r_lo + (lost_contrib if include_lost else 0.0)
    lower = body - wrap - roundoff + r_lo + (lost_contrib if include_lost else 0.0)
    upper = body + wrap + roundoff + r_hi + lost_contrib
    point = np.clip(point, 0.0, 1.0)
    lower = np.clip(lower, 0.0, point)
    upper = np.clip(np.maximum(upper, point), 0.0, 1.0)
    return TailCurve(
        x=x,
        log_tail=_safe_log(point),
        log_lower=_safe_log(lower),
        log_upper=_safe_log(upper),
        provenance="lattice_oracle",
        meta={"h": h, "mode": lat.mode, "n_tr": int(n_tr), "n_eps": int(n_eps), "L": int(L), "method": method},
    )


def _fft_compound(p, lat, x, ch, n_tr, eps_N, memory_budget):
    h = lat.h
    # span: P[S_{n_tr} >= span] certified below eps_N for the finite lattice part
    s_lo = x[-1] + 2 * h
    span = max(s_lo, 2.0 * n_tr * max(lat.mean(), h) + 10 * h)
    target = math.log(max(eps_N, 1e-300))
    while ch.log_upper_tail(n_tr, span) > target:
        span *= 1.5
        if span / h * 16 > 64 * memory_budget:
            break
    lo, hi = s_lo, span
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        if ch.log_upper_tail(n_tr, mid) <= target:
            hi = mid
        else:
            lo = mid
    span = hi
    L = sfft.next_fast_len(int(math.ceil(span / h)) + 2, real=True)
    if L * 8 * 4 > memory_budget:
        raise ResourceError(
            f"Fourier buffer of {L} points exceeds the memory budget "
            f"({memory_budget} bytes); try h >= {h * L * 32 / memory_budget:.3g}"
        )
    f_full = lat.mass()
    extra = float(f_full[L:].sum()) if len(f_full) > L else 0.0
    f = f_full[:L] if len(f_full) >= L else np.concatenate([f_full, np.zeros(L - len(f_full))])
    phi = sfft.rfft(f)
    ghat = _pgf_at(phi, p)
    del phi
    g = sfft.irfft(ghat, n=L)
    l1 = float(np.abs(ghat).sum())
    del ghat
    wrap = float(np.exp(np.ravel(ch.log_upper_tail(n_tr, L * h))[0]))
    roundoff_scale = 8.0 * _EPS * math.log2(L) * 2.0 * l1 / L
    return g, extra, wrap, L, roundoff_scale


def _direct_compound(p, lat, x, h, memory_budget):
    """Sequential S_n = S_{n-1} + X_n with per-step rescaling; exact sums."""
    f = lat.mass()
    L = int(math.floor(x[-1] / h)) + 2
    if 8 * L * 4 > memory_budget:
        raise ResourceError(f"direct convolution buffer of {L} points exceeds the memory budget; use a coarser h")
    s = np.zeros(L)
    s[0] = 1.0
    log_scale = 0.0
    acc = p[0] * s.copy()
    dropped_total = 0.0
    beyond = 0.0  # mass of S_k already past the buffer; it stays past it
    for k in range(1, len(p)):
        full = np.convolve(s, f)
        beyond = beyond * lat.total + math.exp(log_scale) * float(full[L:].sum())
        s = full[:L]
        top = float(s.max())
        dropped_total += p[k] * beyond
        if top > 0:
            s /= top
            log_scale += math.log(top)
            acc += p[k] * math.exp(log_scale) * s
    # mass pushed past the buffer exceeds every grid point: add it to the top cell
    acc[-1] += dropped_total
    return acc, 0.0, 0.0, L


def lattice_compound_tail(
    count: CountModel,
    severity: SeverityModel,
    h: float,
    x_grid,
    eps_N: Optional[float] = None,
    *,
    rigorous: bool = True,
    sev_eps: float = 1e-16,
    **kwargs,
) -> TailCurve:
    """Round-lattice point estimate with floor/upper brackets for the true severity.

    With ``rigorous=False`` only the round lattice is computed and the
    brackets cover the lattice law alone.
    """
    rnd = exact_compound_tail(count, discretize_severity(severity, h, "round", eps=sev_eps), x_grid, eps_N, **kwargs)
    if not rigorous:
        return rnd
    flo = exact_compound_tail(count, discretize_severity(severity, h, "floor", eps=sev_eps), x_grid, eps_N, **kwargs)
    upp = exact_compound_tail(count, discretize_severity(severity, h, "upper", eps=sev_eps), x_grid, eps_N, **kwargs)
    lower = np.minimum(flo.log_lower, rnd.log_tail)
    upper = np.maximum(upp.log_upper, rnd.log_tail)
    meta = dict(rnd.meta, rigorous=True)
    return TailCurve(rnd.x, rnd.log_tail, lower, upper, provenance="lattice_oracle", meta=meta)


# ---------------------------------------------------------------------------
# Poisson inversion
# ---------------------------------------------------------------------------


def poisson_inversion_tail(count: CountModel, t_grid, mu: float, m: float = 40.0) -> TailCurve:
    """P[S_N > t] = sum_k Poisson(k; t/mu) P[N > k] for iid exponential claims.

    The sum runs over the Poisson bulk t/mu +- m sd in log space; the mass
    outside the window goes into the upper bracket.
    """
    t = _as_grid(t_grid)
    if not mu > 0:
        raise DomainError("mu must be positive")
    out = np.empty(t.shape)
    rem = np.empty(t.shape)
    for i, ti in enumerate(t):
        lam = ti / mu
        sd = math.sqrt(lam)
        k_lo = max(0, int(math.floor(lam - m * sd - m)))
        k_hi = int(math.ceil(lam + m * sd + m))
        k = np.arange(k_lo, k_hi + 1, dtype=float)
        terms = stats.poisson.logpmf(k, lam) + np.asarray(count.logtail(k))
        out[i] = special.logsumexp(terms) if np.isfinite(terms).any() else -np.inf
        # below the window P[N > k] <= 1; above it P[N > k] <= P[N > k_hi]
        below = stats.poisson.logcdf(k_lo - 1, lam) if k_lo > 0 else -np.inf
        above = stats.poisson.logsf(k_hi, lam) + float(count.logtail(k_hi))
        rem[i] = np.logaddexp(below, above)
    upper = np.logaddexp(out, rem)
    return TailCurve(
        x=t,
        log_tail=out,
        log_lower=out.copy(),
        log_upper=np.minimum(upper, 0.0),
        provenance="poisson_inversion",
        meta={"mu": mu, "m": m},
    )


# ---------------------------------------------------------------------------
# Richardson extrapolation in h
# ---------------------------------------------------------------------------


def refine_and_extrapolate(curve_h: TailCurve, curve_h_half: TailCurve, order: float = 2.0) -> TailCurve:
    """Extrapolate log-tails from spacings h and h/2 to h -> 0.

    Round-lattice bias is O(h^2), hence the default order.  The output
    bracket is the union of both input brackets and the extrapolated value.
    """
    if curve_h.x.shape != curve_h_half.x.shape or not np.array_equal(curve_h.x, curve_h_half.x):
        raise ContractError("curves must share the same x grid")
    h1 = curve_h.meta.get("h")
    h2 = curve_h_half.meta.get("h")
    if h1 is not None and h2 is not None and not math.isclose(h1, 2 * h2):
        raise ContractError(f"expected spacings h and h/2, got {h1} and {h2}")
    a, b = curve_h.log_tail, curve_h_half.log_tail
    with np.errstate(invalid="ignore"):
        ext = np.where(np.isfinite(a) & np.isfinite(b), b + (b - a) / (2.0**order - 1.0), b)
    ext = np.minimum(ext, 0.0)
    lower = np.minimum.reduce([curve_h.lower(), curve_h_half.lower(), ext])
    upper = np.maximum.reduce([curve_h.upper(), curve_h_half.upper(), ext])
    meta = dict(curve_h_half.meta, extrapolated_from=(h1, h2), order=order)
    return TailCurve(curve_h.x, ext, lower, upper, provenance=curve_h.provenance, meta=meta)

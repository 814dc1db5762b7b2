"""Claim-count and claim-size laws.

Count models are integer valued and expose their tail ``P[N > x]`` in log
space so that probabilities down to 1e-300 (and below, for the closed
forms) stay representable. Severity models are nonnegative laws with the
moments and transforms the checkers need.

All models are frozen dataclasses: immutable and safe to share between
threads.
"""
from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Optional, Sequence

import mpmath
import numpy as np
from scipy import integrate, special, stats

from .errors import DomainError, NumericError

__all__ = [
    "CountModel",
    "SeverityModel",
    "LatticePMF",
    "DiscretizedWeibull",
    "ParetoCount",
    "MixedPoissonEarthquake",
    "GeometricCount",
    "PoissonCount",
    "DegenerateCount",
    "ExponentialSeverity",
    "BoundedSeverity",
    "ParetoSeverity",
    "make_discretized_weibull",
    "make_pareto_count",
    "make_mixed_poisson_earthquake",
    "make_geometric_count",
    "make_poisson_count",
    "make_degenerate_count",
    "make_severity_exponential",
    "make_severity_bounded",
    "make_severity_pareto",
    "make_severity_degenerate",
    "discretize_severity",
    "count_mean_excess",
    "count_from_spec",
    "severity_from_spec",
]

_LOG_TINY = math.log(1e-300)


def _scalar_or_array(values, like):
    if np.ndim(like) == 0:
        return float(np.asarray(values).reshape(-1)[0])
    return values


def _lgamma_diff(z, d):
    """log Gamma(z + d) - log Gamma(z) without cancellation for large z."""
    z = np.asarray(z, dtype=float)
    small = z < 50.0
    zs = np.where(small, z, 50.0)
    out = special.gammaln(zs + d) - special.gammaln(zs)
    zl = np.where(small, 50.0, z)
    w = zl + d
    # Stirling: differences of (t - 1/2) log t - t + sum B_2k / (2k (2k-1) t^(2k-1))
    big = (zl - 0.5) * np.log1p(d / zl) + d * np.log(w) - d
    big += (1.0 / w - 1.0 / zl) / 12.0 - (w**-3 - zl**-3) / 360.0 + (w**-5 - zl**-5) / 1260.0
    return np.where(small, out, big)


def _log1mexp(a):
    """log(1 - exp(a)) for a <= 0, accurate on both ends."""
    a = np.asarray(a, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(a > -math.log(2.0), np.log(-np.expm1(a)), np.log1p(-np.exp(a)))
    return out


# ---------------------------------------------------------------------------
# Count models
# ---------------------------------------------------------------------------


class CountModel(ABC):
    """Integer-valued claim-count law.

    Subclasses implement :meth:`_logtail_int` (log P[N > n] at integers n >= 0)
    and :meth:`log_tail_sum`; everything else has a generic default.
    """

    family: str = "count"
    #: declared truncation tolerance for summations over the support
    eps_N: float = 1e-12
    #: index alpha of a regularly varying tail x^-alpha (constant slowly varying part)
    rv_index: Optional[float] = None
    #: True when E[exp(tN)] < inf for some t > 0
    light_tailed: bool = False

    # -- tails ---------------------------------------------------------------
    @abstractmethod
    def _logtail_int(self, n: np.ndarray) -> np.ndarray:
        ...

    def logtail(self, x):
        """log P[N > x]; right-continuous step function of x."""
        xa = np.asarray(x, dtype=float)
        out = np.zeros(xa.shape)
        pos = xa >= 0
        if np.any(pos):
            out[pos] = self._logtail_int(np.floor(xa[pos]))
        return _scalar_or_array(out, x)

    def tail(self, x):
        return np.exp(self.logtail(x))

    def cdf(self, x):
        return -np.expm1(self.logtail(x))

    def log_tail_drop(self, n):
        """log P[N > n-1] - log P[N > n] for integers n >= 0 (P[N > -1] = 1)."""
        n = np.asarray(n, dtype=float)
        return self.logtail(n - 1) - self.logtail(n)

    def logpmf(self, n):
        na = np.asarray(n, dtype=float)
        out = np.full(na.shape, -np.inf)
        ok = (na >= 0) & (na == np.floor(na))
        if np.any(ok):
            nn = na[ok]
            out[ok] = self.logtail(nn - 1) + _log1mexp(-self.log_tail_drop(nn))
        return _scalar_or_array(out, n)

    def pmf(self, n):
        return np.exp(self.logpmf(n))

    def pmf_array(self, n_max: int) -> np.ndarray:
        """pmf(0), ..., pmf(n_max) as a float array."""
        return np.exp(np.asarray(self.logpmf(np.arange(n_max + 1, dtype=float))))

    # -- first moment and mean excess ---------------------------------------
    def log_tail_sum(self, k0: int) -> float:
        """log of sum_{k >= k0} P[N > k] = log E[(N - k0)^+]."""
        return self._generic_log_tail_sum(int(k0))

    def _generic_log_tail_sum(self, k0: int, chunk: int = 1 << 16, max_terms: int = 1 << 26) -> float:
        total = -np.inf
        start = k0
        while start - k0 < max_terms:
            lt = np.asarray(self.logtail(np.arange(start, start + chunk, dtype=float)))
            part = special.logsumexp(lt) if np.isfinite(lt).any() else -np.inf
            total = np.logaddexp(total, part)
            last = lt[-1]
            # stop once the chunk is negligible and its terms decay fast
            if part - total < -40 or (last - lt[0] < -40 and last - total < -40):
                return float(total)
            start += chunk
        raise NumericError(
            f"{self.family}: tail sum from {k0} did not converge within {max_terms} terms",
            achieved=float(np.exp(last - total)),
        )

    @property
    def mean(self) -> float:
        return float(np.exp(self.log_tail_sum(0)))

    def aux(self, x):
        """Analytic auxiliary function a(x) of the Gumbel limit, or None."""
        return None

    @property
    def has_aux(self) -> bool:
        return False

    # -- quantiles and sampling ---------------------------------------------
    def _isf_guess(self, log_s: np.ndarray) -> Optional[np.ndarray]:
        return None

    def isf_int(self, log_s):
        """Smallest integer n >= 0 with log P[N > n] <= log_s (vectorized)."""
        ls = np.atleast_1d(np.asarray(log_s, dtype=float))
        guess = self._isf_guess(ls)
        if guess is None:
            hi = np.zeros(ls.shape)
            for _ in range(200):
                bad = np.asarray(self.logtail(hi)) > ls
                if not bad.any():
                    break
                hi = np.where(bad, 2 * hi + 1, hi)
            else:
                raise NumericError(f"{self.family}: quantile search did not terminate")
            lo = np.full(ls.shape, -1.0)
            # invariant: logtail(lo) > ls >= logtail(hi)
            while np.any(hi - lo > 1):
                mid = np.floor((lo + hi) / 2)
                cond = np.asarray(self.logtail(mid)) <= ls
                hi = np.where(cond, mid, hi)
                lo = np.where(cond, lo, mid)
            out = hi
        else:
            out = np.clip(np.floor(guess), 0, None)
            for _ in range(64):
                up = np.asarray(self.logtail(out)) > ls
                down = (out > 0) & (np.asarray(self.logtail(out - 1)) <= ls)
                if not (up.any() or down.any()):
                    break
                out = out + up - down
        return _scalar_or_array(out, log_s)

    def ppf(self, u):
        """Quantile Q(u) = min{n : P[N <= n] >= u}."""
        u = np.asarray(u, dtype=float)
        with np.errstate(divide="ignore"):
            return self.isf_int(np.log1p(-u))

    def n_max(self, eps: float) -> int:
        """min{n : P[N > n] <= eps}."""
        if not 0 < eps < 1:
            raise DomainError("eps must lie in (0, 1)")
        return int(self.isf_int(math.log(eps)))

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        u = rng.random(size)
        return self.ppf(u).astype(np.int64)

    @property
    def family_tag(self) -> dict:
        return {"family": self.family, **self.params}

    @property
    @abstractmethod
    def params(self) -> dict:
        ...


@dataclass(frozen=True)
class DiscretizedWeibull(CountModel):
    """N = floor(Y), P[Y > y] = exp(-y^beta)."""

    beta: float
    family = "discretized_weibull"

    def _logtail_int(self, n):
        return -np.power(n + 1.0, self.beta)

    def log_tail_drop(self, n):
        n = np.asarray(n, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            d = np.power(n, self.beta) * np.expm1(self.beta * np.log1p(1.0 / n))
        return np.where(n <= 0, np.power(np.maximum(n, 0) + 1.0, self.beta), d)

    def logpmf(self, n):
        na = np.asarray(n, dtype=float)
        out = np.full(na.shape, -np.inf)
        ok = (na >= 0) & (na == np.floor(na))
        nn = na[ok]
        out[ok] = -np.power(nn, self.beta) + _log1mexp(-self.log_tail_drop(nn))
        return _scalar_or_array(out, n)

    def log_tail_sum(self, k0):
        k0 = max(int(k0), 0)
        b = self.beta
        j0 = k0 + 1
        s0 = j0**b
        n_terms = int(math.ceil((s0 + 45.0) ** (1.0 / b))) - j0 + 1
        if n_terms <= 4_000_000:
            j = np.arange(j0, j0 + n_terms, dtype=float)
            return float(special.logsumexp(-np.power(j, b)))
        # Euler-Maclaurin on G(t) = exp(-t^beta) from j0; the integral is an
        # upper incomplete gamma function, evaluated in log form.
        a = 1.0 / b
        log_int = float(mpmath.log(mpmath.gammainc(a, s0))) - math.log(b)
        log_g = -s0
        dlog = b * j0 ** (b - 1.0)  # -G'(j0)/G(j0)
        corr = 0.5 + dlog / 12.0
        return float(np.logaddexp(log_int, log_g + math.log(corr)))

    def aux(self, x):
        return np.power(np.asarray(x, dtype=float), 1.0 - self.beta) / self.beta

    @property
    def has_aux(self):
        return True

    def _isf_guess(self, log_s):
        with np.errstate(divide="ignore", invalid="ignore"):
            s = np.maximum(-log_s, 0.0)
            return np.ceil(np.power(s, 1.0 / self.beta)) - 1.0

    def sample(self, rng, size):
        e = rng.standard_exponential(size)
        return np.floor(np.power(e, 1.0 / self.beta)).astype(np.int64)

    @property
    def params(self):
        return {"beta": self.beta}


@dataclass(frozen=True)
class ParetoCount(CountModel):
    """P[N >= n] = (c / (c + n))^gamma, the Poisson-exponential-gamma hierarchy."""

    gamma: float
    c: float
    family = "pareto_count"

    @property
    def rv_index(self):
        return self.gamma

    def _logtail_int(self, n):
        return self.gamma * (math.log(self.c) - np.log(self.c + n + 1.0))

    def log_tail_drop(self, n):
        n = np.asarray(n, dtype=float)
        return self.gamma * np.log1p(1.0 / (self.c + n))

    def log_tail_sum(self, k0):
        if self.gamma <= 1:
            return math.inf
        z = special.zeta(self.gamma, self.c + int(k0) + 1.0)
        return self.gamma * math.log(self.c) + math.log(z)

    def _isf_guess(self, log_s):
        with np.errstate(over="ignore"):
            return self.c * np.expm1(-log_s / self.gamma) - 1.0

    @property
    def params(self):
        return {"gamma": self.gamma, "c": self.c}


@dataclass(frozen=True)
class GeometricCount(CountModel):
    """pmf(n) = p (1 - p)^n, n >= 0."""

    p: float
    family = "geometric_count"
    light_tailed = True

    def _logtail_int(self, n):
        return (n + 1.0) * math.log1p(-self.p)

    def log_tail_drop(self, n):
        return np.full(np.shape(n), -math.log1p(-self.p))

    def log_tail_sum(self, k0):
        return (int(k0) + 1.0) * math.log1p(-self.p) - math.log(self.p)

    def _isf_guess(self, log_s):
        return log_s / math.log1p(-self.p) - 1.0

    @property
    def params(self):
        return {"p": self.p}


@dataclass(frozen=True)
class PoissonCount(CountModel):
    lam: float
    family = "poisson_count"
    light_tailed = True

    def _logtail_int(self, n):
        return stats.poisson.logsf(n, self.lam)

    def logpmf(self, n):
        na = np.asarray(n, dtype=float)
        out = np.where((na >= 0) & (na == np.floor(na)), stats.poisson.logpmf(np.maximum(na, 0), self.lam), -np.inf)
        return _scalar_or_array(out, n)

    def log_tail_sum(self, k0):
        return self._generic_log_tail_sum(int(k0), chunk=4096)

    @property
    def mean(self):
        return self.lam

    @property
    def params(self):
        return {"lambda": self.lam}


@dataclass(frozen=True)
class DegenerateCount(CountModel):
    """N == k almost surely."""

    k: int
    family = "degenerate_count"
    light_tailed = True

    def _logtail_int(self, n):
        return np.where(n < self.k, 0.0, -np.inf)

    def logpmf(self, n):
        na = np.asarray(n, dtype=float)
        return _scalar_or_array(np.where(na == self.k, 0.0, -np.inf), n)

    def log_tail_sum(self, k0):
        v = self.k - int(k0)
        return math.log(v) if v > 0 else -math.inf

    @property
    def params(self):
        return {"k": self.k}


@dataclass(frozen=True)
class MixedPoissonEarthquake(CountModel):
    """N | Lambda ~ Poisson(beta_rate * Lambda), Lambda Pareto.

    ``P[Lambda > lam] = (lam / (scale * lambda_cut))^-alpha`` for
    ``lam >= scale * lambda_cut``.
    """

    alpha: float
    scale: float
    beta_rate: float
    lambda_cut: float
    rtol: float = 1e-8
    family = "mixed_poisson_earthquake"

    @property
    def rv_index(self):
        return self.alpha

    @property
    def _b(self):
        # lower end of the support of beta_rate * Lambda
        return self.beta_rate * self.scale * self.lambda_cut

    # closed forms via P[N > n] = P[G_{n+1} < M], G_k ~ Gamma(k), M = beta*Lambda
    def _logtail_closed(self, n):
        a, b = self.alpha, self._b
        first = special.gammainc(n + 1.0, b)
        second = np.exp(a * math.log(b) - _lgamma_diff(n + 1.0 - a, a)) * special.gammaincc(n + 1.0 - a, b)
        return np.log(first + second)

    def logtail_quad(self, n: float) -> float:
        """log P[N > n] by adaptive quadrature over log-lambda."""
        n = float(n)
        a, b = self.alpha, self._b

        def f(s):
            return special.gammainc(n + 1.0, b * math.exp(s)) * a * math.exp(-a * s)

        s_mid = math.log(max(n + 1.0, b) / b)
        s_hi = math.log((n + 1.0 + 60.0 * math.sqrt(n + 1.0) + 60.0) / b) + 1.0
        pts = sorted({0.0, max(s_mid - 5.0 / math.sqrt(n + 1.0), 0.0), s_mid, s_hi})
        total, err = 0.0, 0.0
        for lo, hi in zip(pts[:-1], pts[1:]):
            if hi <= lo:
                continue
            v, e = integrate.quad(f, lo, hi, epsabs=0.0, epsrel=self.rtol * 0.1, limit=200)
            total += v
            err += e
        total += math.exp(-a * s_hi)  # integrand ~ a exp(-a s) beyond s_hi
        if err > self.rtol * total:
            raise NumericError("mixed Poisson tail quadrature missed tolerance", achieved=err / total)
        return math.log(total)

    def _logtail_int(self, n):
        n = np.asarray(n, dtype=float)
        out = np.empty(n.shape)
        closed = n + 1.0 - self.alpha > 0.05
        if np.any(closed):
            out[closed] = self._logtail_closed(n[closed])
        for idx in zip(*np.nonzero(~closed)):
            out[idx] = self.logtail_quad(n[idx])
        return out

    def logpmf_quad(self, n: int) -> float:
        """log P[N = n] = log int Poisson(n; beta*lam) dF(lam), adaptive quadrature."""
        n = int(n)
        a, b = self.alpha, self._b

        def f(s):
            m = b * math.exp(s)
            return math.exp(stats.poisson.logpmf(n, m) + math.log(a) - a * s)

        s_peak = math.log(max(n, b) / b)
        width = 8.0 / math.sqrt(max(n, 1))
        s_hi = math.log((n + 60.0 * math.sqrt(n + 1.0) + 60.0) / b) + 1.0
        pts = sorted({0.0, max(s_peak - width, 0.0), s_peak, s_peak + width, s_hi})
        total, err = 0.0, 0.0
        for lo, hi in zip(pts[:-1], pts[1:]):
            if hi <= lo:
                continue
            v, e = integrate.quad(f, lo, hi, epsabs=0.0, epsrel=self.rtol * 0.1, limit=200)
            total += v
            err += e
        if total <= 0 or err > self.rtol * total:
            raise NumericError(
                f"mixed Poisson pmf quadrature at n={n} missed tolerance",
                achieved=(err / total) if total > 0 else math.inf,
            )
        return math.log(total)

    def _logpmf_closed(self, n):
        # P[N = n] = a b^a Gamma(n - a, b) / n!  for n > a
        a, b = self.alpha, self._b
        return (
            math.log(a) + a * math.log(b) - _lgamma_diff(n - a, a + 1.0)
            + np.log(special.gammaincc(n - a, b))
        )

    def logpmf(self, n):
        """Closed form where it applies, adaptive quadrature for n close to alpha."""
        na = np.atleast_1d(np.asarray(n, dtype=float))
        out = np.full(na.shape, -np.inf)
        valid = (na >= 0) & (na == np.floor(na))
        closed = valid & (na - self.alpha > 0.05)
        if np.any(closed):
            out[closed] = self._logpmf_closed(na[closed])
        for idx in zip(*np.nonzero(valid & ~closed)):
            out[idx] = self.logpmf_quad(na[idx])
        return _scalar_or_array(out, n)

    def log_tail_drop(self, n):
        # log P[N > n-1] - log P[N > n] = log1p(P[N = n] / P[N > n]), no cancellation
        na = np.floor(np.asarray(n, dtype=float))
        return np.log1p(np.exp(np.asarray(self.logpmf(na)) - np.asarray(self.logtail(na))))

    def pmf_array(self, n_max):
        n = np.arange(n_max + 1, dtype=float)
        return np.exp(self.logpmf(n))

    def log_tail_sum(self, k0):
        a, b = self.alpha, self._b
        if a <= 1:
            return math.inf
        k = int(k0)
        if k == 0:
            return math.log(a * b / (a - 1.0))
        if k + 1.0 - a <= 0.05:
            return self._generic_log_tail_sum(k)
        # E[(N-k)^+] = E[M; G_k < M] - k P[N > k]
        em = a * b / (a - 1.0) * special.gammainc(k, b) + a * b**a / (a - 1.0) * math.exp(
            -float(_lgamma_diff(k + 1.0 - a, a - 1.0))
        ) * special.gammaincc(k + 1.0 - a, b)
        v = em - k * math.exp(float(self._logtail_int(np.array([float(k)]))[0]))
        return math.log(v)

    def sample(self, rng, size):
        lam = self.scale * self.lambda_cut * rng.pareto(self.alpha, size) + self.scale * self.lambda_cut
        return rng.poisson(self.beta_rate * lam).astype(np.int64)

    @property
    def params(self):
        return {
            "alpha": self.alpha,
            "scale": self.scale,
            "beta_rate": self.beta_rate,
            "lambda_cut": self.lambda_cut,
        }


def _positive(name, value):
    if not (isinstance(value, (int, float, np.floating, np.integer)) and math.isfinite(value) and value > 0):
        raise DomainError(f"{name} must be a positive finite number, got {value!r}")
    return float(value)


def make_discretized_weibull(beta: float) -> DiscretizedWeibull:
    beta = _positive("beta", beta)
    if not beta < 1:
        raise DomainError(f"discretized Weibull needs 0 < beta < 1, got {beta}")
    return DiscretizedWeibull(beta)


def make_pareto_count(gamma: float, c: float) -> ParetoCount:
    return ParetoCount(_positive("gamma", gamma), _positive("c", c))


def make_mixed_poisson_earthquake(alpha, scale, beta_rate, lambda_cut) -> MixedPoissonEarthquake:
    return MixedPoissonEarthquake(
        _positive("alpha", alpha),
        _positive("scale", scale),
        _positive("beta_rate", beta_rate),
        _positive("lambda_cut", lambda_cut),
    )


def make_geometric_count(p: float) -> GeometricCount:
    p = _positive("p", p)
    if not p < 1:
        raise DomainError(f"geometric success probability must lie in (0, 1), got {p}")
    return GeometricCount(p)


def make_poisson_count(lam: float) -> PoissonCount:
    return PoissonCount(_positive("lambda", lam))


def make_degenerate_count(k: int) -> DegenerateCount:
    if int(k) != k or k < 0:
        raise DomainError(f"degenerate count needs a nonnegative integer, got {k!r}")
    return DegenerateCount(int(k))


# ---------------------------------------------------------------------------
# Severity models
# ---------------------------------------------------------------------------


class SeverityModel(ABC):
    """Nonnegative claim-size law."""

    family: str = "severity"

    @property
    @abstractmethod
    def mu(self) -> float: ...

    @property
    @abstractmethod
    def sigma2(self) -> float: ...

    @abstractmethod
    def moment(self, r: float) -> float: ...

    @property
    @abstractmethod
    def mgf_radius(self) -> float: ...

    @abstractmethod
    def logtail(self, x): ...

    def logsf_left(self, x):
        """log P[X >= x]; equals logtail for continuous laws."""
        return self.logtail(x)

    def tail(self, x):
        return np.exp(self.logtail(x))

    def cdf(self, x):
        return -np.expm1(self.logtail(x))

    @abstractmethod
    def log_mgf(self, t: float) -> float: ...

    @abstractmethod
    def isf(self, eps: float) -> float:
        """A point x with P[X > x] <= eps."""

    @property
    def ess_inf(self) -> float:
        return 0.0

    @abstractmethod
    def ppf(self, u): ...

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return self.ppf(rng.random(size))

    @abstractmethod
    def scaled(self, factor: float) -> "SeverityModel": ...

    def nfold_logtail(self, n, x):
        """log P[S_n > x] in closed form, or None when unavailable."""
        return None

    @property
    def tail_index(self) -> Optional[float]:
        """Regular-variation index of the tail, None for light tails."""
        return None

    @property
    @abstractmethod
    def params(self) -> dict: ...

    @property
    def family_tag(self) -> dict:
        return {"family": self.family, **self.params}


@dataclass(frozen=True)
class ExponentialSeverity(SeverityModel):
    scale: float
    family = "exponential"

    @property
    def mu(self):
        return self.scale

    @property
    def sigma2(self):
        return self.scale**2

    def moment(self, r):
        return self.scale**r * math.gamma(r + 1.0)

    @property
    def mgf_radius(self):
        return 1.0 / self.scale

    def logtail(self, x):
        xa = np.asarray(x, dtype=float)
        return _scalar_or_array(np.where(xa < 0, 0.0, -xa / self.scale), x)

    def log_mgf(self, t):
        if t >= 1.0 / self.scale:
            return math.inf
        return -math.log1p(-self.scale * t)

    def isf(self, eps):
        return -self.scale * math.log(eps)

    def ppf(self, u):
        return -self.scale * np.log1p(-np.asarray(u, dtype=float))

    def sample(self, rng, size):
        return self.scale * rng.standard_exponential(size)

    def scaled(self, factor):
        return ExponentialSeverity(self.scale * factor)

    def nfold_logtail(self, n, x):
        n = np.asarray(n, dtype=float)
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            return np.where(n <= 0, np.where(x < 0, 0.0, -np.inf), stats.gamma.logsf(x, np.maximum(n, 1), scale=self.scale))

    @property
    def params(self):
        return {"mu": self.scale}


@dataclass(frozen=True)
class BoundedSeverity(SeverityModel):
    """Finitely many atoms (value, probability)."""

    values: tuple
    probs: tuple
    family = "bounded"

    @property
    def _v(self):
        return np.asarray(self.values, dtype=float)

    @property
    def _p(self):
        return np.asarray(self.probs, dtype=float)

    @property
    def mu(self):
        return float(self._v @ self._p)

    @property
    def sigma2(self):
        return float(max(((self._v - self.mu) ** 2) @ self._p, 0.0))

    def moment(self, r):
        return float((self._v**r) @ self._p)

    @property
    def mgf_radius(self):
        return math.inf

    def _logsum(self, mask):
        with np.errstate(divide="ignore"):
            return np.log(np.minimum((mask * self._p).sum(axis=-1), 1.0))

    def logtail(self, x):
        xa = np.asarray(x, dtype=float)
        return _scalar_or_array(self._logsum(self._v > xa[..., None]), x)

    def logsf_left(self, x):
        xa = np.asarray(x, dtype=float)
        return _scalar_or_array(self._logsum(self._v >= xa[..., None]), x)

    def log_mgf(self, t):
        return float(special.logsumexp(t * self._v, b=self._p))

    def isf(self, eps):
        return float(self._v.max())

    @property
    def ess_inf(self):
        return float(self._v[self._p > 0].min())

    def ppf(self, u):
        order = np.argsort(self._v)
        cum = np.cumsum(self._p[order])
        cum[-1] = 1.0
        idx = np.searchsorted(cum, np.asarray(u, dtype=float), side="left")
        return self._v[order][np.minimum(idx, len(cum) - 1)]

    def scaled(self, factor):
        return BoundedSeverity(tuple(v * factor for v in self.values), self.probs)

    def nfold_logtail(self, n, x):
        if len(self.values) != 1:
            return None
        n = np.asarray(n, dtype=float)
        return np.where(n * self.values[0] > np.asarray(x, dtype=float), 0.0, -np.inf)

    @property
    def params(self):
        return {"atoms": [[v, p] for v, p in zip(self.values, self.probs)]}


@dataclass(frozen=True)
class ParetoSeverity(SeverityModel):
    """P[X > x] = (x / x_min)^-beta_index for x >= x_min."""

    beta_index: float
    x_min: float
    family = "pareto"

    @property
    def tail_index(self):
        return self.beta_index

    @property
    def mu(self):
        return self.beta_index * self.x_min / (self.beta_index - 1.0)

    @property
    def sigma2(self):
        b = self.beta_index
        if b <= 2:
            return math.inf
        return b * self.x_min**2 / ((b - 1.0) ** 2 * (b - 2.0))

    def moment(self, r):
        if r >= self.beta_index:
            return math.inf
        return self.beta_index * self.x_min**r / (self.beta_index - r)

    @property
    def mgf_radius(self):
        return 0.0

    def logtail(self, x):
        xa = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            v = -self.beta_index * np.log(np.maximum(xa, self.x_min) / self.x_min)
        return _scalar_or_array(v, x)

    def log_mgf(self, t):
        if t > 0:
            return math.inf
        if t == 0:
            return 0.0
        b, m = self.beta_index, self.x_min
        # E exp(tX) = b * int_1^inf u^(-b-1) exp(t m u) du
        val, _ = integrate.quad(lambda u: u ** (-b - 1.0) * math.exp(t * m * (u - 1.0)), 1.0, math.inf, limit=200)
        return math.log(b * val) + t * m

    def isf(self, eps):
        return self.x_min * eps ** (-1.0 / self.beta_index)

    @property
    def ess_inf(self):
        return self.x_min

    def ppf(self, u):
        return self.x_min * np.power(1.0 - np.asarray(u, dtype=float), -1.0 / self.beta_index)

    def sample(self, rng, size):
        return self.x_min * (1.0 + rng.pareto(self.beta_index, size))

    def scaled(self, factor):
        return ParetoSeverity(self.beta_index, self.x_min * factor)

    @property
    def params(self):
        return {"beta_index": self.beta_index, "x_min": self.x_min}


def make_severity_exponential(mu: float) -> ExponentialSeverity:
    return ExponentialSeverity(_positive("mu", mu))


def make_severity_bounded(atoms: Sequence) -> BoundedSeverity:
    atoms = [(float(v), float(p)) for v, p in atoms]
    if not atoms:
        raise DomainError("bounded severity needs at least one atom")
    vals = np.array([a[0] for a in atoms])
    probs = np.array([a[1] for a in atoms])
    if np.any(vals < 0) or np.any(~np.isfinite(vals)):
        raise DomainError("atom values must be finite and nonnegative")
    if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-12:
        raise DomainError("atom probabilities must be nonnegative and sum to 1")
    if vals @ probs <= 0:
        raise DomainError("bounded severity must have a positive mean")
    return BoundedSeverity(tuple(vals.tolist()), tuple((probs / probs.sum()).tolist()))


def make_severity_degenerate(mu: float) -> BoundedSeverity:
    return make_severity_bounded([(_positive("mu", mu), 1.0)])


def make_severity_pareto(beta_index: float, x_min: float = 1.0) -> ParetoSeverity:
    beta_index = _positive("beta_index", beta_index)
    if not beta_index > 1:
        raise DomainError(f"Pareto severity needs beta_index > 1 (finite mean), got {beta_index}")
    return ParetoSeverity(beta_index, _positive("x_min", x_min))


# ---------------------------------------------------------------------------
# Lattice discretization
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LatticePMF:
    """Probability mass at k*h, k = offset, offset+1, ..., stored as logs.

    ``tail_mass`` is the severity mass beyond the last lattice point, which
    the compound engine treats as an infinitely large claim.  ``continuous``
    marks lattices built from a severity without atoms; only those are
    interpolated between lattice points.
    """

    h: float
    log_mass: np.ndarray
    offset: int = 0
    mode: str = "round"
    tail_mass: float = 0.0
    continuous: bool = True

    def __post_init__(self):
        lm = np.asarray(self.log_mass, dtype=float)
        lm.setflags(write=False)
        object.__setattr__(self, "log_mass", lm)

    def __len__(self):
        return self.offset + len(self.log_mass)

    def mass(self, length: Optional[int] = None) -> np.ndarray:
        """Linear masses on indices 0..length-1 (zero padded / truncated)."""
        n = len(self) if length is None else length
        out = np.zeros(n)
        m = np.exp(self.log_mass)
        stop = min(n, len(self))
        if stop > self.offset:
            out[self.offset:stop] = m[: stop - self.offset]
        return out

    @property
    def total(self) -> float:
        return float(np.exp(special.logsumexp(self.log_mass)))

    def mean(self) -> float:
        k = np.arange(self.offset, len(self), dtype=float)
        return float(self.h * (k @ np.exp(self.log_mass)))

    def logtail(self, x):
        """log P[X_lat > x] counting the truncated mass as exceeding x."""
        xa = np.atleast_1d(np.asarray(x, dtype=float))
        m = np.exp(self.log_mass)
        rev = np.concatenate([np.cumsum(m[::-1])[::-1], [0.0]]) + self.tail_mass
        k = np.floor(xa / self.h + 1e-9).astype(np.int64) + 1 - self.offset
        k = np.clip(k, 0, len(m))
        with np.errstate(divide="ignore"):
            return _scalar_or_array(np.log(rev[k]), x)

    def log_mgf(self, t) -> np.ndarray:
        """log sum_k mass_k exp(t k h) for an array of t (defective if truncated)."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        k = np.arange(self.offset, len(self), dtype=float) * self.h
        step = max(1, (1 << 22) // max(len(k), 1))
        return np.concatenate([
            special.logsumexp(self.log_mass[None, :] + t[i:i + step, None] * k[None, :], axis=1)
            for i in range(0, len(t), step)
        ])


def discretize_severity(
    severity: SeverityModel,
    h: float,
    mode: str = "round",
    eps: float = 1e-12,
    max_points: int = 1 << 24,
) -> LatticePMF:
    """Put the severity on the lattice {k h}.

    ``floor`` maps X to h*floor(X/h) (stochastically smaller), ``upper`` to
    h*ceil(X/h) (larger) and ``round`` to the nearest lattice point.  The
    lattice stops where the severity tail drops below ``eps``.
    """
    h = _positive("h", h)
    if mode not in ("floor", "round", "upper"):
        raise DomainError(f"unknown discretization mode {mode!r}")
    x_end = severity.isf(eps)
    n = int(math.ceil(x_end / h)) + 2
    if n > max_points:
        raise NumericError(
            f"lattice of {n} points exceeds max_points={max_points}; "
            f"mass beyond {max_points * h:g} would exceed eps={eps:g}",
            achieved=float(severity.tail(max_points * h)),
        )
    k = np.arange(n + 1, dtype=float)
    if mode == "floor":
        edges = k * h
        ls = np.asarray(severity.logsf_left(edges))
    elif mode == "upper":
        edges = k * h
        ls = np.concatenate([[0.0], np.asarray(severity.logtail(edges[:-1]))])
    else:
        edges = (k - 0.5) * h
        ls = np.asarray(severity.logsf_left(edges))
        ls[0] = 0.0
    # cell k holds P[edge_k <= X < edge_{k+1}] (right-closed for upper)
    with np.errstate(invalid="ignore", divide="ignore"):
        log_mass = ls[:-1] + _log1mexp(np.minimum(ls[1:] - ls[:-1], 0.0))
    log_mass = np.where(np.isnan(log_mass), -np.inf, log_mass)
    tail_mass = float(np.exp(ls[-1]))
    finite = np.nonzero(np.isfinite(log_mass))[0]
    if finite.size == 0:
        raise NumericError("severity has no mass on the lattice")
    lo, hi = finite[0], finite[-1] + 1
    return LatticePMF(
        h=h,
        log_mass=log_mass[lo:hi],
        offset=int(lo),
        mode=mode,
        tail_mass=tail_mass,
        continuous=not isinstance(severity, BoundedSeverity),
    )


# ---------------------------------------------------------------------------
# Queries
# ---------------------------------------------------------------------------


def count_mean_excess(count: CountModel, x: float) -> float:
    """E[N - x | N > x], summed through the integrated tail."""
    if x < 0:
        raise DomainError("x must be nonnegative")
    lt = float(count.logtail(x))
    if not np.isfinite(lt):
        raise DomainError(f"P[N > {x}] = 0: mean excess undefined")
    k0 = int(math.floor(x)) + 1
    lts = count.log_tail_sum(k0)
    return (k0 - x) + math.exp(lts - lt)


# ---------------------------------------------------------------------------
# JSON specs
# ---------------------------------------------------------------------------

_COUNT_FAMILIES = {
    "discretized_weibull": lambda s: make_discretized_weibull(s["beta"]),
    "pareto_count": lambda s: make_pareto_count(s["gamma"], s["c"]),
    "mixed_poisson_earthquake": lambda s: make_mixed_poisson_earthquake(
        s["alpha"], s["scale"], s["beta_rate"], s["lambda_cut"]
    ),
    "geometric_count": lambda s: make_geometric_count(s["p"]),
    "geometric": lambda s: make_geometric_count(s["p"]),
    "poisson_count": lambda s: make_poisson_count(s["lambda"]),
    "poisson": lambda s: make_poisson_count(s["lambda"]),
    "degenerate_count": lambda s: make_degenerate_count(s["k"]),
    "degenerate": lambda s: make_degenerate_count(s["k"]),
}

_SEVERITY_FAMILIES = {
    "exponential": lambda s: make_severity_exponential(s["mu"]),
    "bounded": lambda s: make_severity_bounded(s["atoms"]),
    "pareto": lambda s: make_severity_pareto(s["beta_index"], s.get("x_min", 1.0)),
    "degenerate": lambda s: make_severity_degenerate(s["mu"]),
}


def _from_spec(spec, table, kind):
    if not isinstance(spec, dict) or "family" not in spec:
        raise DomainError(f"{kind} spec must be an object with a 'family' key")
    fam = spec["family"]
    if fam not in table:
        raise DomainError(f"unknown {kind} family {fam!r}; choose from {sorted(table)}")
    try:
        return table[fam](spec)
    except KeyError as exc:
        raise DomainError(f"{kind} family {fam!r} is missing parameter {exc.args[0]!r}") from None


def count_from_spec(spec: dict) -> CountModel:
    return _from_spec(spec, _COUNT_FAMILIES, "count")


def severity_from_spec(spec: dict) -> SeverityModel:
    return _from_spec(spec, _SEVERITY_FAMILIES, "severity")

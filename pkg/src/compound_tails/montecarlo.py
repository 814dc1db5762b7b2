"""Seeded Monte Carlo for P[S_N > x], with an optional N-claim coupling.

Streams
-------
Samples are produced in blocks of ``BLOCK_SIZE``.  Block ``i`` draws from
``Generator(PCG64(SeedSequence(seed, spawn_key=(i,))))``, so every block is
reproducible on its own.  Per-block exceedance counts are integers and are
summed after all blocks finish, which makes threaded and serial runs
bit-identical.  ``COMPOUND_TAILS_THREADS`` caps the worker count.

Coupling
--------
``first_claim_coupling(strength)`` ties N to the first claim through a
Gaussian copula: X1 = F_X^{-1}(U), Z1 = Phi^{-1}(U), and N is the count
quantile at the normal score strength * Z1 + sqrt(1 - strength^2) * Z2.
Both marginals are preserved exactly; strength 0 gives independence.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import special, stats

from .compound_engine import TailCurve
from .distributions import CountModel, ExponentialSeverity, SeverityModel
from .errors import ContractError, DomainError, ResourceError

__all__ = [
    "BLOCK_SIZE",
    "DependenceSpec",
    "block_rng",
    "sample_joint",
    "simulate_tail",
    "simulate_conditional_tail",
    "ks_discrete",
]

BLOCK_SIZE = 65536
#: cap on claims drawn per block by the generic (non-exponential) summation
MAX_CLAIMS_PER_BLOCK = 50_000_000


@dataclass(frozen=True)
class DependenceSpec:
    kind: str = "independent"
    strength: float = 0.0

    def __post_init__(self):
        if self.kind not in ("independent", "first_claim_coupling"):
            raise DomainError(f"unknown dependence kind {self.kind!r}")
        if not -1.0 <= self.strength <= 1.0:
            raise DomainError("coupling strength must lie in [-1, 1]")
        if self.kind == "independent" and self.strength != 0.0:
            raise DomainError("independent spec takes no strength")

    @classmethod
    def parse(cls, text: str) -> "DependenceSpec":
        """'independent' or 'first_claim:<strength>'."""
        if text == "independent":
            return cls()
        if text.startswith("first_claim:"):
            return cls("first_claim_coupling", float(text.split(":", 1)[1]))
        raise DomainError(f"cannot parse dependence spec {text!r}")

    @property
    def description(self) -> str:
        if self.kind == "independent":
            return "N independent of the claims"
        return (f"Gaussian copula between X1 and N with correlation {self.strength:g} "
                "on the normal scores; X2, X3, ... independent")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "strength": self.strength}


def block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(block,))))


def _n_threads() -> int:
    env = os.environ.get("COMPOUND_TAILS_THREADS")
    cap = int(env) if env else (os.cpu_count() or 1)
    return max(1, min(cap, os.cpu_count() or 1))


def _blocks(n_samples: int):
    n_blocks = -(-n_samples // BLOCK_SIZE)
    return [(i, min(BLOCK_SIZE, n_samples - i * BLOCK_SIZE)) for i in range(n_blocks)]


def _sum_claims(severity: SeverityModel, rng: np.random.Generator, k: np.ndarray) -> np.ndarray:
    """Sum of k[i] iid claims for every i."""
    out = np.zeros(k.shape)
    pos = k > 0
    if isinstance(severity, ExponentialSeverity):
        out[pos] = severity.scale * rng.standard_gamma(k[pos].astype(float))
        return out
    total = int(k.sum())
    if total > MAX_CLAIMS_PER_BLOCK:
        raise ResourceError(f"block needs {total} claim draws (cap {MAX_CLAIMS_PER_BLOCK})")
    draws = severity.sample(rng, total)
    owner = np.repeat(np.arange(len(k)), k)
    return np.bincount(owner, weights=draws, minlength=len(k))


def _draw_block(count: CountModel, severity: SeverityModel, dep: DependenceSpec,
                rng: np.random.Generator, size: int):
    u = rng.random(size)
    x1 = np.asarray(severity.ppf(u), dtype=float)
    if dep.kind == "independent":
        n = np.asarray(count.sample(rng, size), dtype=np.int64)
    else:
        rho = dep.strength
        z1 = special.ndtri(u)
        z = rho * z1 + math.sqrt(1.0 - rho * rho) * rng.standard_normal(size)
        # N = min{n : P[N > n] <= P[Z > z]}
        n = np.asarray(count.isf_int(special.log_ndtr(-z)), dtype=np.int64)
    s = np.where(n >= 1, x1, 0.0) + _sum_claims(severity, rng, np.maximum(n - 1, 0))
    return n, x1, s


def _check_n(n_samples: int) -> int:
    n_samples = int(n_samples)
    if n_samples < 1000:
        raise DomainError("n_samples must be at least 1000")
    if n_samples >= 2**62:
        raise ResourceError("n_samples would overflow the exceedance counters")
    return n_samples


def sample_joint(count: CountModel, severity: SeverityModel, dep: DependenceSpec,
                 n_samples: int, seed: int):
    """(N, X1, S_N) arrays drawn with the same block streams as simulate_tail."""
    n_samples = _check_n(n_samples)
    parts = [_draw_block(count, severity, dep, block_rng(seed, i), size) for i, size in _blocks(n_samples)]
    return tuple(np.concatenate([p[j] for p in parts]) for j in range(3))


def simulate_tail(count: CountModel, severity: SeverityModel, dep: DependenceSpec, x_grid,
                  n_samples: int, seed: int) -> TailCurve:
    """Empirical P[S_N > x] with binomial standard errors."""
    n_samples = _check_n(n_samples)
    x = np.asarray(x_grid, dtype=float).reshape(-1)
    if np.any(np.diff(x) <= 0):
        raise ContractError("x grid must be strictly increasing")

    def run(job):
        i, size = job
        _, _, s = _draw_block(count, severity, dep, block_rng(seed, i), size)
        s.sort()
        return size - np.searchsorted(s, x, side="right")

    jobs = _blocks(n_samples)
    workers = _n_threads()
    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            counts = list(ex.map(run, jobs))
    else:
        counts = [run(j) for j in jobs]
    hits = np.sum(np.array(counts, dtype=np.int64), axis=0)
    p = hits / n_samples
    se = np.sqrt(p * (1.0 - p) / n_samples)
    with np.errstate(divide="ignore"):
        lt = np.log(p)
    return TailCurve(
        x, lt, stderr=se, provenance="monte_carlo",
        meta={"seed": int(seed), "n_samples": n_samples, "dependence": dep.to_dict(), "hits": hits},
    )


def simulate_conditional_tail(count: CountModel, severity: SeverityModel, x_grid, n_outer: int, seed: int,
                              surrogate: bool = False) -> TailCurve:
    """Average of P[S_n > x] over sampled N (independent case only).

    The inner probability is the severity's closed-form n-fold tail; with
    ``surrogate=True`` a normal approximation replaces it when no closed
    form exists.
    """
    n_outer = _check_n(n_outer)
    x = np.asarray(x_grid, dtype=float).reshape(-1)
    ns = np.concatenate([np.asarray(count.sample(block_rng(seed, i), size), dtype=np.int64)
                         for i, size in _blocks(n_outer)])
    values, mult = np.unique(ns, return_counts=True)
    rows = []
    for n in values:
        if n == 0:
            rows.append(np.zeros(x.shape))
            continue
        lt = severity.nfold_logtail(int(n), x)
        if lt is None:
            if not surrogate:
                raise ContractError("severity has no closed-form n-fold tail; pass surrogate=True")
            lt = stats.norm.logsf(x, loc=n * severity.mu, scale=math.sqrt(max(n * severity.sigma2, 1e-300)))
        rows.append(np.exp(np.asarray(lt, dtype=float)))
    t = np.array(rows)  # (distinct n, x)
    w = mult / n_outer
    mean = w @ t
    var = (mult @ (t - mean) ** 2) / max(n_outer - 1, 1)
    se = np.sqrt(var / n_outer)
    with np.errstate(divide="ignore"):
        lt = np.log(mean)
    return TailCurve(x, lt, stderr=se, provenance="monte_carlo",
                     meta={"seed": int(seed), "n_samples": n_outer, "estimator": "conditional"})


def ks_discrete(samples: np.ndarray, count: CountModel, alpha: float = 0.05):
    """Kolmogorov-Smirnov distance of integer samples to the count law.

    Returns (D, critical value, passed).  The continuous-law critical value
    is conservative for discrete laws.
    """
    samples = np.sort(np.asarray(samples))
    n = len(samples)
    support = np.unique(samples)
    emp = np.searchsorted(samples, support, side="right") / n
    emp_left = np.searchsorted(samples, support, side="left") / n
    cdf = np.asarray(count.cdf(support), dtype=float)
    cdf_left = np.asarray(count.cdf(support - 1), dtype=float)
    d = float(max(np.max(np.abs(emp - cdf)), np.max(np.abs(emp_left - cdf_left))))
    crit = float(stats.kstwo.ppf(1.0 - alpha, n))
    return d, crit, d <= crit

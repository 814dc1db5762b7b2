"""Mechanical verdicts on the hypotheses behind the heavy-N approximation.

Each checker returns a trinary :class:`Verdict` together with the
diagnostics that produced it.  Limits are judged by the finite-x protocol
of :mod:`compound_tails.tail_analysis`; anything the protocol cannot
settle is reported as ``inconclusive`` rather than guessed.

Checker map:

* ``thm_cv``: consistently varying count tail, E[X^r] finite and
  x P[X > x] = o(P[N > x]).
* ``thm_cv2``: consistent variation plus either P[X > x] = o(P[N > x])
  (finite E[N]) or a bounded truncated-mean ratio (infinite E[N]), the
  latter automatic for regularly varying counts of index in (0, 1].
* ``thm_gumbel``: Gumbel-domain count with a(x)/x^(2/3) -> infinity.
* ``thm_gumbel2``: Gumbel-domain count whose auxiliary function has lower
  order above 1/2, light-tailed claims, N independent of the claims.
* ``asmussen_delta``: whether the auxiliary index is at least 2/3, the
  threshold below which the older corollary route is closed.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .distributions import (
    CountModel,
    DiscretizedWeibull,
    ExponentialSeverity,
    SeverityModel,
)
from .errors import CompoundTailsError, DomainError
from .tail_analysis import (
    CONVERGING,
    DEFAULT_TREND,
    DIVERGING,
    INCONCLUSIVE,
    LimitEstimate,
    TrendConfig,
    _estimate,
    _usable,
    anderson_gumbel_check,
    classify_trend,
    cv_profile,
    geometric_grid,
    gumbel_aux,
    lower_order,
    upper_order,
)

__all__ = [
    "YES",
    "NO",
    "INCONCLUSIVE",
    "Verdict",
    "RegimeReport",
    "check_thm_cv",
    "check_thm_cv2",
    "check_thm_gumbel",
    "check_thm_gumbel2",
    "check_asmussen_delta",
    "check_heavy_x",
    "classify",
]

YES, NO = "yes", "no"
THEOREMS = ("thm_cv", "thm_cv2", "thm_gumbel", "thm_gumbel2")
DEFAULT_RQ = ((2.0, 1.0), (3.0, 1.5))
#: margin around an order threshold inside which no verdict is given
ORDER_MARGIN = 0.02


@dataclass
class Verdict:
    holds: str
    diagnostics: list = field(default_factory=list)  # (name, LimitEstimate) pairs
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        diags = []
        for name, est in self.diagnostics:
            diags.append({
                "name": name,
                "value": _num(est.value),
                "window": [_num(v) for v in est.window],
                "trend": est.trend,
                "aggregation": est.aggregation,
                "n_samples": int(len(est.samples)),
            })
        return {"holds": self.holds, "diagnostics": diags, "notes": list(self.notes)}


def _num(v):
    v = float(v)
    return v if math.isfinite(v) else repr(v)


@dataclass
class RegimeReport:
    verdicts: dict
    predicted: str
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "verdicts": {k: v.to_dict() for k, v in self.verdicts.items()},
            "predicted": self.predicted,
            "notes": list(self.notes),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def diagnostics_rows(self):
        """(verdict, diagnostic, x, ratio, window_flag) rows for CSV dumps."""
        for vname, verdict in self.verdicts.items():
            for dname, est in verdict.diagnostics:
                for x, r, f in est.to_rows():
                    yield vname, dname, x, r, f


def _combine(*states: str) -> str:
    if NO in states:
        return NO
    if all(s == YES for s in states):
        return YES
    return INCONCLUSIVE


def _to_zero(x, log_r, cfg) -> tuple:
    """Judge r(x) -> 0 from its logarithm; returns (state, estimate)."""
    log_r = np.asarray(log_r, dtype=float)
    if np.all(np.isneginf(log_r[-3:])):
        est = _estimate(x, np.exp(log_r), cfg, trend=CONVERGING)
        return YES, est
    est = _estimate(x, np.exp(log_r), cfg)
    if classify_trend(x, -log_r, cfg) == DIVERGING:
        est.trend = CONVERGING
        return YES, est
    if classify_trend(x, log_r, cfg) == DIVERGING or (est.trend == CONVERGING and est.value > 0):
        return NO, est
    return INCONCLUSIVE, est


def _cv_state(count: CountModel, x_grid, cfg) -> tuple:
    try:
        est = cv_profile(count, 0.9, x_grid, cfg)
    except CompoundTailsError as exc:
        return INCONCLUSIVE, None, str(exc)
    state = {CONVERGING: YES, DIVERGING: NO}.get(est.trend, INCONCLUSIVE)
    return state, est, None


def _count_grid(count: CountModel, x_grid, cfg):
    x = geometric_grid() if x_grid is None else np.asarray(x_grid, dtype=float)
    lt = np.asarray(count.logtail(x), dtype=float)
    m = _usable(x, lt, cfg=cfg)
    return x[:m], lt[:m]


def check_thm_cv(count: CountModel, severity: SeverityModel, r: float = 2.0, x_grid=None,
                 cfg: TrendConfig = DEFAULT_TREND) -> Verdict:
    """Consistent variation, finite r-th moment and x P[X > x] = o(P[N > x])."""
    if not r > 1:
        raise DomainError("r must exceed 1")
    v = Verdict(INCONCLUSIVE)
    cv, cv_est, err = _cv_state(count, x_grid, cfg)
    if cv_est is not None:
        v.diagnostics.append(("cv_profile", cv_est))
    if err:
        v.notes.append(f"cv_profile: {err}")
    moment = YES if math.isfinite(severity.moment(r)) else NO
    v.notes.append(f"E[X^{r:g}] = {severity.moment(r):.6g}")
    try:
        x, lt = _count_grid(count, x_grid, cfg)
        p_state, est = _to_zero(x, np.log(x) + np.asarray(severity.logtail(x), dtype=float) - lt, cfg)
        v.diagnostics.append(("x_sev_tail_over_count_tail", est))
    except CompoundTailsError as exc:
        p_state = INCONCLUSIVE
        v.notes.append(f"(x P[X>x])/P[N>x]: {exc}")
    v.holds = _combine(cv, moment, p_state)
    return v


def _truncated_mean_ratio(count: CountModel, q: float, x_hi: float = 1e7, cfg: TrendConfig = DEFAULT_TREND):
    """E[N 1(N <= x)] / (x^q P[N > x]) on integer x up to x_hi."""
    m = int(x_hi)
    k = np.arange(m + 1, dtype=float)
    tail = np.exp(np.asarray(count.logtail(k), dtype=float))
    csum = np.concatenate([[0.0], np.cumsum(tail)])  # csum[j] = sum_{k<j} tail(k)
    xs = np.unique(np.floor(geometric_grid(16.0, float(m)))).astype(np.int64)
    trunc = csum[xs] - xs * tail[xs]
    ratio = trunc / (xs.astype(float) ** q * tail[xs])
    return _estimate(xs.astype(float), ratio, cfg)


def check_thm_cv2(count: CountModel, severity: SeverityModel, r: float = 2.0, q: float = 1.0, x_grid=None,
                  cfg: TrendConfig = DEFAULT_TREND) -> Verdict:
    """Consistent variation plus the finite-mean or infinite-mean tail condition."""
    if not 1 <= q < r:
        raise DomainError("need 1 <= q < r")
    v = Verdict(INCONCLUSIVE)
    cv, cv_est, err = _cv_state(count, x_grid, cfg)
    if cv_est is not None:
        v.diagnostics.append(("cv_profile", cv_est))
    if err:
        v.notes.append(f"cv_profile: {err}")
    moment = YES if math.isfinite(severity.moment(r)) else NO
    mean = count.mean
    if math.isfinite(mean):
        v.notes.append(f"E[N] = {mean:.6g} finite: checking P[X>x] = o(P[N>x])")
        try:
            x, lt = _count_grid(count, x_grid, cfg)
            branch, est = _to_zero(x, np.asarray(severity.logtail(x), dtype=float) - lt, cfg)
            v.diagnostics.append(("sev_tail_over_count_tail", est))
        except CompoundTailsError as exc:
            branch = INCONCLUSIVE
            v.notes.append(str(exc))
    else:
        idx = count.rv_index
        if idx is not None and 0 < idx <= 1:
            branch = YES
            v.notes.append(f"E[N] infinite; regularly varying count of index {idx:g} in (0, 1]: "
                           "truncated-mean condition holds by Karamata's theorem")
        else:
            est = _truncated_mean_ratio(count, q, cfg=cfg)
            v.diagnostics.append(("truncated_mean_ratio", est))
            v.notes.append("E[N] infinite: limsup judged as boundedness on the window only")
            branch = YES if est.trend == CONVERGING else (NO if est.trend == DIVERGING else INCONCLUSIVE)
    v.holds = _combine(cv, moment, branch)
    return v


def _gumbel_state(count: CountModel, n_grid, cfg) -> tuple:
    try:
        est = anderson_gumbel_check(count, n_grid, cfg)
    except CompoundTailsError as exc:
        return INCONCLUSIVE, None, str(exc)
    holds = est.extras.get("holds")
    return {True: YES, False: NO}.get(holds, INCONCLUSIVE), est, None


def _aux_grid(count: CountModel, x_grid, cfg):
    x, _ = _count_grid(count, x_grid, cfg)
    return x


def _order_state(value: float, threshold: float) -> str:
    if value > threshold + ORDER_MARGIN:
        return YES
    if value < threshold - ORDER_MARGIN:
        return NO
    return INCONCLUSIVE


def check_thm_gumbel(count: CountModel, severity: Optional[SeverityModel] = None, x_grid=None,
                     cfg: TrendConfig = DEFAULT_TREND) -> Verdict:
    """Gumbel-domain count with a(x)/x^(2/3) -> infinity.

    If ``severity`` is given its moment generating function must be finite
    near 0 as well.
    """
    v = Verdict(INCONCLUSIVE)
    g, g_est, err = _gumbel_state(count, x_grid, cfg)
    if g_est is not None:
        v.diagnostics.append(("anderson_q", g_est))
    if err:
        v.notes.append(f"anderson: {err}")
    states = [g]
    if g != NO:
        try:
            x = _aux_grid(count, x_grid, cfg)
            a = gumbel_aux(count)
            ratio = np.asarray(a(x), dtype=float) / x ** (2.0 / 3.0)
            est = _estimate(x, ratio, cfg)
            v.diagnostics.append(("aux_over_x_2_3", est))
            order = lower_order(a, x, cfg, method="slope")
            v.diagnostics.append(("aux_lower_order", order))
            if est.trend == DIVERGING:
                states.append(YES)
            elif classify_trend(x, -np.log(ratio), cfg) == DIVERGING or est.trend == CONVERGING:
                states.append(NO)
            else:
                states.append(_order_state(order.value, 2.0 / 3.0))
        except CompoundTailsError as exc:
            states.append(INCONCLUSIVE)
            v.notes.append(f"aux: {exc}")
    if severity is not None:
        states.append(YES if severity.mgf_radius > 0 else NO)
        v.notes.append(f"severity mgf radius = {severity.mgf_radius:g}")
    v.notes.append("allows arbitrary dependence between N and the claims")
    v.holds = _combine(*states)
    return v


def check_thm_gumbel2(count: CountModel, severity: SeverityModel, x_grid=None,
                      cfg: TrendConfig = DEFAULT_TREND) -> Verdict:
    """Gumbel-domain count, lower order of a(x) above 1/2, finite claim mgf."""
    v = Verdict(INCONCLUSIVE, notes=["independence_required: true"])
    g, g_est, err = _gumbel_state(count, x_grid, cfg)
    if g_est is not None:
        v.diagnostics.append(("anderson_q", g_est))
    if err:
        v.notes.append(f"anderson: {err}")
    states = [g, YES if severity.mgf_radius > 0 else NO]
    v.notes.append(f"severity mgf radius = {severity.mgf_radius:g}")
    if g != NO:
        try:
            x = _aux_grid(count, x_grid, cfg)
            order = lower_order(gumbel_aux(count), x, cfg, method="slope")
            v.diagnostics.append(("aux_lower_order", order))
            states.append(_order_state(order.value, 0.5))
        except CompoundTailsError as exc:
            states.append(INCONCLUSIVE)
            v.notes.append(f"aux: {exc}")
    v.holds = _combine(*states)
    return v


def check_asmussen_delta(count: CountModel, x_grid=None, cfg: TrendConfig = DEFAULT_TREND) -> Verdict:
    """Is the auxiliary index delta at least 2/3?  ``no`` also covers non-Gumbel counts."""
    v = Verdict(INCONCLUSIVE)
    g, g_est, err = _gumbel_state(count, x_grid, cfg)
    if g_est is not None:
        v.diagnostics.append(("anderson_q", g_est))
    if g == NO:
        v.holds = NO
        v.notes.append("not applicable: count is not in the Gumbel domain")
        return v
    if err:
        v.notes.append(f"anderson: {err}")
    try:
        x = _aux_grid(count, x_grid, cfg)
        a = gumbel_aux(count)
        lo = lower_order(a, x, cfg, method="slope")
        v.diagnostics.append(("aux_lower_order", lo))
        s = lo.samples[:, 1]
        hi = max(s[lo.window_flag])
        v.notes.append(f"delta estimate in [{lo.value:.4g}, {hi:.4g}]")
        v.holds = _combine(g, _order_state(lo.value, 2.0 / 3.0))
    except CompoundTailsError as exc:
        v.notes.append(f"aux: {exc}")
    return v


def check_heavy_x(count: CountModel, severity: SeverityModel, x_grid=None, cfg: TrendConfig = DEFAULT_TREND) -> Verdict:
    """Heavy claims with a lighter count tail: E[N] P[X > x] is the candidate.

    Requires a claim law without exponential moments, a finite count mean,
    and a count tail lighter than the claim tail (a light-tailed count, or a
    count upper order above the claim's regular-variation index).
    """
    v = Verdict(INCONCLUSIVE)
    if severity.mgf_radius > 0:
        v.holds = NO
        v.notes.append("claims have exponential moments")
        return v
    if not math.isfinite(count.mean):
        v.holds = NO
        v.notes.append("infinite count mean")
        return v
    if count.light_tailed:
        v.holds = YES
        v.notes.append("light-tailed count, heavy claims")
        return v
    idx = severity.tail_index
    try:
        est = upper_order(count, x_grid, cfg)
        v.diagnostics.append(("count_upper_order", est))
    except CompoundTailsError as exc:
        v.notes.append(str(exc))
        return v
    if idx is None:
        v.notes.append("claim tail index unknown")
        return v
    if est.trend == DIVERGING or est.value > idx + ORDER_MARGIN:
        v.holds = YES
        v.notes.append(f"count tail lighter than claim tail (index {idx:g})")
    elif est.value < idx - ORDER_MARGIN:
        v.holds = NO
    return v


def _is_foss_config(count: CountModel, severity: SeverityModel) -> bool:
    return (
        isinstance(count, DiscretizedWeibull)
        and 0.5 <= count.beta < 2.0 / 3.0
        and isinstance(severity, ExponentialSeverity)
    )


def classify(count: CountModel, severity: SeverityModel, params: Optional[dict] = None) -> RegimeReport:
    """Run every checker and predict the approximation regime.

    ``params`` may hold ``rq`` (list of (r, q) pairs), ``x_grid`` and
    ``trend`` (a TrendConfig).
    """
    params = dict(params or {})
    cfg = params.get("trend", DEFAULT_TREND)
    x_grid = params.get("x_grid")
    rq = [tuple(p) for p in params.get("rq", DEFAULT_RQ)]

    cv_runs = [check_thm_cv(count, severity, r, x_grid, cfg) for r, _ in rq]
    cv2_runs = [check_thm_cv2(count, severity, r, q, x_grid, cfg) for r, q in rq]

    def best(runs):
        for want in (YES, INCONCLUSIVE):
            for run in runs:
                if run.holds == want:
                    return run
        return runs[0]

    verdicts = {
        "thm_cv": best(cv_runs),
        "thm_cv2": best(cv2_runs),
        "thm_gumbel": check_thm_gumbel(count, severity, x_grid, cfg),
        "thm_gumbel2": check_thm_gumbel2(count, severity, x_grid, cfg),
        "asmussen_delta": check_asmussen_delta(count, x_grid, cfg),
        "heavy_x": check_heavy_x(count, severity, x_grid, cfg),
    }
    notes = [
        f"(r, q) search set: {rq}",
        f"trend thresholds: {cfg}",
        "thm_cv and thm_gumbel allow arbitrary dependence between N and the claims; "
        "thm_gumbel2 assumes independence; the checkers inspect marginal laws only",
    ]
    if any(verdicts[t].holds == YES for t in THEOREMS):
        predicted = "heavy_n"
    elif _is_foss_config(count, severity):
        predicted = "foss_window"
    elif verdicts["heavy_x"].holds == YES:
        predicted = "heavy_x"
    else:
        predicted = "none"
    return RegimeReport(verdicts=verdicts, predicted=predicted, notes=notes)

"""Tails of random sums with heavy-tailed claim counts.

``P[S_N > x]`` for ``S_N = X_1 + ... + X_N`` computed exactly at desk scale,
compared with the heavy-N and heavy-X approximations, and checked against
the tail conditions that decide which approximation applies.
"""
from .approximations import (
    calibrate_tang,
    calibrate_tang_constant,
    chernoff_lower_tail,
    cramer_rate,
    foss_corrected,
    heavy_n_approx,
    heavy_x_approx,
    sum_excess_tail,
    tang_bound,
)
from .compound_engine import (
    TailCurve,
    exact_compound_tail,
    lattice_compound_tail,
    poisson_inversion_tail,
    refine_and_extrapolate,
)
from .conditions import (
    RegimeReport,
    Verdict,
    check_asmussen_delta,
    check_heavy_x,
    check_thm_cv,
    check_thm_cv2,
    check_thm_gumbel,
    check_thm_gumbel2,
    classify,
)
from .distributions import (
    CountModel,
    LatticePMF,
    SeverityModel,
    count_from_spec,
    count_mean_excess,
    discretize_severity,
    make_degenerate_count,
    make_discretized_weibull,
    make_geometric_count,
    make_mixed_poisson_earthquake,
    make_pareto_count,
    make_poisson_count,
    make_severity_bounded,
    make_severity_degenerate,
    make_severity_exponential,
    make_severity_pareto,
    severity_from_spec,
)
from .errors import CompoundTailsError, ContractError, DomainError, NumericError, ResourceError
from .montecarlo import DependenceSpec, simulate_conditional_tail, simulate_tail
from .tail_analysis import (
    LimitEstimate,
    TrendConfig,
    anderson_gumbel_check,
    cv_profile,
    geometric_grid,
    gumbel_aux,
    lower_order,
    matuszewska_upper,
    representation_integrand,
    self_neglect_check,
    upper_order,
    von_mises_frechet_check,
)

__version__ = "0.1.0"

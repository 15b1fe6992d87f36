"""Truthful scheduling mechanisms K and P without money: exact allocations,
structural checks, and Monte Carlo average-case ratios."""

from ._kernels import BACKEND
from .analysis import (
    BoundComparison,
    RatioEstimate,
    SimulationConfig,
    SweepRow,
    conditional_expected_sc_k,
    convergence_sweep,
    estimate_average_ratio,
    improved_bound_check,
    conditional_sc_k_bounds,
    lemma2_bounds,
    theoretical_limit,
    worst_case_probe,
)
from .core import (
    CostParseError,
    InvalidCostError,
    MechSchedError,
    SortedCosts,
    optimal_allocation,
    social_cost,
    sort_costs,
    total_social_cost,
)
from .distributions import (
    DistributionSpec,
    RandomStream,
    cdf,
    conditional_sample,
    inverse_mean_reciprocal,
    mu_s,
    quantile,
    sample,
)
from .mechanisms import (
    MechanismId,
    ThresholdReport,
    allocate,
    allocate_k,
    allocate_k_reference,
    allocate_p,
    expected_agent_cost,
    threshold_index,
)
from .special import exp_integral_e1

__version__ = "0.1.0"

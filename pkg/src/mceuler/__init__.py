"""Monte Carlo Euler solver for terminal-value PDE problems with Sobolev error control."""

from .coeffs import (
    CoefficientSet,
    SmoothMap,
    check_assumption_level,
    constant_map,
    derivative_map,
    lift_augmented,
    lift_coefficient_set,
    linear_combination,
    linear_map,
    map_difference,
)
from .errors import (
    RateFit,
    ball_conversion_constant,
    ball_domain,
    box_domain,
    l2_error,
    quadrature_nodes,
    rate_fit,
    sobolev_error,
    unit_box,
    verify_ball_lemma,
)
from .euler import (
    NoiseStream,
    PathBundle,
    TimeGrid,
    coarsen_increments,
    coupled_pair,
    pathwise_bounds,
    simulate,
    simulate_batch,
    simulate_tangent,
)
from .growth import (
    GrowthEstimate,
    ProbeSpec,
    analytic_growth,
    growth_sum,
    linear_gauge,
    verify_calculus,
)
from .mces import (
    EstimationError,
    Plan,
    PlanInfeasibleError,
    PlanInputs,
    SobolevEstimate,
    confidence_bound,
    estimate_sobolev,
    estimate_time_dependent,
    estimate_value,
    plan_sample_sizes,
)
from .netexport import (
    AffineLayer,
    NetSpec,
    build_mces_network,
    count_bound,
    eval_network,
    freeze_realization,
    from_json,
    network_map,
    param_count,
    to_json,
)
from .perturb import (
    PerturbedPair,
    coupled_gap_check,
    eta_requirement,
    pair_from_sets,
    perturbation_eta,
    perturbed_estimate,
    verify_expectation_gap,
)
from .problems import PROBLEM_NAMES, BenchmarkProblem, make_problem

__all__ = [
    "AffineLayer",
    "BenchmarkProblem",
    "CoefficientSet",
    "EstimationError",
    "GrowthEstimate",
    "NetSpec",
    "NoiseStream",
    "PROBLEM_NAMES",
    "PathBundle",
    "PerturbedPair",
    "Plan",
    "PlanInfeasibleError",
    "PlanInputs",
    "ProbeSpec",
    "RateFit",
    "SmoothMap",
    "SobolevEstimate",
    "TimeGrid",
    "analytic_growth",
    "ball_conversion_constant",
    "ball_domain",
    "box_domain",
    "build_mces_network",
    "check_assumption_level",
    "coarsen_increments",
    "confidence_bound",
    "constant_map",
    "count_bound",
    "coupled_gap_check",
    "coupled_pair",
    "derivative_map",
    "estimate_sobolev",
    "estimate_time_dependent",
    "estimate_value",
    "eta_requirement",
    "eval_network",
    "freeze_realization",
    "from_json",
    "growth_sum",
    "l2_error",
    "lift_augmented",
    "lift_coefficient_set",
    "linear_combination",
    "linear_gauge",
    "linear_map",
    "make_problem",
    "map_difference",
    "network_map",
    "pair_from_sets",
    "param_count",
    "pathwise_bounds",
    "perturbation_eta",
    "perturbed_estimate",
    "plan_sample_sizes",
    "quadrature_nodes",
    "rate_fit",
    "simulate",
    "simulate_batch",
    "simulate_tangent",
    "sobolev_error",
    "to_json",
    "unit_box",
    "verify_ball_lemma",
    "verify_calculus",
    "verify_expectation_gap",
]

"""Two-player game solvers for inequality-constrained optimization.

The parameter player minimizes a (proxy-)Lagrangian while the multiplier
player maximizes it; the averaged play is then compressed to a sparse
mixture by a small linear program.
"""

from .evaluation import (
    BoundReport,
    ExternalRegret,
    Metrics,
    MixtureSolution,
    best_model_heuristic,
    check_bounds,
    expected_metrics,
    external_regret_lagrangian,
    importance_weighted_mixture,
    swap_regret,
    uniform_mixture,
)
from .games import (
    FORMULATIONS,
    ProblemBounds,
    StepSchedule,
    SwapRegretLearner,
    lagrangian_grad_lambda,
    lagrangian_grad_theta,
    lagrangian_value,
    proxy_lagrangian_lambda_grad,
    proxy_lagrangian_theta,
    stationary_distribution,
    step_sizes,
    swap_matrix_update,
    theoretical_epsilons,
    uniform_swap_matrix,
)
from .instances import Instance, RateSpec, build_instance, fairness_instance
from .problem import (
    Box,
    ConstrainedProblem,
    Dataset,
    Function,
    L2Ball,
    affine,
    hinge_objective,
    linear_model_losses,
    make_rate_constraint,
    project,
    project_l1_nonneg,
    robust_reformulation,
)
from .shrinking import (
    EvaluationMatrix,
    LpSolution,
    ShrinkInfeasible,
    bisect_epsilon,
    evaluate_candidates,
    shrink,
    solve_shrink_lp,
)
from .solvers import (
    IterateTrace,
    OracleSpec,
    StochasticGradientSource,
    oracle_lagrangian,
    oracle_minimize,
    oracle_proxy_lagrangian,
    projected_gradient_descent,
    stochastic_lagrangian,
    stochastic_proxy_lagrangian,
)

__all__ = [
    "BoundReport",
    "ExternalRegret",
    "Metrics",
    "MixtureSolution",
    "best_model_heuristic",
    "check_bounds",
    "expected_metrics",
    "external_regret_lagrangian",
    "importance_weighted_mixture",
    "swap_regret",
    "uniform_mixture",
    "FORMULATIONS",
    "ProblemBounds",
    "StepSchedule",
    "SwapRegretLearner",
    "lagrangian_grad_lambda",
    "lagrangian_grad_theta",
    "lagrangian_value",
    "proxy_lagrangian_lambda_grad",
    "proxy_lagrangian_theta",
    "stationary_distribution",
    "step_sizes",
    "swap_matrix_update",
    "theoretical_epsilons",
    "uniform_swap_matrix",
    "Instance",
    "RateSpec",
    "build_instance",
    "fairness_instance",
    "Box",
    "ConstrainedProblem",
    "Dataset",
    "Function",
    "L2Ball",
    "affine",
    "hinge_objective",
    "linear_model_losses",
    "make_rate_constraint",
    "project",
    "project_l1_nonneg",
    "robust_reformulation",
    "EvaluationMatrix",
    "LpSolution",
    "ShrinkInfeasible",
    "bisect_epsilon",
    "evaluate_candidates",
    "shrink",
    "solve_shrink_lp",
    "IterateTrace",
    "OracleSpec",
    "StochasticGradientSource",
    "oracle_lagrangian",
    "oracle_minimize",
    "oracle_proxy_lagrangian",
    "projected_gradient_descent",
    "stochastic_lagrangian",
    "stochastic_proxy_lagrangian",
]

__version__ = "0.1.0"

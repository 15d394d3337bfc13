"""Mixtures over iterates, their expected metrics, regrets and bound checks."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy.stats import rankdata

from .problem import ConstrainedProblem, Function
from .solvers import IterateTrace, OracleSpec, oracle_minimize

__all__ = [
    "MixtureSolution",
    "Metrics",
    "BoundReport",
    "ExternalRegret",
    "uniform_mixture",
    "importance_weighted_mixture",
    "expected_metrics",
    "lagrangian_feasibility_bound",
    "lagrangian_multiplier_bound",
    "proxy_feasibility_bound",
    "proxy_optimality_bound",
    "proxy_first_coordinate_bound",
    "check_bounds",
    "swap_regret",
    "external_regret_lagrangian",
    "best_model_heuristic",
]


@dataclass(frozen=True)
class MixtureSolution:
    """A stochastic solution: parameter vectors with selection probabilities.

    ``indices`` records where each support point came from in the trace,
    when known.
    """

    support: np.ndarray
    weights: np.ndarray
    indices: np.ndarray | None = None

    def __post_init__(self):
        support = np.atleast_2d(np.asarray(self.support, dtype=float))
        weights = np.asarray(self.weights, dtype=float).ravel()
        if len(support) == 0 or len(support) != len(weights):
            raise ValueError("support must be nonempty and match the weights")
        if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-10:
            raise ValueError("weights must be nonnegative and sum to one")
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "weights", weights)
        if self.indices is not None:
            object.__setattr__(self, "indices", np.asarray(self.indices, dtype=int))

    @property
    def size(self) -> int:
        return len(self.weights)

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        return self.support[rng.choice(self.size, p=self.weights)]


def uniform_mixture(trace: IterateTrace) -> MixtureSolution:
    return MixtureSolution(trace.thetas, np.full(trace.T, 1.0 / trace.T), np.arange(trace.T))


def importance_weighted_mixture(trace: IterateTrace) -> MixtureSolution:
    """Weight each iterate by the first multiplier coordinate it was played with."""
    if not trace.is_proxy:
        raise ValueError("importance weights need a proxy-Lagrangian trace")
    first = trace.lambdas[:, 0]
    total = first.sum()
    if not total > 0:
        raise ValueError("degenerate importance weights: every first multiplier is zero")
    keep = np.flatnonzero(first > 0)
    return MixtureSolution(trace.thetas[keep], first[keep] / first[keep].sum(), keep)


class Metrics(NamedTuple):
    objective: float
    constraints: np.ndarray
    max_violation: float


def expected_metrics(
    problem: ConstrainedProblem, mixture: MixtureSolution, values: tuple | None = None
) -> Metrics:
    """Mixture-averaged objective and constraints on the full data.

    ``values`` may pass precomputed ``(g0, g)`` arrays for the support.
    """
    if values is None:
        evals = [problem.evaluate(theta) for theta in mixture.support]
        g0 = np.array([e[0] for e in evals])
        g = np.array([e[1] for e in evals]).reshape(len(evals), problem.m)
    else:
        g0, g = values
    objective = float(mixture.weights @ g0)
    constraints = mixture.weights @ g
    violation = float(max(0.0, constraints.max())) if constraints.size else 0.0
    return Metrics(objective, constraints, violation)


# ---------------------------------------------------------------------------
# Bound formulas
# ---------------------------------------------------------------------------


def lagrangian_feasibility_bound(epsilon: float, radius: float, lambda_norm: float) -> float | None:
    """``epsilon / (R - ||lambda_bar||_1)``, or ``None`` when vacuous."""
    if radius is None or math.isinf(radius) or radius - lambda_norm <= 0:
        return None
    return epsilon / (radius - lambda_norm)


def lagrangian_multiplier_bound(epsilon: float, gamma: float, objective_range: float) -> float:
    """Upper bound ``(epsilon + B_g0) / gamma`` on ``||lambda_bar||_1`` under a margin ``gamma``."""
    return (epsilon + objective_range) / gamma


def proxy_feasibility_bound(eps_lambda: float, lambda1: float) -> float | None:
    return eps_lambda / lambda1 if lambda1 > 0 else None


def proxy_optimality_bound(eps_theta: float, eps_lambda: float, lambda1: float) -> float | None:
    return (eps_theta + eps_lambda) / lambda1 if lambda1 > 0 else None


def proxy_first_coordinate_bound(
    gamma: float, eps_theta: float, eps_lambda: float, objective_range: float
) -> float:
    """Lower bound ``(gamma - eps_theta - eps_lambda) / (gamma + B_g0)`` on the first multiplier average."""
    return (gamma - eps_theta - eps_lambda) / (gamma + objective_range)


@dataclass
class BoundReport:
    """Equilibrium bounds for a trace next to the measured mixture metrics.

    ``None`` marks a bound that is vacuous or could not be evaluated. The
    ``satisfied`` entries are ``None`` for such bounds.
    """

    formulation: str
    epsilon: float | None
    epsilon_theta: float | None
    epsilon_lambda: float | None
    lambda_bar: list
    lambda_norm: float | None
    lambda1: float | None
    feasibility_bound: float | None
    optimality_gap_bound: float | None
    multiplier_bound: float | None
    measured_objective: float
    measured_max_violation: float
    measured_gap: float | None
    satisfied: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "formulation": self.formulation,
            "epsilon": self.epsilon,
            "epsilon_theta": self.epsilon_theta,
            "epsilon_lambda": self.epsilon_lambda,
            "lambda_bar": list(self.lambda_bar),
            "lambda_norm": self.lambda_norm,
            "lambda1": self.lambda1,
            "feasibility_bound": self.feasibility_bound,
            "optimality_gap_bound": self.optimality_gap_bound,
            "multiplier_bound": self.multiplier_bound,
            "measured_objective": self.measured_objective,
            "measured_max_violation": self.measured_max_violation,
            "measured_gap": self.measured_gap,
            "satisfied": dict(self.satisfied),
        }


def _leq(value, bound, tol=1e-12):
    return None if bound is None or value is None else bool(value <= bound + tol)


def check_bounds(
    problem: ConstrainedProblem,
    trace: IterateTrace,
    epsilon,
    margin: tuple[float, float] | None = None,
    reference_objective: float | None = None,
    mixture: MixtureSolution | None = None,
) -> BoundReport:
    """Evaluate the equilibrium guarantees for ``trace`` at tolerance ``epsilon``.

    Parameters
    ----------
    epsilon
        A float for Lagrangian traces, ``(eps_theta, eps_lambda)`` for proxy traces.
    margin
        Optional ``(gamma, B_g0)``: a feasibility margin and objective range,
        enabling the multiplier bounds.
    reference_objective
        Objective of a feasible comparator; enables the optimality check.
    mixture
        Defaults to the uniform mixture (Lagrangian) or the importance-weighted
        mixture (proxy).
    """
    lam_bar = trace.lambda_bar()
    satisfied = {}
    if trace.is_proxy:
        eps_theta, eps_lambda = epsilon
        lambda1 = float(lam_bar[0])
        mixture = mixture or importance_weighted_mixture(trace)
        metrics = expected_metrics(problem, mixture)
        feas = proxy_feasibility_bound(eps_lambda, lambda1)
        gap = proxy_optimality_bound(eps_theta, eps_lambda, lambda1)
        mult = None
        if margin is not None:
            mult = proxy_first_coordinate_bound(margin[0], eps_theta, eps_lambda, margin[1])
            satisfied["multiplier"] = bool(lambda1 >= mult - 1e-12)
        eps, lam_norm = None, None
    else:
        eps = float(epsilon)
        eps_theta = eps_lambda = None
        lam_norm = float(np.abs(lam_bar).sum())
        lambda1 = None
        mixture = mixture or uniform_mixture(trace)
        metrics = expected_metrics(problem, mixture)
        feas = lagrangian_feasibility_bound(eps, trace.radius, lam_norm)
        gap = eps
        mult = None
        if margin is not None:
            mult = lagrangian_multiplier_bound(eps, margin[0], margin[1])
            satisfied["multiplier"] = _leq(lam_norm, mult)
    satisfied["feasibility"] = _leq(metrics.max_violation, feas)
    measured_gap = None
    if reference_objective is not None:
        measured_gap = metrics.objective - reference_objective
        satisfied["optimality"] = _leq(measured_gap, gap)
    return BoundReport(
        trace.formulation, eps, eps_theta, eps_lambda, lam_bar.tolist(), lam_norm, lambda1,
        feas, gap, mult, metrics.objective, metrics.max_violation, measured_gap, satisfied,
    )


# ---------------------------------------------------------------------------
# Regrets
# ---------------------------------------------------------------------------


def swap_regret(lambdas, payoffs) -> float:
    """Average swap regret of a maximizing player on linear payoffs.

    The best left-stochastic remapping decomposes over columns: column ``i``
    sends all of ``lambda_i`` to the action with the largest accumulated
    payoff ``sum_t lambda_i^(t) r_j^(t)``.
    """
    lambdas = np.atleast_2d(np.asarray(lambdas, dtype=float))
    payoffs = np.atleast_2d(np.asarray(payoffs, dtype=float))
    if lambdas.shape != payoffs.shape:
        raise ValueError("lambda and payoff sequences must have the same shape")
    S = lambdas.T @ payoffs
    return float((S.max(axis=1).sum() - np.trace(S)) / len(lambdas))


@dataclass(frozen=True)
class ExternalRegret:
    """Average external regrets of both Lagrangian players.

    ``theta_regret`` uses an oracle for the comparator, so the true value
    can exceed the reported one by at most ``rho``.
    """

    lambda_regret: float
    theta_regret: float
    lambda_star: np.ndarray
    theta_star: np.ndarray
    rho: float

    @property
    def total(self) -> float:
        return self.lambda_regret + self.theta_regret


def external_regret_lagrangian(
    problem: ConstrainedProblem, trace: IterateTrace, radius: float, oracle: OracleSpec
) -> ExternalRegret:
    if radius is None or math.isinf(radius):
        raise ValueError("external regret needs a finite radius R")
    if trace.objective_values is not None and trace.constraint_values is not None:
        g0, g = trace.objective_values, trace.constraint_values
    else:
        evals = [problem.evaluate(theta) for theta in trace.thetas]
        g0 = np.array([e[0] for e in evals])
        g = np.array([e[1] for e in evals]).reshape(trace.T, problem.m)
    realized = float(np.mean(g0 + np.einsum("ti,ti->t", g, trace.lambdas)))
    avg_g = g.mean(axis=0)
    lam_star = np.zeros(problem.m)
    if problem.m and avg_g.max() > 0:
        lam_star[int(np.argmax(avg_g))] = radius
    best_lambda = float(g0.mean() + lam_star @ avg_g)

    lam_bar = trace.lambda_bar()
    functions = (problem.objective,) + problem.constraints
    weights = np.concatenate(([1.0], lam_bar))

    def value(theta):
        return sum(w * f(theta) for w, f in zip(weights, functions) if w != 0.0)

    def grad(theta):
        return sum(w * f.gradient(theta) for w, f in zip(weights, functions) if w != 0.0)

    def many(points):
        points = np.asarray(points, dtype=float)
        if points.ndim == 1:
            return value(points)
        return sum(w * f.many(points) for w, f in zip(weights, functions) if w != 0.0)

    target = Function(value, grad)
    if problem.vectorized:
        target = Function(many, grad, vectorized=True)
    theta_star = oracle_minimize(oracle, target, problem.domain)
    best_theta = value(theta_star)
    return ExternalRegret(
        best_lambda - realized, realized - best_theta, lam_star, theta_star,
        oracle.rho(problem.dim),
    )


# ---------------------------------------------------------------------------
# Model selection
# ---------------------------------------------------------------------------


def best_model_heuristic(reports: Sequence[tuple[float, Sequence[float]]]) -> int:
    """Pick a model by its worst rank across the objective and every violation.

    Each model is ranked (competition ranking, 1 is best) on the objective
    and on each constraint-violation magnitude; its score is its largest
    rank. The lowest score wins, then the lower objective, then the lower
    index.
    """
    if len(reports) == 0:
        raise ValueError("no models to choose from")
    objectives = np.array([r[0] for r in reports], dtype=float)
    violations = np.array([np.asarray(r[1], dtype=float).ravel() for r in reports])
    columns = np.column_stack([objectives, np.maximum(violations, 0.0).reshape(len(reports), -1)])
    ranks = np.column_stack([rankdata(c, method="min") for c in columns.T])
    scores = ranks.max(axis=1)
    order = np.lexsort((np.arange(len(reports)), objectives, scores))
    return int(order[0])

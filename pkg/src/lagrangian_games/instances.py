"""Built-in benchmark problems with the bounds their step sizes need."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .games import ProblemBounds
from .problem import (
    Box,
    ConstrainedProblem,
    Dataset,
    Function,
    affine,
    hinge_objective,
    make_rate_constraint,
    robust_reformulation,
)

__all__ = [
    "Instance",
    "RateSpec",
    "figure1",
    "fairness_instance",
    "synthetic_fairness_data",
    "synthetic_fairness",
    "robust_toy",
    "INSTANCES",
    "build_instance",
]


@dataclass(frozen=True)
class Instance:
    """A problem plus the constants used by step sizes and bound checks.

    Attributes
    ----------
    lagrangian_bounds, proxy_bounds
        Norm bounds for the two formulations. The multiplier-gradient bound
        is a 2-norm for the Lagrangian and an infinity-norm for the proxy
        game. ``grad_norm`` for the Lagrangian holds for unit multipliers;
        see :meth:`bounds`.
    objective_lipschitz, constraint_lipschitz
        Lipschitz constants used to report a grid oracle's error.
    margin
        ``(gamma, B_g0)`` when a strictly feasible point with margin ``gamma``
        is known.
    reference_objective
        Constrained optimum, when known.
    validation
        The same problem built on held-out data, if any.
    data, rates
        For data-backed problems: the datasets by split name and the rate
        constraints they carry.
    """

    name: str
    problem: ConstrainedProblem
    lagrangian_bounds: ProblemBounds
    proxy_bounds: ProblemBounds
    objective_lipschitz: float
    constraint_lipschitz: float
    margin: tuple[float, float] | None = None
    reference_objective: float | None = None
    validation: ConstrainedProblem | None = None
    data: dict | None = None
    rates: tuple | None = None

    def bounds(self, formulation: str, radius: float | None = None) -> ProblemBounds:
        """Bounds for ``formulation``; Lagrangian gradient bounds scale with ``radius``."""
        if formulation.startswith("proxy"):
            return self.proxy_bounds
        b = self.lagrangian_bounds
        grad = None
        if radius is not None and math.isfinite(radius):
            grad = self.objective_lipschitz + radius * self.constraint_lipschitz
        return ProblemBounds(b.theta_norm, grad, b.lambda_grad_norm, b.objective_range)

    def lipschitz(self, formulation: str, radius: float | None = None) -> float:
        """Lipschitz constant of the parameter player's payoff."""
        if formulation.startswith("proxy"):
            return max(self.objective_lipschitz, self.constraint_lipschitz)
        if radius is None or not math.isfinite(radius):
            raise ValueError("a finite radius is needed for the Lagrangian Lipschitz constant")
        return self.objective_lipschitz + radius * self.constraint_lipschitz


def figure1() -> Instance:
    """Concave objective on a box whose corners are all infeasible.

    Minimize ``-(t1^2 + t2^2)`` on ``[-1, 1]^2`` over the triangle
    ``t1 >= 0.2, t2 >= 0.2, t1 + t2 <= 1.2``. No pure equilibrium exists, so
    only a mixture of iterates solves it.
    """
    domain = Box.cube(2, -1.0, 1.0)

    def value(theta):
        theta = np.asarray(theta, dtype=float)
        return -np.sum(theta * theta, axis=-1)

    objective = Function(value, lambda th: -2.0 * np.asarray(th, dtype=float), vectorized=True)
    constraints = (affine([-1.0, 0.0], 0.2), affine([0.0, -1.0], 0.2), affine([1.0, 1.0], -1.2))
    problem = ConstrainedProblem(objective, constraints, domain, proxies=constraints, name="figure1")
    corner = np.array([-1.0, -1.0])
    g_corner = np.array([f(corner) for f in constraints])
    theta_norm = math.sqrt(2.0)
    lagrangian = ProblemBounds(theta_norm, None, float(np.linalg.norm(g_corner)), 2.0)
    proxy = ProblemBounds(
        theta_norm, 2.0 * math.sqrt(2.0), float(np.abs(g_corner).max()), 2.0
    )
    # the incenter-like point (0.2 + g, 0.2 + g) with g = 0.8 / 3 is the most interior
    gamma = 0.8 / 3.0
    return Instance(
        "figure1",
        problem,
        lagrangian,
        proxy,
        objective_lipschitz=2.0 * math.sqrt(2.0),
        constraint_lipschitz=math.sqrt(2.0),
        margin=(gamma, 2.0),
        reference_objective=-1.04,
    )


@dataclass(frozen=True)
class RateSpec:
    group: str
    factor: float
    kind: str = "equal_opportunity"


def _fairness_problem(data: Dataset, rates: Sequence[RateSpec], domain: Box, name: str):
    pairs = [make_rate_constraint(data, r.group, r.factor, r.kind) for r in rates]
    return ConstrainedProblem(
        hinge_objective(data),
        tuple(p[0] for p in pairs),
        domain,
        proxies=tuple(p[1] for p in pairs),
        num_examples=data.n_rows,
        name=name,
    )


def fairness_instance(
    train: Dataset,
    rates: Sequence[RateSpec],
    box: float = 2.0,
    validation: Dataset | None = None,
    name: str = "fairness",
) -> Instance:
    """Hinge-loss linear classification with rate constraints on ``[-box, box]^d``."""
    d = train.n_features
    domain = Box.cube(d, -box, box)
    problem = _fairness_problem(train, rates, domain, name)
    valid = _fairness_problem(validation, rates, domain, name) if validation is not None else None
    x_norm = float(np.linalg.norm(train.features, axis=1).max())
    theta_norm = domain.norm_bound()
    max_factor = max((r.factor for r in rates), default=0.0)
    proxy_grad = (1.0 + max_factor) * x_norm
    objective_range = 1.0 + theta_norm * x_norm
    m = len(rates)
    # proxies range over [-1, factor * (1 + max margin)]
    proxy_range = max(1.0, max_factor * objective_range)
    lagrangian = ProblemBounds(theta_norm, None, math.sqrt(m) * proxy_range, objective_range)
    proxy = ProblemBounds(theta_norm, max(x_norm, proxy_grad), 1.0, objective_range)
    return Instance(
        name,
        problem,
        lagrangian,
        proxy,
        objective_lipschitz=x_norm,
        constraint_lipschitz=proxy_grad,
        validation=valid,
        data={"train": train} if validation is None else {"train": train, "validation": validation},
        rates=tuple(rates),
    )


def synthetic_fairness_data(n: int, seed: int, minority_fraction: float = 0.3) -> Dataset:
    """Two-group data where the minority's positives sit closer to the negatives.

    Features are two Gaussian coordinates, the group indicator and a bias.
    """
    rng = np.random.default_rng(seed)
    minority = rng.random(n) < minority_fraction
    labels = np.where(rng.random(n) < 0.5, 1.0, -1.0)
    centers = np.where(labels[:, None] > 0, [[1.0, 1.0]], [[-1.0, -1.0]])
    centers[minority & (labels > 0)] = [-0.5, -0.5]
    xy = centers + 0.8 * rng.standard_normal((n, 2))
    features = np.column_stack([xy, minority.astype(float), np.ones(n)])
    return Dataset(features, labels, {"minority": minority, "majority": ~minority})


def synthetic_fairness(
    n_train: int = 1000, n_valid: int = 500, seed: int = 0, factor: float = 0.9
) -> Instance:
    """One equal-opportunity constraint on the minority group.

    The unconstrained hinge-loss classifier gives the minority's positives a
    clearly lower true-positive rate, so the constraint binds.
    """
    train = synthetic_fairness_data(n_train, seed)
    valid = synthetic_fairness_data(n_valid, seed + 1)
    return fairness_instance(
        train, [RateSpec("minority", factor)], validation=valid, name="synthetic-fairness"
    )


ROBUST_TOY_LOSSES = (
    (np.array([1.0, 0.0]), 0.1),
    (np.array([-0.5, 0.8]), -0.2),
    (np.array([-0.5, -0.8]), 0.3),
)


def robust_toy() -> Instance:
    """``min max_i <a_i, theta> + b_i`` over ``[-1, 1]^2`` with three losses."""
    domain = Box.cube(2, -1.0, 1.0)
    losses = [affine(a, b) for a, b in ROBUST_TOY_LOSSES]
    hi = max(np.abs(a).sum() + abs(b) for a, b in ROBUST_TOY_LOSSES)
    problem = robust_reformulation(losses, domain, (-hi, hi))
    problem = ConstrainedProblem(
        problem.objective, problem.constraints, problem.domain,
        proxies=problem.constraints, name="robust-toy",
    )
    theta_norm = problem.domain.norm_bound()
    g_range = 2 * hi
    a_norm = max(np.linalg.norm(a) for a, _ in ROBUST_TOY_LOSSES)
    constraint_lip = math.sqrt(a_norm**2 + 1.0)
    lagrangian = ProblemBounds(theta_norm, None, math.sqrt(3) * g_range, 2 * hi)
    proxy = ProblemBounds(theta_norm, constraint_lip, g_range, 2 * hi)
    return Instance(
        "robust-toy", problem, lagrangian, proxy,
        objective_lipschitz=1.0, constraint_lipschitz=constraint_lip,
    )


INSTANCES = {
    "figure1": figure1,
    "synthetic-fairness": synthetic_fairness,
    "robust-toy": robust_toy,
}


def build_instance(name: str, **options) -> Instance:
    if name not in INSTANCES:
        raise ValueError(f"unknown instance {name!r}; choose from {sorted(INSTANCES)}")
    return INSTANCES[name](**options)

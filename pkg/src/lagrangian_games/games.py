"""Lagrangian and proxy-Lagrangian payoffs, and the swap-regret multiplier player.

Multipliers are plain arrays: the Lagrangian game uses ``lam >= 0`` with
``||lam||_1 <= R``; the proxy-Lagrangian game uses a point on the
``(m+1)``-simplex whose first coordinate weighs the objective.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import linalg
from scipy.sparse.csgraph import connected_components

from .problem import ConstrainedProblem

__all__ = [
    "FORMULATIONS",
    "ProblemBounds",
    "StepSchedule",
    "SwapRegretLearner",
    "check_left_stochastic",
    "lagrangian_value",
    "lagrangian_grad_lambda",
    "lagrangian_grad_theta",
    "proxy_lagrangian_theta",
    "proxy_lagrangian_lambda_grad",
    "stationary_distribution",
    "swap_matrix_update",
    "uniform_swap_matrix",
    "step_sizes",
    "theoretical_epsilons",
]

FORMULATIONS = ("lagrangian_oracle", "lagrangian_stochastic", "proxy_stochastic", "proxy_oracle")


# ---------------------------------------------------------------------------
# Payoffs
# ---------------------------------------------------------------------------


def _multipliers(problem: ConstrainedProblem, lam, size: int) -> np.ndarray:
    lam = np.asarray(lam, dtype=float)
    if lam.shape != (size,):
        raise ValueError(f"expected {size} multipliers, got shape {lam.shape}")
    return lam


def lagrangian_value(problem: ConstrainedProblem, theta, lam) -> float:
    """``g0(theta) + sum_i lam_i g_i(theta)``."""
    lam = _multipliers(problem, lam, problem.m)
    g0, g = problem.evaluate(np.asarray(theta, dtype=float))
    return float(g0 + lam @ g)


def lagrangian_grad_lambda(problem: ConstrainedProblem, theta, batch=None) -> np.ndarray:
    """Gradient of the Lagrangian in ``lam``: the original constraint values."""
    return problem.constraint_values(np.asarray(theta, dtype=float), batch)


def lagrangian_grad_theta(problem: ConstrainedProblem, theta, lam, batch=None) -> np.ndarray:
    """A subgradient of the Lagrangian in ``theta`` (needs constraint subgradients)."""
    lam = _multipliers(problem, lam, problem.m)
    theta = np.asarray(theta, dtype=float)
    grad = problem.objective.gradient(theta, batch)
    for li, g in zip(lam, problem.constraints):
        if li != 0.0:
            grad = grad + li * g.gradient(theta, batch)
    return grad


def proxy_lagrangian_theta(problem: ConstrainedProblem, theta, lam, batch=None):
    """Value and subgradient of ``lam_1 g0 + sum_i lam_{i+1} proxy_i`` at ``theta``.

    Only the proxy constraints enter; the original constraints never do.
    """
    if not problem.has_proxies:
        raise ValueError("problem has no proxy constraints")
    lam = _multipliers(problem, lam, problem.m + 1)
    theta = np.asarray(theta, dtype=float)
    value = lam[0] * problem.objective(theta, batch)
    grad = lam[0] * problem.objective.gradient(theta, batch)
    for li, g in zip(lam[1:], problem.proxies):
        if li != 0.0:
            value += li * g(theta, batch)
            grad = grad + li * g.gradient(theta, batch)
    return float(value), grad


def proxy_lagrangian_lambda_grad(problem: ConstrainedProblem, theta, batch=None) -> np.ndarray:
    """Gradient of the multiplier player's payoff: ``(0, g_1, ..., g_m)``."""
    g = problem.constraint_values(np.asarray(theta, dtype=float), batch)
    return np.concatenate(([0.0], g))


# ---------------------------------------------------------------------------
# Swap matrices
# ---------------------------------------------------------------------------


def uniform_swap_matrix(n: int) -> np.ndarray:
    return np.full((n, n), 1.0 / n)


def check_left_stochastic(M, tol: float = 1e-12) -> np.ndarray:
    """Validate a square nonnegative matrix whose columns sum to one."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1] or M.shape[0] == 0:
        raise ValueError("swap matrix must be square and nonempty")
    if np.any(M < 0):
        raise ValueError("swap matrix has negative entries")
    if np.any(np.abs(M.sum(axis=0) - 1.0) > tol):
        raise ValueError("swap matrix columns must sum to 1")
    return M


def _solve_irreducible(M: np.ndarray) -> np.ndarray | None:
    """Solve ``(M - I) lam = 0, sum(lam) = 1`` by LU; None if singular."""
    n = M.shape[0]
    A = M - np.eye(n)
    A[-1, :] = 1.0
    b = np.zeros(n)
    b[-1] = 1.0
    with warnings.catch_warnings():
        # singular systems are detected below and handled by the caller
        warnings.simplefilter("ignore", linalg.LinAlgWarning)
        lu, piv = linalg.lu_factor(A, check_finite=False)
    diag = np.abs(np.diag(lu))
    if diag.min() <= 1e-10 * max(diag.max(), 1.0):
        return None
    lam = linalg.lu_solve((lu, piv), b, check_finite=False)
    if lam.min() < -1e-10:
        return None
    lam = np.maximum(lam, 0.0)
    return lam / lam.sum()


def _closed_class(M: np.ndarray) -> np.ndarray:
    """Indices of the lowest-numbered closed communicating class of ``M``."""
    # column j holds the transition probabilities out of state j
    adjacency = (M.T > 0).astype(float)
    _, labels = connected_components(adjacency, directed=True, connection="strong")
    for label in np.unique(labels):
        members = labels == label
        leaves = adjacency[np.ix_(members, ~members)]
        if not leaves.any():
            return np.flatnonzero(members)
    raise AssertionError("a finite chain always has a closed class")


def _cesaro_average(M: np.ndarray, steps: int = 100_000, tol: float = 1e-10) -> np.ndarray:
    n = M.shape[0]
    x = np.full(n, 1.0 / n)
    total = np.zeros(n)
    for k in range(1, steps + 1):
        total += x
        x = M @ x
        if k % 64 == 0:
            avg = total / k
            if np.max(np.abs(M @ avg - avg)) <= tol:
                break
    avg = total / total.sum()
    return avg


def stationary_distribution(M, tol: float = 1e-10) -> np.ndarray:
    """A distribution ``lam`` on the simplex with ``M @ lam == lam``.

    The sum-to-one system is solved by LU. When that system is singular
    (several stationary distributions), the chain is restricted to its first
    closed communicating class, whose stationary distribution is unique.
    Cesaro-averaged power iteration is the last resort.
    """
    M = check_left_stochastic(M, tol=1e-9)
    n = M.shape[0]
    if n == 1:
        return np.ones(1)
    lam = _solve_irreducible(M)
    if lam is not None and np.max(np.abs(M @ lam - lam)) <= tol:
        return lam
    members = _closed_class(M)
    lam = np.zeros(n)
    sub = M[np.ix_(members, members)]
    sub = sub / sub.sum(axis=0)
    local = _solve_irreducible(sub) if members.size > 1 else np.ones(1)
    if local is not None:
        lam[members] = local
        if np.max(np.abs(M @ lam - lam)) <= tol:
            return lam
    return _cesaro_average(M, tol=tol)


def swap_matrix_update(M, lam, delta, eta: float) -> np.ndarray:
    """One multiplicative step ``M * exp(eta * delta lam^T)`` then column normalization.

    Each column's largest exponent is subtracted before exponentiating; that is
    a positive per-column scale and cancels in the normalization.
    """
    if not eta > 0:
        raise ValueError("step size must be positive")
    M = np.asarray(M, dtype=float)
    exponent = eta * np.outer(np.asarray(delta, dtype=float), np.asarray(lam, dtype=float))
    exponent -= exponent.max(axis=0)
    updated = M * np.exp(exponent)
    return updated / updated.sum(axis=0)


class SwapRegretLearner:
    """Multiplier player minimizing swap regret over the simplex.

    Keeps a left-stochastic matrix, plays its stationary distribution and
    updates the matrix multiplicatively with the rank-one supergradient
    ``delta lam^T``.
    """

    def __init__(self, n: int, eta: float):
        self.matrix = uniform_swap_matrix(n)
        self.eta = eta

    def strategy(self) -> np.ndarray:
        return stationary_distribution(self.matrix)

    def update(self, lam: np.ndarray, delta: np.ndarray) -> None:
        if self.matrix.shape[0] > 1:
            self.matrix = swap_matrix_update(self.matrix, lam, delta, self.eta)


# ---------------------------------------------------------------------------
# Step sizes and convergence bounds
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ProblemBounds:
    """Norm and range bounds used by the step-size and epsilon formulas.

    Attributes
    ----------
    theta_norm : max ``||theta||_2`` over the domain.
    grad_norm : bound on the 2-norm of the parameter player's subgradients.
    lambda_grad_norm : bound on the multiplier player's gradients (2-norm for
        the Lagrangian formulations, infinity-norm for the proxy ones).
    objective_range : bound on ``sup g0 - inf g0`` over the domain.
    """

    theta_norm: float | None = None
    grad_norm: float | None = None
    lambda_grad_norm: float | None = None
    objective_range: float | None = None


@dataclass(frozen=True)
class StepSchedule:
    eta_theta: float | None
    eta_lambda: float
    horizon: float
    bounds: ProblemBounds
    num_constraints: int
    radius: float | None = None
    delta: float | None = None

    def __post_init__(self):
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")
        if self.eta_theta is not None and not self.eta_theta > 0:
            raise ValueError("eta_theta must be positive")
        if not (self.eta_lambda > 0 or (self.num_constraints == 0 and self.eta_lambda == 0)):
            raise ValueError("eta_lambda must be positive")
        if self.delta is not None and not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")


def _need(value, name: str) -> float:
    if value is None or not value > 0 or math.isinf(value):
        raise ValueError(f"{name} must be a positive finite bound")
    return float(value)


def step_sizes(
    bounds: ProblemBounds,
    T: float,
    formulation: str,
    num_constraints: int,
    radius: float | None = None,
    delta: float | None = None,
) -> StepSchedule:
    """Constant step sizes of the convergence lemmas for one formulation.

    ``eta_theta = B_theta / (B_grad sqrt(2T))`` for gradient-based parameter
    players; ``eta_lambda = R / (B_delta sqrt(2T))`` for the Lagrangian
    multiplier player and ``sqrt((m+1) ln(m+1) / (T B_delta^2))`` for the
    swap-regret player.
    """
    if formulation not in FORMULATIONS:
        raise ValueError(f"unknown formulation {formulation!r}")
    if not T > 0:
        raise ValueError("T must be positive")
    eta_theta = None
    if formulation in ("lagrangian_stochastic", "proxy_stochastic"):
        eta_theta = _need(bounds.theta_norm, "theta_norm") / (
            _need(bounds.grad_norm, "grad_norm") * math.sqrt(2 * T)
        )
    b_delta = _need(bounds.lambda_grad_norm, "lambda_grad_norm")
    if formulation.startswith("lagrangian"):
        if radius is None or math.isinf(radius):
            raise ValueError(
                "the Lagrangian step size needs a finite radius R; "
                "supply one or pass an explicit eta_lambda"
            )
        eta_lambda = radius / (b_delta * math.sqrt(2 * T))
    else:
        n = num_constraints + 1
        eta_lambda = math.sqrt(n * math.log(n) / (T * b_delta**2))
    return StepSchedule(eta_theta, eta_lambda, T, bounds, num_constraints, radius, delta)


def theoretical_epsilons(
    schedule: StepSchedule, formulation: str, rho: float = 0.0, exact_gradients: bool = False
):
    """Equilibrium tolerances guaranteed by the convergence lemmas.

    Returns a float for the Lagrangian formulations and ``(eps_theta,
    eps_lambda)`` for the proxy ones. Stochastic formulations hold with
    probability ``1 - delta``; with ``exact_gradients`` (full-batch runs) the
    deterministic regret bounds are used and ``delta`` is not needed.
    """
    T = schedule.horizon
    b = schedule.bounds
    n = schedule.num_constraints + 1
    swap = 2 * _need(b.lambda_grad_norm, "lambda_grad_norm") * math.sqrt(n * math.log(n) / T)
    if formulation == "lagrangian_oracle":
        return rho + _need(schedule.radius, "radius") * b.lambda_grad_norm * math.sqrt(2 / T)
    if formulation == "proxy_oracle":
        return rho, swap
    theta_part = _need(b.theta_norm, "theta_norm") * _need(b.grad_norm, "grad_norm")
    if exact_gradients:
        if formulation == "lagrangian_stochastic":
            radius = _need(schedule.radius, "radius")
            return (theta_part + radius * b.lambda_grad_norm) * math.sqrt(2 / T)
        if formulation == "proxy_stochastic":
            return theta_part * math.sqrt(2 / T), swap
    if schedule.delta is None:
        raise ValueError("stochastic bounds need a confidence delta")
    conf = 1 + 16 * math.log(2 / schedule.delta)
    if formulation == "lagrangian_stochastic":
        radius = _need(schedule.radius, "radius")
        return 2 * (theta_part + radius * b.lambda_grad_norm) * math.sqrt(conf / T)
    if formulation == "proxy_stochastic":
        eps_theta = 2 * theta_part * math.sqrt(conf / T)
        eps_lambda = 2 * b.lambda_grad_norm * math.sqrt(2 * n * math.log(n) * conf / T)
        return eps_theta, eps_lambda
    raise ValueError(f"unknown formulation {formulation!r}")

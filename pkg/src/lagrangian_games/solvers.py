"""Training loops for the Lagrangian and proxy-Lagrangian games.

Four loops are provided, crossing the parameter player (an approximate
minimization oracle, or projected stochastic subgradient descent) with the
multiplier player (projected gradient ascent on the Lagrangian, or the
swap-regret learner on the proxy-Lagrangian):

======================  ====================  =========================
loop                    parameter player      multiplier player
======================  ====================  =========================
oracle_lagrangian       oracle                projected gradient ascent
stochastic_lagrangian   projected SGD         projected gradient ascent
stochastic_proxy_...    projected SGD         swap-regret learner
oracle_proxy_...        oracle                swap-regret learner
======================  ====================  =========================
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .games import (
    StepSchedule,
    SwapRegretLearner,
    lagrangian_grad_theta,
    proxy_lagrangian_lambda_grad,
    proxy_lagrangian_theta,
)
from .problem import Box, ConstrainedProblem, Function, ParameterDomain, project, project_l1_nonneg

__all__ = [
    "MAX_GRID_POINTS",
    "OracleSpec",
    "IterateTrace",
    "StochasticGradientSource",
    "grid_points",
    "oracle_minimize",
    "projected_gradient_descent",
    "oracle_lagrangian",
    "stochastic_lagrangian",
    "stochastic_proxy_lagrangian",
    "oracle_proxy_lagrangian",
]

MAX_GRID_POINTS = 10_000_000


# ---------------------------------------------------------------------------
# Oracles
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OracleSpec:
    """An approximate minimization oracle over the parameter domain.

    ``grid_search`` scans the full lattice of a box at ``resolution``;
    ``multistart_descent`` runs projected gradient descent from the projected
    origin and ``restarts - 1`` random starts. ``rho_estimate`` is the
    caller's additive error bound; for a grid with a ``lipschitz`` bound the
    reported error is ``lipschitz * resolution * sqrt(dim)`` instead.
    """

    kind: str = "grid_search"
    resolution: float = 0.01
    lipschitz: float | None = None
    restarts: int = 8
    inner_steps: int = 200
    inner_eta: float = 0.05
    rho_estimate: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("grid_search", "multistart_descent"):
            raise ValueError(f"unknown oracle kind {self.kind!r}")
        if not self.resolution > 0:
            raise ValueError("resolution must be positive")
        if self.rho_estimate < 0:
            raise ValueError("rho_estimate must be nonnegative")
        if self.restarts < 1 or self.inner_steps < 1:
            raise ValueError("restarts and inner_steps must be positive")

    def rho(self, dim: int) -> float:
        if self.kind == "grid_search" and self.lipschitz is not None:
            return self.lipschitz * self.resolution * math.sqrt(dim)
        return self.rho_estimate


def _axis(lo: float, hi: float, resolution: float) -> np.ndarray:
    steps = (hi - lo) / resolution
    n = int(math.floor(steps + 1e-9)) + 1
    if abs(steps - round(steps)) <= 1e-9:
        return np.linspace(lo, hi, n)
    pts = lo + resolution * np.arange(n)
    return np.append(pts, hi)


def grid_points(domain: Box, resolution: float) -> np.ndarray:
    """Lattice points of a box in lexicographic order, one per row."""
    if not isinstance(domain, Box):
        raise ValueError("grid search requires a box domain")
    axes = [_axis(lo, hi, resolution) for lo, hi in zip(domain.lower, domain.upper)]
    total = math.prod(a.size for a in axes)
    if total > MAX_GRID_POINTS:
        raise ValueError(
            f"grid has {total} points (limit {MAX_GRID_POINTS}); use a coarser resolution"
        )
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def _random_point(domain: ParameterDomain, rng: np.random.Generator) -> np.ndarray:
    if isinstance(domain, Box):
        return rng.uniform(domain.lower, domain.upper)
    direction = rng.normal(size=domain.dim)
    direction /= np.linalg.norm(direction) or 1.0
    return domain.center + direction * domain.radius * rng.uniform() ** (1 / domain.dim)


def oracle_minimize(
    oracle: OracleSpec,
    f: Function | Callable[[np.ndarray], float],
    domain: ParameterDomain,
    grad: Callable[[np.ndarray], np.ndarray] | None = None,
) -> np.ndarray:
    """Approximately minimize ``f`` over ``domain``.

    Grid search returns the best lattice point, ties going to the
    lexicographically smallest. Multistart descent needs ``grad`` (or a
    :class:`Function` with a gradient).
    """
    fn = f if isinstance(f, Function) else Function(f, grad)
    if grad is not None and fn.grad is None:
        fn = Function(fn.value, grad, fn.batched, fn.vectorized)
    if oracle.kind == "grid_search":
        points = grid_points(domain, oracle.resolution)
        return points[int(np.argmin(fn.many(points)))].copy()
    rng = np.random.default_rng(oracle.seed)
    starts = [project(domain, np.zeros(domain.dim))]
    starts += [_random_point(domain, rng) for _ in range(oracle.restarts - 1)]
    best, best_value = None, math.inf
    for start in starts:
        theta = start
        for _ in range(oracle.inner_steps):
            theta = domain.project(theta - oracle.inner_eta * fn.gradient(theta))
        value = fn(theta)
        if value < best_value:
            best, best_value = theta, value
    return best


class _GridTable:
    """Values of several functions on a fixed lattice, for repeated argmins."""

    def __init__(self, functions: list[Function], domain: Box, resolution: float):
        self.points = grid_points(domain, resolution)
        self.values = np.stack([f.many(self.points) for f in functions], axis=1)

    def argmin(self, weights: np.ndarray) -> np.ndarray:
        return self.points[int(np.argmin(self.values @ weights))].copy()


def _oracle_step(problem, oracle, functions, weights, table):
    if table is not None:
        return table.argmin(weights)

    def value(theta):
        return sum(w * f(theta) for w, f in zip(weights, functions) if w != 0.0)

    def grad(theta):
        return sum(w * f.gradient(theta) for w, f in zip(weights, functions) if w != 0.0)

    return oracle_minimize(oracle, Function(value, grad), problem.domain)


# ---------------------------------------------------------------------------
# Traces and gradient sampling
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class IterateTrace:
    """Parameter and multiplier sequences produced by one training run.

    ``lambdas`` has ``m`` columns for Lagrangian traces and ``m + 1`` simplex
    columns for proxy-Lagrangian traces. ``objective_values`` and
    ``constraint_values`` cache exact evaluations when the loop computed them.
    """

    thetas: np.ndarray
    lambdas: np.ndarray
    formulation: str
    objective_values: np.ndarray | None = None
    constraint_values: np.ndarray | None = None
    seed: int = 0
    schedule: StepSchedule | None = None
    radius: float | None = None
    rho: float = 0.0
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.thetas) != len(self.lambdas) or len(self.thetas) < 1:
            raise ValueError("trace needs equally many (>= 1) parameters and multipliers")

    @property
    def T(self) -> int:
        return len(self.thetas)

    @property
    def is_proxy(self) -> bool:
        return self.formulation.startswith("proxy")

    def lambda_bar(self) -> np.ndarray:
        return self.lambdas.mean(axis=0)

    def save(self, path) -> None:
        np.savez(
            path,
            thetas=self.thetas,
            lambdas=self.lambdas,
            formulation=np.array(self.formulation),
            seed=np.array(self.seed),
            radius=np.array(np.nan if self.radius is None else self.radius),
            rho=np.array(self.rho),
        )

    @classmethod
    def load(cls, path) -> "IterateTrace":
        with np.load(path) as data:
            radius = float(data["radius"])
            return cls(
                thetas=data["thetas"],
                lambdas=data["lambdas"],
                formulation=str(data["formulation"]),
                seed=int(data["seed"]),
                radius=None if math.isnan(radius) else radius,
                rho=float(data["rho"]),
            )


@dataclass(frozen=True)
class StochasticGradientSource:
    """Deterministic minibatch sampler keyed on ``(seed, iteration)``."""

    minibatch_size: int = 100
    rng_seed: int = 0

    def __post_init__(self):
        if self.minibatch_size < 1:
            raise ValueError("minibatch_size must be positive")

    def batch(self, t: int, num_examples: int | None) -> np.ndarray | None:
        """Row indices for iteration ``t``; ``None`` means the full data."""
        if num_examples is None or self.minibatch_size >= num_examples:
            return None
        rng = np.random.default_rng([self.rng_seed, t])
        return rng.choice(num_examples, size=self.minibatch_size, replace=False)


FULL_BATCH = StochasticGradientSource(minibatch_size=2**62)


# ---------------------------------------------------------------------------
# Regret engines
# ---------------------------------------------------------------------------


def projected_gradient_descent(
    grad: Callable[[np.ndarray, int], np.ndarray],
    domain: ParameterDomain,
    T: int,
    eta: float,
) -> np.ndarray:
    """Projected (sub)gradient descent from the minimum-norm point of the domain.

    ``grad(theta, t)`` returns a subgradient of the round-``t`` loss. Returns
    the ``T`` iterates played, one per row.
    """
    theta = project(domain, np.zeros(domain.dim))
    out = np.empty((T, domain.dim))
    for t in range(T):
        out[t] = theta
        theta = domain.project(theta - eta * grad(theta, t))
    return out


# ---------------------------------------------------------------------------
# Training loops
# ---------------------------------------------------------------------------


def _grid_table(problem, oracle, functions):
    if oracle.kind == "grid_search":
        return _GridTable(list(functions), problem.domain, oracle.resolution)
    return None


def oracle_lagrangian(
    problem: ConstrainedProblem,
    oracle: OracleSpec,
    R: float,
    T: int,
    eta_lambda: float,
    schedule: StepSchedule | None = None,
) -> IterateTrace:
    """Oracle best responses against projected gradient ascent on the multipliers."""
    if not (R > 0 and math.isfinite(R)):
        raise ValueError("oracle_lagrangian needs a finite positive radius R")
    functions = (problem.objective,) + problem.constraints
    table = _grid_table(problem, oracle, functions)
    m = problem.m
    lam = np.zeros(m)
    thetas = np.empty((T, problem.dim))
    lambdas = np.empty((T, m))
    g0s = np.empty(T)
    gs = np.empty((T, m))
    for t in range(T):
        theta = _oracle_step(problem, oracle, functions, np.concatenate(([1.0], lam)), table)
        g0, g = problem.evaluate(theta)
        thetas[t], lambdas[t], g0s[t], gs[t] = theta, lam, g0, g
        lam = project_l1_nonneg(lam + eta_lambda * g, R)
    return IterateTrace(
        thetas, lambdas, "lagrangian_oracle", g0s, gs,
        schedule=schedule, radius=R, rho=oracle.rho(problem.dim),
    )


def stochastic_lagrangian(
    problem: ConstrainedProblem,
    source: StochasticGradientSource,
    R: float,
    T: int,
    eta_theta: float,
    eta_lambda: float,
    schedule: StepSchedule | None = None,
) -> IterateTrace:
    """Simultaneous projected SGD on parameters and projected ascent on multipliers.

    Both players use the same constraint functions, so every constraint
    needs a subgradient.
    """
    m = problem.m
    theta = project(problem.domain, np.zeros(problem.dim))
    lam = np.zeros(m)
    thetas = np.empty((T, problem.dim))
    lambdas = np.empty((T, m))
    for t in range(T):
        thetas[t], lambdas[t] = theta, lam
        batch = source.batch(t, problem.num_examples)
        step = lagrangian_grad_theta(problem, theta, lam, batch)
        delta = problem.constraint_values(theta, batch)
        theta = problem.domain.project(theta - eta_theta * step)
        lam = project_l1_nonneg(lam + eta_lambda * delta, R)
    return IterateTrace(
        thetas, lambdas, "lagrangian_stochastic",
        seed=source.rng_seed, schedule=schedule, radius=R,
    )


def stochastic_proxy_lagrangian(
    problem: ConstrainedProblem,
    source: StochasticGradientSource,
    T: int,
    eta_theta: float,
    eta_lambda: float,
    schedule: StepSchedule | None = None,
) -> IterateTrace:
    """Projected SGD on the proxy-Lagrangian against the swap-regret learner.

    The multiplier player's gradient is computed on the same minibatch as
    the parameter step, from the original (not proxy) constraints.
    """
    if not problem.has_proxies:
        raise ValueError("stochastic_proxy_lagrangian needs proxy constraints")
    m = problem.m
    learner = SwapRegretLearner(m + 1, eta_lambda)
    theta = project(problem.domain, np.zeros(problem.dim))
    thetas = np.empty((T, problem.dim))
    lambdas = np.empty((T, m + 1))
    for t in range(T):
        lam = learner.strategy()
        thetas[t], lambdas[t] = theta, lam
        batch = source.batch(t, problem.num_examples)
        _, step = proxy_lagrangian_theta(problem, theta, lam, batch)
        delta = proxy_lagrangian_lambda_grad(problem, theta, batch)
        theta = problem.domain.project(theta - eta_theta * step)
        learner.update(lam, delta)
    return IterateTrace(
        thetas, lambdas, "proxy_stochastic", seed=source.rng_seed, schedule=schedule,
    )


def oracle_proxy_lagrangian(
    problem: ConstrainedProblem,
    oracle: OracleSpec,
    T: int,
    eta_lambda: float,
    schedule: StepSchedule | None = None,
) -> IterateTrace:
    """Oracle best responses to the proxy-Lagrangian against the swap-regret learner."""
    if not problem.has_proxies:
        raise ValueError("oracle_proxy_lagrangian needs proxy constraints")
    functions = (problem.objective,) + problem.proxies
    table = _grid_table(problem, oracle, functions)
    m = problem.m
    learner = SwapRegretLearner(m + 1, eta_lambda)
    thetas = np.empty((T, problem.dim))
    lambdas = np.empty((T, m + 1))
    g0s = np.empty(T)
    gs = np.empty((T, m))
    for t in range(T):
        lam = learner.strategy()
        theta = _oracle_step(problem, oracle, functions, lam, table)
        g0, g = problem.evaluate(theta)
        thetas[t], lambdas[t], g0s[t], gs[t] = theta, lam, g0, g
        learner.update(lam, np.concatenate(([0.0], g)))
    return IterateTrace(
        thetas, lambdas, "proxy_oracle", g0s, gs,
        schedule=schedule, rho=oracle.rho(problem.dim),
    )

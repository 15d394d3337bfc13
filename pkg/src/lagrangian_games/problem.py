"""Constrained problems, parameter domains and rate-constraint builders.

A :class:`ConstrainedProblem` bundles an objective ``g0``, constraints
``g1..gm`` (feasible when ``g_i <= 0``), optional proxy constraints used only
by the parameter player, and a parameter domain with a Euclidean projection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Sequence

import numpy as np

__all__ = [
    "Box",
    "L2Ball",
    "ParameterDomain",
    "Function",
    "ConstrainedProblem",
    "Dataset",
    "project",
    "project_l1_nonneg",
    "affine",
    "hinge",
    "ramp",
    "hinge_objective",
    "linear_model_losses",
    "make_rate_constraint",
    "robust_reformulation",
]


def _frozen(a: Any, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype)
    arr.setflags(write=False)
    return arr


# ---------------------------------------------------------------------------
# Domains
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Box:
    """Axis-aligned box ``lower <= theta <= upper``."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = _frozen(np.atleast_1d(self.lower))
        upper = _frozen(np.atleast_1d(self.upper))
        if lower.shape != upper.shape or lower.ndim != 1:
            raise ValueError("box bounds must be 1-d arrays of equal length")
        if np.any(lower > upper):
            raise ValueError("box requires lower <= upper component-wise")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @classmethod
    def cube(cls, dim: int, low: float, high: float) -> "Box":
        return cls(np.full(dim, float(low)), np.full(dim, float(high)))

    @property
    def dim(self) -> int:
        return self.lower.size

    def project(self, point: np.ndarray) -> np.ndarray:
        return np.clip(point, self.lower, self.upper)

    def contains(self, point: np.ndarray, tol: float = 0.0) -> bool:
        point = np.asarray(point, dtype=float)
        return bool(np.all(point >= self.lower - tol) and np.all(point <= self.upper + tol))

    def norm_bound(self) -> float:
        """Largest Euclidean norm attained on the box."""
        return float(np.linalg.norm(np.maximum(np.abs(self.lower), np.abs(self.upper))))


@dataclass(frozen=True)
class L2Ball:
    """Euclidean ball ``||theta - center||_2 <= radius``."""

    center: np.ndarray
    radius: float

    def __post_init__(self):
        center = _frozen(np.atleast_1d(self.center))
        if center.ndim != 1:
            raise ValueError("ball center must be a 1-d array")
        if not self.radius >= 0:
            raise ValueError("ball radius must be nonnegative")
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "radius", float(self.radius))

    @property
    def dim(self) -> int:
        return self.center.size

    def project(self, point: np.ndarray) -> np.ndarray:
        offset = point - self.center
        norm = np.linalg.norm(offset)
        # rounding of the offset scales with the center, so points that far
        # outside count as inside; this keeps projection idempotent
        slack = 8 * np.finfo(float).eps * (self.radius + np.linalg.norm(self.center))
        if norm <= self.radius + slack:
            return np.array(point, dtype=float)
        return self.center + offset * (self.radius / norm)

    def contains(self, point: np.ndarray, tol: float = 0.0) -> bool:
        return bool(np.linalg.norm(np.asarray(point, dtype=float) - self.center) <= self.radius + tol)

    def norm_bound(self) -> float:
        return float(np.linalg.norm(self.center) + self.radius)


ParameterDomain = Box | L2Ball


def project(domain: ParameterDomain, point: Sequence[float] | np.ndarray) -> np.ndarray:
    """Euclidean projection of ``point`` onto ``domain``."""
    point = np.asarray(point, dtype=float)
    if point.shape != (domain.dim,):
        raise ValueError(f"point has shape {point.shape}, domain has dimension {domain.dim}")
    return domain.project(point)


def project_l1_nonneg(point: Sequence[float] | np.ndarray, radius: float = math.inf) -> np.ndarray:
    """Project onto ``{lam >= 0 : ||lam||_1 <= radius}`` in the Euclidean norm.

    Negatives are clamped first; if the 1-norm still exceeds ``radius`` the
    point is soft-thresholded onto the scaled simplex, with the threshold
    found by sorting.
    """
    v = np.maximum(np.asarray(point, dtype=float), 0.0)
    if v.ndim != 1:
        raise ValueError("expected a 1-d vector")
    if not radius > 0:
        raise ValueError("radius must be positive")
    if math.isinf(radius) or v.sum() <= radius:
        return v
    u = np.sort(v, kind="stable")[::-1]
    cssv = np.cumsum(u) - radius
    ks = np.arange(1, u.size + 1)
    k = ks[u - cssv / ks > 0][-1]
    tau = cssv[k - 1] / k
    x = np.maximum(v - tau, 0.0)
    # one correction step removes the cancellation error when |v| >> radius
    support = x > 0
    x[support] -= (x.sum() - radius) / support.sum()
    return np.maximum(x, 0.0)


# ---------------------------------------------------------------------------
# Functions and problems
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Function:
    """A scalar function of the parameters with an optional subgradient.

    ``batched`` functions take ``(theta, batch)`` where ``batch`` is an index
    array into the problem's examples (``None`` meaning the full data) and
    return unbiased minibatch estimates. ``vectorized`` functions also accept
    an ``(n, d)`` array of points and return ``n`` values.
    """

    value: Callable[..., Any]
    grad: Callable[..., Any] | None = None
    batched: bool = False
    vectorized: bool = False

    def __call__(self, theta: np.ndarray, batch: np.ndarray | None = None) -> float:
        if self.batched:
            return float(self.value(theta, batch))
        return float(self.value(theta))

    def gradient(self, theta: np.ndarray, batch: np.ndarray | None = None) -> np.ndarray:
        if self.grad is None:
            raise ValueError("function has no subgradient evaluator")
        if self.batched:
            return np.asarray(self.grad(theta, batch), dtype=float)
        return np.asarray(self.grad(theta), dtype=float)

    def many(self, points: np.ndarray) -> np.ndarray:
        """Evaluate at each row of ``points``."""
        points = np.asarray(points, dtype=float)
        if self.vectorized:
            out = self.value(points, None) if self.batched else self.value(points)
            return np.asarray(out, dtype=float).reshape(points.shape[0])
        return np.array([self(p) for p in points])


def as_function(f: Function | Callable[..., Any]) -> Function:
    return f if isinstance(f, Function) else Function(f)


def affine(a: Sequence[float], b: float = 0.0) -> Function:
    """``theta -> <a, theta> + b`` with its gradient."""
    a = _frozen(a)
    return Function(
        value=lambda th: np.asarray(th, dtype=float) @ a + b,
        grad=lambda th: a.copy(),
        vectorized=True,
    )


@dataclass(frozen=True)
class ConstrainedProblem:
    """``min g0(theta)`` over the domain subject to ``g_i(theta) <= 0``.

    ``proxies``, when given, are upper bounds on the constraints with usable
    subgradients; only the parameter player ever sees them.
    ``num_examples`` is set for data-dependent problems whose functions are
    batched, so solvers know the range of minibatch indices.
    """

    objective: Function
    constraints: tuple[Function, ...]
    domain: ParameterDomain
    proxies: tuple[Function, ...] | None = None
    num_examples: int | None = None
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "objective", as_function(self.objective))
        object.__setattr__(self, "constraints", tuple(as_function(g) for g in self.constraints))
        if self.proxies is not None:
            proxies = tuple(as_function(g) for g in self.proxies)
            if len(proxies) != len(self.constraints):
                raise ValueError(
                    f"{len(proxies)} proxies given for {len(self.constraints)} constraints"
                )
            object.__setattr__(self, "proxies", proxies)

    @property
    def m(self) -> int:
        return len(self.constraints)

    @property
    def dim(self) -> int:
        return self.domain.dim

    @property
    def has_proxies(self) -> bool:
        return self.proxies is not None

    @property
    def vectorized(self) -> bool:
        return self.objective.vectorized and all(g.vectorized for g in self.constraints)

    def constraint_values(self, theta: np.ndarray, batch: np.ndarray | None = None) -> np.ndarray:
        return np.array([g(theta, batch) for g in self.constraints], dtype=float)

    def evaluate(self, theta: np.ndarray) -> tuple[float, np.ndarray]:
        """Exact objective and original-constraint values."""
        return self.objective(theta), self.constraint_values(theta)

    def relaxed(self) -> "ConstrainedProblem":
        """Problem whose constraints are the proxies (used by both players)."""
        if self.proxies is None:
            return self
        return ConstrainedProblem(
            self.objective, self.proxies, self.domain, None, self.num_examples, self.name
        )


# ---------------------------------------------------------------------------
# Data-dependent problems
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Dataset:
    """Features, +/-1 labels and named boolean group-membership columns."""

    features: np.ndarray
    labels: np.ndarray
    groups: Mapping[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        X = _frozen(self.features)
        y = _frozen(self.labels)
        if X.ndim != 2:
            raise ValueError("features must be a 2-d matrix")
        if y.shape != (X.shape[0],):
            raise ValueError("labels must have one entry per row")
        if not np.all(np.isin(y, (-1.0, 1.0))):
            raise ValueError("labels must be in {-1, +1}")
        groups = {}
        for name, col in self.groups.items():
            col = _frozen(col, dtype=bool)
            if col.shape != y.shape:
                raise ValueError(f"group column {name!r} has the wrong length")
            groups[name] = col
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "groups", groups)

    @property
    def n_rows(self) -> int:
        return self.labels.size

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def subset(self, rows: np.ndarray) -> "Dataset":
        return Dataset(
            self.features[rows],
            self.labels[rows],
            {k: v[rows] for k, v in self.groups.items()},
        )


def hinge(z):
    """``max(0, 1 + z)``, an upper bound on ``1[z > 0]``."""
    return np.maximum(0.0, 1.0 + z)


def ramp(z):
    """``max(0, 1 - max(0, 1 - z))``, a lower bound on ``1[z > 0]``."""
    return np.maximum(0.0, 1.0 - np.maximum(0.0, 1.0 - z))


def _batch_rows(n: int, batch: np.ndarray | None):
    if batch is None:
        return slice(None), 1.0
    batch = np.asarray(batch)
    return batch, n / batch.size


def linear_model_losses(dataset: Dataset, theta: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean hinge loss of the linear scorer ``<theta, x>`` and its margins."""
    if dataset.n_rows == 0:
        raise ValueError("empty dataset")
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (dataset.n_features,):
        raise ValueError("theta dimension does not match the features")
    margins = dataset.features @ theta
    loss = np.maximum(0.0, 1.0 - dataset.labels * margins)
    return float(loss.mean()), margins


def hinge_objective(dataset: Dataset) -> Function:
    """Average hinge loss as a batched, vectorized :class:`Function`."""
    X, y, n = dataset.features, dataset.labels, dataset.n_rows
    if n == 0:
        raise ValueError("empty dataset")

    def value(theta, batch=None):
        rows, _ = _batch_rows(n, batch)
        z = X[rows] @ np.asarray(theta, dtype=float).T
        yb = y[rows] if z.ndim == 1 else y[rows][:, None]
        return np.maximum(0.0, 1.0 - yb * z).mean(axis=0)

    def grad(theta, batch=None):
        rows, _ = _batch_rows(n, batch)
        Xb, yb = X[rows], y[rows]
        active = yb * (Xb @ theta) < 1.0
        return -(yb * active) @ Xb / yb.size

    return Function(value, grad, batched=True, vectorized=True)


class _RateTerms:
    """``sum_r plus_r 1[z_r > 0] - sum_r minus_r 1[z_r > 0]`` over the rows."""

    def __init__(self, X: np.ndarray, plus: np.ndarray, minus: np.ndarray):
        self.X = X
        self.plus = plus
        self.minus = minus
        self.n = X.shape[0]

    def _parts(self, theta, batch):
        rows, scale = _batch_rows(self.n, batch)
        z = self.X[rows] @ np.asarray(theta, dtype=float).T
        plus, minus = self.plus[rows], self.minus[rows]
        if z.ndim == 2:
            plus, minus = plus[:, None], minus[:, None]
        return rows, scale, z, plus, minus

    def original(self, theta, batch=None):
        _, scale, z, plus, minus = self._parts(theta, batch)
        positive = z > 0
        return scale * ((plus * positive).sum(axis=0) - (minus * positive).sum(axis=0))

    def proxy(self, theta, batch=None):
        _, scale, z, plus, minus = self._parts(theta, batch)
        return scale * ((plus * hinge(z)).sum(axis=0) - (minus * ramp(z)).sum(axis=0))

    def proxy_grad(self, theta, batch=None):
        rows, scale, z, plus, minus = self._parts(theta, batch)
        # one-sided derivatives at the kinks, so a zero margin still feels the ramp
        weights = plus * (z > -1.0) - minus * ((z >= 0.0) & (z < 1.0))
        return scale * (weights @ self.X[rows])


def make_rate_constraint(
    dataset: Dataset, group: str, factor: float, kind: str = "coverage_80_rule"
) -> tuple[Function, Function]:
    """Build a rate constraint and its hinge proxy for a linear scorer.

    The constraint is ``factor * rate_all(theta) - rate_group(theta) <= 0``.

    ``coverage_80_rule``
        Both rates count positive predictions and are normalized by the full
        dataset size, so the group must receive at least ``factor`` times the
        overall share of positive predictions.
    ``equal_opportunity``
        Rates are true-positive rates: positive predictions among positively
        labeled rows, overall and within the group respectively.

    The proxy replaces indicators in the added term by :func:`hinge` and in
    the subtracted term by :func:`ramp`, so it upper-bounds the constraint
    everywhere. Denominators are fixed slice sizes.

    Returns
    -------
    (constraint, proxy) : tuple of Function
    """
    if group not in dataset.groups:
        raise ValueError(f"unknown group {group!r}")
    if not 0 < factor <= 1:
        raise ValueError("factor must lie in (0, 1]")
    n = dataset.n_rows
    member = dataset.groups[group]
    if kind == "coverage_80_rule":
        if not member.any():
            raise ValueError("degenerate rate denominator: empty group")
        plus = np.full(n, factor / n)
        minus = member / n
    elif kind == "equal_opportunity":
        positive = dataset.labels > 0
        both = positive & member
        if not positive.any() or not both.any():
            raise ValueError("degenerate rate denominator: no positively-labeled rows")
        plus = factor * positive / positive.sum()
        minus = both / both.sum()
    else:
        raise ValueError(f"unknown rate-constraint kind {kind!r}")
    terms = _RateTerms(dataset.features, plus.astype(float), minus.astype(float))
    g = Function(terms.original, None, batched=True, vectorized=True)
    g_proxy = Function(terms.proxy, terms.proxy_grad, batched=True, vectorized=True)
    return g, g_proxy


def robust_reformulation(
    objectives: Sequence[Function | Callable[..., Any]],
    domain: Box,
    xi_bounds: tuple[float, float] | None = None,
) -> ConstrainedProblem:
    """Turn ``min_theta max_i g_i(theta)`` into a constrained problem.

    The new parameter is ``(theta, xi)``; the objective is ``xi`` and the
    constraints are ``g_i(theta) - xi <= 0``. ``xi_bounds`` must bracket the
    range of the objectives over the domain.
    """
    if len(objectives) < 1:
        raise ValueError("need at least one objective")
    if xi_bounds is None:
        raise ValueError("xi_bounds is required: give bounds on the objectives' range")
    if not isinstance(domain, Box):
        raise ValueError("robust_reformulation supports box domains only")
    lo, hi = map(float, xi_bounds)
    if lo > hi:
        raise ValueError("xi_bounds must satisfy lower <= upper")
    d = domain.dim
    fs = [as_function(f) for f in objectives]

    def slack_constraint(f: Function) -> Function:
        def value(z):
            z = np.asarray(z, dtype=float)
            if z.ndim == 2:
                return f.many(z[:, :d]) - z[:, d]
            return f(z[:d]) - z[d]

        grad = None
        if f.grad is not None:
            grad = lambda z: np.append(f.gradient(np.asarray(z)[:d]), -1.0)  # noqa: E731
        return Function(value, grad, vectorized=True)

    e_xi = np.zeros(d + 1)
    e_xi[d] = 1.0
    objective = Function(
        value=lambda z: np.asarray(z, dtype=float)[..., d],
        grad=lambda z: e_xi.copy(),
        vectorized=True,
    )
    new_domain = Box(np.append(domain.lower, lo), np.append(domain.upper, hi))
    return ConstrainedProblem(
        objective, tuple(slack_constraint(f) for f in fs), new_domain, name="robust"
    )

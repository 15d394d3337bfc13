"""Compressing a trace to a sparse mixture with a small linear program.

Given candidate evaluations, the shrinking LP

    minimize <p, g0>  over the simplex of size T
    subject to <p, g_i> <= eps,  i = 1..m

has a vertex optimum with at most ``m + 1`` nonzero weights. The solver here
is a dense two-phase primal simplex with Bland's rule, so it always returns
a vertex.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .evaluation import MixtureSolution
from .problem import ConstrainedProblem
from .solvers import IterateTrace

__all__ = [
    "PIVOT_TOL",
    "ZERO_WEIGHT",
    "EvaluationMatrix",
    "LpSolution",
    "ShrinkInfeasible",
    "SimplexFailure",
    "evaluate_candidates",
    "solve_shrink_lp",
    "bisect_epsilon",
    "subsample_indices",
    "shrink",
]

PIVOT_TOL = 1e-9
ZERO_WEIGHT = 1e-12


class SimplexFailure(RuntimeError):
    """The simplex iteration did not terminate cleanly."""


class ShrinkInfeasible(ValueError):
    """No mixture of the candidates meets the requested tolerance.

    ``epsilon_min`` holds the smallest tolerance that is attainable.
    """

    def __init__(self, epsilon: float, epsilon_min: float):
        super().__init__(
            f"no mixture satisfies the constraints at eps={epsilon:g}; "
            f"the smallest attainable eps is {epsilon_min:g}"
        )
        self.epsilon = epsilon
        self.epsilon_min = epsilon_min


@dataclass(frozen=True)
class EvaluationMatrix:
    """Objective and constraint values of ``T`` candidates.

    ``constraint_values`` has shape ``(m, T)``.
    """

    objective_values: np.ndarray
    constraint_values: np.ndarray
    candidate_ids: np.ndarray | None = None

    def __post_init__(self):
        g0 = np.asarray(self.objective_values, dtype=float).ravel()
        g = np.asarray(self.constraint_values, dtype=float)
        g = g.reshape(-1, len(g0)) if g.size else np.zeros((0, len(g0)))
        if len(g0) == 0:
            raise ValueError("evaluation matrix needs at least one candidate")
        if not (np.all(np.isfinite(g0)) and np.all(np.isfinite(g))):
            raise ValueError("evaluations must be finite")
        ids = np.arange(len(g0)) if self.candidate_ids is None else np.asarray(self.candidate_ids)
        if len(ids) != len(g0):
            raise ValueError("candidate_ids must have one entry per candidate")
        object.__setattr__(self, "objective_values", g0)
        object.__setattr__(self, "constraint_values", g)
        object.__setattr__(self, "candidate_ids", ids)

    @property
    def T(self) -> int:
        return len(self.objective_values)

    @property
    def m(self) -> int:
        return self.constraint_values.shape[0]


@dataclass(frozen=True)
class LpSolution:
    """Result of the shrinking LP.

    ``active`` counts the constraints holding with equality (within the
    pivot tolerance) at the returned vertex.
    """

    status: str
    weights: np.ndarray | None = None
    objective: float | None = None
    support: np.ndarray | None = None
    active: int = 0

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


def evaluate_candidates(problem: ConstrainedProblem, thetas, candidate_ids=None) -> EvaluationMatrix:
    """Exact objective and original-constraint values for each candidate."""
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    if len(thetas) == 0:
        raise ValueError("no candidates to evaluate")
    g0 = np.empty(len(thetas))
    g = np.empty((problem.m, len(thetas)))
    for k, theta in enumerate(thetas):
        try:
            g0[k], g[:, k] = problem.evaluate(theta)
        except Exception as exc:
            raise ValueError(f"evaluating candidate {k} failed: {exc}") from exc
    return EvaluationMatrix(g0, g, candidate_ids)


# ---------------------------------------------------------------------------
# Dense two-phase simplex
# ---------------------------------------------------------------------------


def _pivot(tab: np.ndarray, basis: np.ndarray, row: int, col: int) -> None:
    tab[row] /= tab[row, col]
    column = tab[:, col].copy()
    column[row] = 0.0
    tab -= np.outer(column, tab[row])
    basis[row] = col


def _run_simplex(tab: np.ndarray, basis: np.ndarray, allowed: int, max_iter: int) -> None:
    """Minimize the last-row objective of a canonical tableau in place.

    The last row holds reduced costs (and minus the objective value in the
    last column). Only the first ``allowed`` columns may enter the basis.
    """
    rows = tab.shape[0] - 1
    for _ in range(max_iter):
        reduced = tab[-1, :allowed]
        entering = np.flatnonzero(reduced < -PIVOT_TOL)
        if entering.size == 0:
            return
        col = int(entering[0])
        column = tab[:rows, col]
        candidates = np.flatnonzero(column > PIVOT_TOL)
        if candidates.size == 0:
            raise SimplexFailure("unbounded direction in a bounded LP")
        ratios = tab[candidates, -1] / column[candidates]
        best = ratios.min()
        ties = candidates[ratios <= best + PIVOT_TOL * max(1.0, abs(best))]
        row = int(ties[np.argmin(basis[ties])])
        _pivot(tab, basis, row, col)
    raise SimplexFailure(f"simplex did not converge in {max_iter} pivots")


def _phase_one(evals: EvaluationMatrix, epsilon: float):
    """Build the standard form and find a feasible basis.

    Columns are the ``T`` weights, ``m`` slacks and one artificial per row.
    Returns ``(tableau, basis, n_struct, infeasibility, max_iter)``; the
    artificial columns are still present in the tableau.
    """
    T, m = evals.T, evals.m
    rows = m + 1
    n_struct = T + m
    A = np.zeros((rows, n_struct))
    A[:m, :T] = evals.constraint_values
    A[:m, T:] = np.eye(m)
    A[m, :T] = 1.0
    b = np.append(np.full(m, float(epsilon)), 1.0)
    flip = b < 0
    A[flip] *= -1
    b[flip] *= -1

    tab = np.zeros((rows + 1, n_struct + rows + 1))
    tab[:rows, :n_struct] = A
    tab[:rows, n_struct:n_struct + rows] = np.eye(rows)
    tab[:rows, -1] = b
    # phase-one cost: sum of artificials, expressed in reduced form
    tab[-1, :n_struct] = -A.sum(axis=0)
    tab[-1, -1] = -b.sum()
    basis = np.arange(n_struct, n_struct + rows)
    max_iter = 50 * (n_struct + rows)
    _run_simplex(tab, basis, n_struct, max_iter)
    infeasibility = -tab[-1, -1]
    return tab, basis, n_struct, infeasibility, max_iter


def _drive_out_artificials(tab, basis, n_struct):
    """Pivot zero-level artificials out of the basis; drop redundant rows."""
    keep = []
    rows = tab.shape[0] - 1
    for r in range(rows):
        if basis[r] < n_struct:
            keep.append(r)
            continue
        # phase one accepted this level as zero; pivoting a residue would amplify it
        tab[r, -1] = 0.0
        entries = np.abs(tab[r, :n_struct])
        if entries.max(initial=0.0) > PIVOT_TOL:
            _pivot(tab, basis, r, int(np.argmax(entries)))
            keep.append(r)
    if len(keep) < rows:
        tab = np.vstack([tab[keep], tab[-1:]])
        basis = basis[keep]
    return tab, basis


def _feasible(evals: EvaluationMatrix, epsilon: float) -> bool:
    if evals.m == 0:
        return True
    *_, infeasibility, _ = _phase_one(evals, epsilon)
    return infeasibility <= PIVOT_TOL * max(1.0, abs(epsilon))


def solve_shrink_lp(evals: EvaluationMatrix, epsilon: float) -> LpSolution:
    """Vertex optimum of the shrinking LP at tolerance ``epsilon``."""
    if not math.isfinite(epsilon):
        raise ValueError("epsilon must be finite")
    T, m = evals.T, evals.m
    tab, basis, n_struct, infeasibility, max_iter = _phase_one(evals, epsilon)
    if infeasibility > PIVOT_TOL * max(1.0, abs(epsilon)):
        return LpSolution("infeasible")
    tab, basis = _drive_out_artificials(tab, basis, n_struct)
    tab = np.delete(tab, np.s_[n_struct:-1], axis=1)

    cost = np.zeros(n_struct)
    cost[:T] = evals.objective_values
    tab[-1, :-1] = cost
    tab[-1, -1] = 0.0
    for r, j in enumerate(basis):
        tab[-1] -= cost[j] * tab[r]
    _run_simplex(tab, basis, n_struct, max_iter)

    x = np.zeros(n_struct)
    x[basis] = tab[:-1, -1]
    weights = np.where(x[:T] > ZERO_WEIGHT, x[:T], 0.0)
    total = weights.sum()
    if not abs(total - 1.0) <= 1e-8:
        raise SimplexFailure(f"vertex weights sum to {total!r}")
    weights /= total
    lhs = evals.constraint_values @ weights
    if m and lhs.max() > epsilon + 1e-8 * max(1.0, abs(epsilon)):
        raise SimplexFailure("returned vertex violates the constraints")
    active = int(np.sum(np.abs(lhs - epsilon) <= 1e-9 * max(1.0, abs(epsilon))))
    return LpSolution(
        "optimal",
        weights,
        float(weights @ evals.objective_values),
        np.flatnonzero(weights > ZERO_WEIGHT),
        active,
    )


def bisect_epsilon(evals: EvaluationMatrix, tolerance: float = 1e-9) -> tuple[float, LpSolution]:
    """Smallest ``eps >= 0`` (to within ``tolerance``) with a feasible LP.

    The bracket starts at ``[0, max(0, max g)]``; the upper end is always
    feasible since every mixture meets it. The returned solution is solved
    at the upper end of the final bracket.
    """
    if not tolerance > 0:
        raise ValueError("tolerance must be positive")
    if _feasible(evals, 0.0):
        return 0.0, solve_shrink_lp(evals, 0.0)
    lo = 0.0
    hi = max(0.0, float(evals.constraint_values.max()))
    while hi - lo > tolerance:
        mid = 0.5 * (lo + hi)
        if _feasible(evals, mid):
            hi = mid
        else:
            lo = mid
    solution = solve_shrink_lp(evals, hi)
    if not solution.optimal:
        raise SimplexFailure("upper bisection bracket is infeasible")
    return hi, solution


def subsample_indices(T: int, cap: int) -> np.ndarray:
    """Evenly strided indices keeping at most ``cap`` of ``T`` candidates."""
    if cap < 1:
        raise ValueError("cap must be positive")
    stride = max(1, math.ceil(T / cap))
    return np.arange(0, T, stride)


def shrink(
    problem: ConstrainedProblem,
    trace: IterateTrace,
    epsilon: float | str = "auto",
    max_candidates: int = 1000,
    tolerance: float = 1e-9,
) -> tuple[MixtureSolution, LpSolution, float]:
    """Replace a trace by an LP-optimal mixture with at most ``m + 1`` members.

    ``epsilon="auto"`` bisects for the smallest attainable tolerance.
    Returns the mixture, the LP solution and the tolerance used. Raises
    :class:`ShrinkInfeasible` when a numeric ``epsilon`` cannot be met.
    """
    if trace.T < 1:
        raise ValueError("empty trace")
    ids = subsample_indices(trace.T, max_candidates)
    if trace.objective_values is not None and trace.constraint_values is not None:
        evals = EvaluationMatrix(
            trace.objective_values[ids], trace.constraint_values[ids].T, ids
        )
    else:
        evals = evaluate_candidates(problem, trace.thetas[ids], ids)

    if epsilon == "auto":
        eps, solution = bisect_epsilon(evals, tolerance)
    else:
        eps = float(epsilon)
        solution = solve_shrink_lp(evals, eps)
        if not solution.optimal:
            raise ShrinkInfeasible(eps, bisect_epsilon(evals, tolerance)[0])

    # the LP optimum can never lose to the uniform mixture over the same candidates
    uniform = np.full(evals.T, 1.0 / evals.T)
    if evals.m == 0 or (evals.constraint_values @ uniform).max() <= eps:
        if solution.objective > uniform @ evals.objective_values + 1e-9:
            raise SimplexFailure("shrunk mixture is worse than the uniform mixture")

    support = solution.support
    mixture = MixtureSolution(
        trace.thetas[ids[support]], solution.weights[support], ids[support]
    )
    return mixture, solution, eps

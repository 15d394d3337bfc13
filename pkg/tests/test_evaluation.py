import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lagrangian_games.evaluation import (
    MixtureSolution,
    best_model_heuristic,
    check_bounds,
    expected_metrics,
    external_regret_lagrangian,
    importance_weighted_mixture,
    lagrangian_feasibility_bound,
    lagrangian_multiplier_bound,
    proxy_feasibility_bound,
    proxy_first_coordinate_bound,
    proxy_optimality_bound,
    swap_regret,
    uniform_mixture,
)
from lagrangian_games.instances import figure1
from lagrangian_games.problem import Box, ConstrainedProblem, affine
from lagrangian_games.solvers import IterateTrace, OracleSpec, grid_points
from oracles import swap_regret_by_enumeration


class TestMixtures:
    def test_validation(self):
        with pytest.raises(ValueError):
            MixtureSolution(np.zeros((2, 1)), [0.5, 0.6])
        with pytest.raises(ValueError):
            MixtureSolution(np.zeros((2, 1)), [1.5, -0.5])
        with pytest.raises(ValueError):
            MixtureSolution(np.zeros((0, 1)), [])

    def test_sample_respects_weights(self):
        mix = MixtureSolution([[0.0], [1.0]], [0.25, 0.75])
        rng = np.random.default_rng(0)
        draws = np.array([mix.sample(rng)[0] for _ in range(4000)])
        assert abs(draws.mean() - 0.75) < 0.03

    def test_uniform(self):
        trace = IterateTrace(np.arange(8.0).reshape(4, 2), np.zeros((4, 1)), "lagrangian_oracle")
        mix = uniform_mixture(trace)
        np.testing.assert_allclose(mix.weights, 0.25)
        np.testing.assert_array_equal(mix.indices, np.arange(4))

    def test_importance_weights_drop_zero_rounds(self):
        lambdas = np.array([[0.5, 0.5], [0.0, 1.0], [0.25, 0.75]])
        trace = IterateTrace(np.array([[1.0], [2.0], [3.0]]), lambdas, "proxy_stochastic")
        mix = importance_weighted_mixture(trace)
        np.testing.assert_array_equal(mix.indices, [0, 2])
        np.testing.assert_allclose(mix.weights, [2 / 3, 1 / 3])

    def test_importance_weights_degenerate(self):
        trace = IterateTrace(np.zeros((2, 1)), np.array([[0.0, 1.0], [0.0, 1.0]]), "proxy_stochastic")
        with pytest.raises(ValueError, match="degenerate"):
            importance_weighted_mixture(trace)
        with pytest.raises(ValueError):
            importance_weighted_mixture(IterateTrace(np.zeros((1, 1)), np.zeros((1, 1)), "lagrangian_oracle"))

    def test_expected_metrics_on_figure1(self):
        mix = MixtureSolution([[-1.0, -1.0], [1.0, 1.0]], [0.5, 0.5])
        metrics = expected_metrics(figure1().problem, mix)
        assert metrics.objective == pytest.approx(-2.0)
        np.testing.assert_allclose(metrics.constraints, [0.2, 0.2, -1.2])
        assert metrics.max_violation == pytest.approx(0.2)

    def test_expected_metrics_clips_at_zero(self):
        mix = MixtureSolution([[0.3, 0.3]], [1.0])
        assert expected_metrics(figure1().problem, mix).max_violation == 0.0


class TestBoundFormulas:
    def test_lagrangian(self):
        assert lagrangian_feasibility_bound(1.0, 10.0, 6.0) == 0.25
        assert lagrangian_feasibility_bound(1.0, 10.0, 10.0) is None
        assert lagrangian_feasibility_bound(1.0, math.inf, 1.0) is None
        assert lagrangian_multiplier_bound(1.0, 0.5, 2.0) == 6.0

    def test_proxy(self):
        assert proxy_feasibility_bound(0.1, 0.5) == pytest.approx(0.2)
        assert proxy_feasibility_bound(0.1, 0.0) is None
        assert proxy_optimality_bound(0.1, 0.3, 0.8) == pytest.approx(0.5)
        assert proxy_first_coordinate_bound(1.0, 0.1, 0.1, 1.0) == pytest.approx(0.4)


class TestCheckBounds:
    def test_lagrangian_report(self):
        thetas = np.array([[-1.0, -1.0], [1.0, 1.0]])
        lambdas = np.array([[1.0, 1.0, 0.0], [1.0, 1.0, 0.0]])
        trace = IterateTrace(thetas, lambdas, "lagrangian_oracle", radius=10.0)
        report = check_bounds(figure1().problem, trace, 1.0, margin=(0.8 / 3, 2.0), reference_objective=-1.04)
        assert report.lambda_norm == 2.0
        assert report.feasibility_bound == pytest.approx(1.0 / 8.0)
        assert report.measured_max_violation == pytest.approx(0.2)
        assert report.satisfied == {"multiplier": True, "feasibility": False, "optimality": True}
        assert report.measured_gap == pytest.approx(-0.96)
        d = report.to_dict()
        assert list(d)[:3] == ["formulation", "epsilon", "epsilon_theta"]

    def test_proxy_report(self):
        thetas = np.array([[0.3, 0.3], [-1.0, -1.0]])
        lambdas = np.array([[0.9, 0.1, 0.0, 0.0], [0.1, 0.3, 0.3, 0.3]])
        trace = IterateTrace(thetas, lambdas, "proxy_oracle")
        report = check_bounds(figure1().problem, trace, (0.05, 0.05), margin=(0.8 / 3, 2.0))
        assert report.lambda1 == pytest.approx(0.5)
        assert report.feasibility_bound == pytest.approx(0.1)
        # importance weights 0.9 and 0.1 put 0.1 * 1.2 - 0.9 * 0.1 = 0.03 on the lower bounds
        assert report.measured_max_violation == pytest.approx(0.03)
        assert report.satisfied["feasibility"] is True
        assert report.satisfied["multiplier"] is True
        assert "optimality" not in report.satisfied


class TestSwapRegret:
    def test_constant_play_against_constant_payoff(self):
        lambdas = np.tile([1.0, 0.0], (4, 1))
        payoffs = np.tile([0.0, 1.0], (4, 1))
        assert swap_regret(lambdas, payoffs) == pytest.approx(1.0)

    def test_zero_for_best_response_play(self):
        payoffs = np.array([[1.0, 0.0], [0.0, 1.0]])
        assert swap_regret(np.eye(2), payoffs) == 0.0

    def test_swap_exceeds_external(self):
        # each action was bad on its own rounds but no fixed action beats the average
        lambdas = np.array([[1.0, 0.0], [0.0, 1.0]])
        payoffs = np.array([[0.0, 1.0], [1.0, 0.0]])
        assert swap_regret(lambdas, payoffs) == pytest.approx(1.0)
        realized = np.sum(lambdas * payoffs)
        external = (payoffs.sum(axis=0).max() - realized) / 2
        assert external == pytest.approx(0.5)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            swap_regret(np.ones((3, 2)), np.ones((3, 3)))

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(1, 8), st.integers(2, 4))
    def test_matches_enumeration(self, seed, T, n):
        rng = np.random.default_rng(seed)
        lambdas = rng.dirichlet(np.ones(n), size=T)
        payoffs = rng.uniform(-1, 1, size=(T, n))
        assert swap_regret(lambdas, payoffs) == pytest.approx(swap_regret_by_enumeration(lambdas, payoffs), abs=1e-12)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_nonnegative(self, seed):
        rng = np.random.default_rng(seed)
        lambdas = rng.dirichlet(np.ones(3), size=20)
        assert swap_regret(lambdas, rng.normal(size=(20, 3))) >= -1e-12


class TestExternalRegret:
    def test_linear_problem_against_brute_force(self):
        problem = ConstrainedProblem(affine([1.0, 0.5]), [affine([-1.0, 0.0], 0.2)], Box.cube(2, -1, 1))
        rng = np.random.default_rng(0)
        thetas = rng.uniform(-1, 1, (30, 2))
        lambdas = rng.uniform(0, 2, (30, 1))
        trace = IterateTrace(thetas, lambdas, "lagrangian_stochastic", radius=3.0)
        out = external_regret_lagrangian(problem, trace, 3.0, OracleSpec(resolution=0.5))

        g0 = thetas @ [1.0, 0.5]
        g = 0.2 - thetas[:, 0]
        realized = np.mean(g0 + lambdas[:, 0] * g)
        best_lam = np.mean(g0) + (3.0 * np.mean(g) if np.mean(g) > 0 else 0.0)
        lb = lambdas.mean()
        pts = grid_points(problem.domain, 0.5)
        best_theta = np.min(pts @ [1.0 - lb, 0.5] + 0.2 * lb)
        assert out.lambda_regret == pytest.approx(best_lam - realized)
        assert out.theta_regret == pytest.approx(realized - best_theta)
        assert out.total == pytest.approx(out.lambda_regret + out.theta_regret)

    def test_multistart_oracle_on_vectorized_problem(self):
        trace = IterateTrace(np.array([[0.5, 0.5], [0.3, 0.4]]), np.ones((2, 3)), "lagrangian_oracle")
        spec = OracleSpec(kind="multistart_descent", restarts=2, inner_steps=50)
        out = external_regret_lagrangian(figure1().problem, trace, 5.0, spec)
        assert figure1().problem.domain.contains(out.theta_star)

    def test_needs_finite_radius(self):
        trace = IterateTrace(np.zeros((1, 2)), np.zeros((1, 3)), "lagrangian_oracle")
        with pytest.raises(ValueError):
            external_regret_lagrangian(figure1().problem, trace, math.inf, OracleSpec())


class TestBestModelHeuristic:
    def test_feasible_model_beats_lower_objective(self):
        reports = [(0.10, [0.05]), (0.20, [0.0]), (0.30, [0.0])]
        assert best_model_heuristic(reports) == 1

    def test_ties_broken_by_objective_then_index(self):
        assert best_model_heuristic([(0.2, [0.1]), (0.1, [0.2])]) == 1
        assert best_model_heuristic([(0.2, [0.0]), (0.2, [0.0])]) == 0

    def test_worst_rank_counts(self):
        reports = [(0.1, [0.3, 0.0]), (0.2, [0.1, 0.1]), (0.3, [0.0, 0.2])]
        assert best_model_heuristic(reports) == 1

    def test_empty(self):
        with pytest.raises(ValueError):
            best_model_heuristic([])

    @settings(max_examples=50)
    @given(st.lists(st.tuples(st.floats(0, 1), st.floats(-1, 1)), min_size=1, max_size=10))
    def test_unique_dominator_wins(self, rows):
        reports = [(o, [v]) for o, v in rows]
        best = (min(o for o, _ in rows) - 1.0, [-1.0])
        assert best_model_heuristic(reports + [best]) == len(reports)

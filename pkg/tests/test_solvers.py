import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lagrangian_games.games import ProblemBounds, step_sizes
from lagrangian_games.instances import figure1, synthetic_fairness
from lagrangian_games.problem import Box, ConstrainedProblem, Function, L2Ball, affine
from lagrangian_games.solvers import (
    IterateTrace,
    OracleSpec,
    StochasticGradientSource,
    grid_points,
    oracle_lagrangian,
    oracle_minimize,
    oracle_proxy_lagrangian,
    projected_gradient_descent,
    stochastic_lagrangian,
    stochastic_proxy_lagrangian,
)


def quadratic(center):
    center = np.asarray(center, dtype=float)
    return Function(lambda th: float(np.sum((np.asarray(th) - center) ** 2)), lambda th: 2 * (np.asarray(th) - center))


class TestOracleSpec:
    def test_rejects_bad_fields(self):
        with pytest.raises(ValueError):
            OracleSpec(kind="annealing")
        with pytest.raises(ValueError):
            OracleSpec(resolution=0.0)
        with pytest.raises(ValueError):
            OracleSpec(rho_estimate=-1.0)
        with pytest.raises(ValueError):
            OracleSpec(restarts=0)

    def test_grid_error_from_lipschitz(self):
        assert OracleSpec(resolution=0.01, lipschitz=3.0).rho(4) == pytest.approx(0.06)
        assert OracleSpec(resolution=0.01, rho_estimate=0.2).rho(4) == 0.2
        assert OracleSpec(kind="multistart_descent", lipschitz=3.0, rho_estimate=0.1).rho(2) == 0.1


class TestGridPoints:
    def test_lexicographic_order(self):
        pts = grid_points(Box.cube(2, 0.0, 1.0), 0.5)
        expected = [[0, 0], [0, 0.5], [0, 1], [0.5, 0], [0.5, 0.5], [0.5, 1], [1, 0], [1, 0.5], [1, 1]]
        np.testing.assert_allclose(pts, expected)

    def test_non_dividing_resolution_keeps_upper_end(self):
        pts = grid_points(Box([0.0], [1.0]), 0.3)
        np.testing.assert_allclose(pts[:, 0], [0.0, 0.3, 0.6, 0.9, 1.0])

    def test_resolution_0005_on_figure1_box(self):
        assert grid_points(Box.cube(2, -1, 1), 0.005).shape == (401 * 401, 2)

    def test_requires_box(self):
        with pytest.raises(ValueError, match="box"):
            grid_points(L2Ball(np.zeros(2), 1.0), 0.1)

    def test_refuses_huge_grids(self):
        with pytest.raises(ValueError, match="coarser"):
            grid_points(Box.cube(4, 0, 1), 0.01)


class TestOracleMinimize:
    def test_grid_finds_lattice_minimizer(self):
        theta = oracle_minimize(OracleSpec(resolution=0.1), quadratic([0.31, -0.72]), Box.cube(2, -1, 1))
        np.testing.assert_allclose(theta, [0.3, -0.7])

    def test_grid_ties_go_to_first_point(self):
        theta = oracle_minimize(OracleSpec(resolution=0.5), lambda th: 0.0, Box.cube(2, -1, 1))
        np.testing.assert_array_equal(theta, [-1.0, -1.0])

    def test_grid_error_within_reported_rho(self):
        f = affine([1.3, -0.4], 0.0)
        spec = OracleSpec(resolution=0.07, lipschitz=math.hypot(1.3, 0.4))
        theta = oracle_minimize(spec, f, Box.cube(2, -1, 1))
        assert f(theta) <= -1.7 + spec.rho(2)

    def test_multistart_on_convex_quadratic(self):
        spec = OracleSpec(kind="multistart_descent", restarts=3, inner_steps=300, inner_eta=0.2)
        theta = oracle_minimize(spec, quadratic([2.0, 0.25]), Box.cube(2, -1, 1))
        np.testing.assert_allclose(theta, [1.0, 0.25], atol=1e-8)

    def test_multistart_with_separate_gradient(self):
        spec = OracleSpec(kind="multistart_descent", restarts=2, inner_eta=0.2)
        theta = oracle_minimize(spec, lambda th: float(th @ th), L2Ball(np.array([2.0, 0.0]), 1.0), grad=lambda th: 2 * th)
        np.testing.assert_allclose(theta, [1.0, 0.0], atol=1e-8)


class TestStochasticGradientSource:
    def test_full_batch(self):
        assert StochasticGradientSource(100).batch(0, 50) is None
        assert StochasticGradientSource(100).batch(0, None) is None

    def test_keyed_on_seed_and_iteration(self):
        a = StochasticGradientSource(10, rng_seed=3)
        np.testing.assert_array_equal(a.batch(7, 100), StochasticGradientSource(10, rng_seed=3).batch(7, 100))
        assert not np.array_equal(a.batch(7, 100), a.batch(8, 100))
        assert not np.array_equal(a.batch(7, 100), StochasticGradientSource(10, rng_seed=4).batch(7, 100))

    def test_indices_distinct_and_in_range(self):
        idx = StochasticGradientSource(30, rng_seed=1).batch(5, 40)
        assert len(np.unique(idx)) == 30
        assert idx.min() >= 0 and idx.max() < 40

    def test_rejects_empty_batches(self):
        with pytest.raises(ValueError):
            StochasticGradientSource(0)


class TestProjectedGradientDescent:
    def test_starts_at_projected_origin(self):
        out = projected_gradient_descent(lambda th, t: np.zeros(2), Box([0.5, -1.0], [1.0, 1.0]), 3, 0.1)
        np.testing.assert_array_equal(out, [[0.5, 0.0]] * 3)

    def test_iterates_stay_in_domain(self):
        rng = np.random.default_rng(0)
        g = rng.normal(size=(50, 3)) * 10
        out = projected_gradient_descent(lambda th, t: g[t], Box.cube(3, -1, 1), 50, 0.5)
        assert np.all(np.abs(out) <= 1.0)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**31), st.sampled_from([10, 100, 400]))
    def test_linear_regret_bound(self, seed, T):
        rng = np.random.default_rng(seed)
        domain = Box.cube(2, -1, 1)
        grads = rng.uniform(-1, 1, size=(T, 2)) / math.sqrt(2)
        bounds = ProblemBounds(theta_norm=math.sqrt(2), grad_norm=1.0, lambda_grad_norm=1.0)
        eta = step_sizes(bounds, T, "proxy_stochastic", 1).eta_theta
        out = projected_gradient_descent(lambda th, t: grads[t], domain, T, eta)
        total = grads.sum(axis=0)
        best = -np.abs(total).sum()
        regret = (np.sum(out * grads) - best) / T
        # theta_norm bounds the radius, so the diameter is twice that
        assert regret <= 2 * math.sqrt(2) * math.sqrt(2 / T) + 1e-12


@pytest.fixture(scope="module")
def figure1_trace():
    return oracle_lagrangian(figure1().problem.relaxed(), OracleSpec(resolution=0.05), 10.0, 60, 0.2)


class TestOracleLagrangian:
    @pytest.fixture
    def trace(self, figure1_trace):
        return figure1_trace

    def test_shapes_and_cache(self, trace):
        assert trace.thetas.shape == (60, 2) and trace.lambdas.shape == (60, 3)
        problem = figure1().problem
        for t in (0, 17, 59):
            g0, g = problem.evaluate(trace.thetas[t])
            assert trace.objective_values[t] == pytest.approx(g0)
            np.testing.assert_allclose(trace.constraint_values[t], g)

    def test_multipliers_in_scaled_simplex(self, trace):
        assert np.all(trace.lambdas >= 0)
        assert np.all(trace.lambdas.sum(axis=1) <= 10.0 + 1e-12)
        np.testing.assert_array_equal(trace.lambdas[0], 0.0)

    def test_first_response_is_unconstrained_minimizer(self, trace):
        assert np.all(np.abs(trace.thetas[0]) == 1.0)

    def test_multiplier_ascent_follows_constraints(self, trace):
        lam1 = np.maximum(trace.lambdas[0] + 0.2 * trace.constraint_values[0], 0.0)
        np.testing.assert_allclose(trace.lambdas[1], lam1)

    def test_requires_finite_radius(self):
        with pytest.raises(ValueError):
            oracle_lagrangian(figure1().problem, OracleSpec(resolution=0.1), math.inf, 5, 0.1)

    def test_multistart_oracle_matches_on_linear_problem(self):
        problem = ConstrainedProblem(affine([1.0, 0.0]), [affine([-1.0, 0.0], 0.5)], Box.cube(2, -1, 1))
        spec = OracleSpec(kind="multistart_descent", restarts=2, inner_steps=100, inner_eta=0.5)
        trace = oracle_lagrangian(problem, spec, 5.0, 20, 0.5)
        assert trace.rho == 0.0
        # the response is -1 below unit weight and +1 above it
        lam = trace.lambdas[:, 0]
        np.testing.assert_allclose(trace.thetas[lam < 0.99, 0], -1.0, atol=1e-8)
        np.testing.assert_allclose(trace.thetas[lam > 1.01, 0], 1.0, atol=1e-8)
        assert np.any(lam > 1.01)


class TestStochasticLagrangian:
    def test_reproducible_and_bounded(self):
        inst = synthetic_fairness(n_train=300, n_valid=50)
        problem = inst.problem.relaxed()
        src = StochasticGradientSource(64, rng_seed=5)
        a = stochastic_lagrangian(problem, src, 2.0, 100, 0.05, 0.1)
        b = stochastic_lagrangian(problem, src, 2.0, 100, 0.05, 0.1)
        np.testing.assert_array_equal(a.thetas, b.thetas)
        np.testing.assert_array_equal(a.lambdas, b.lambdas)
        assert np.all(a.lambdas.sum(axis=1) <= 2.0 + 1e-12)
        assert np.all(np.abs(a.thetas) <= 2.0)
        assert a.seed == 5 and a.radius == 2.0

    def test_minimizes_objective_without_constraints(self):
        problem = ConstrainedProblem(quadratic([0.3, -0.2]), [], Box.cube(2, -1, 1))
        trace = stochastic_lagrangian(problem, StochasticGradientSource(), 1.0, 200, 0.1, 0.1)
        np.testing.assert_allclose(trace.thetas[-1], [0.3, -0.2], atol=1e-8)


class TestProxyLoops:
    def test_stochastic_proxy_on_simplex(self):
        inst = synthetic_fairness(n_train=300, n_valid=50)
        trace = stochastic_proxy_lagrangian(inst.problem, StochasticGradientSource(50, 1), 80, 0.05, 0.5)
        np.testing.assert_allclose(trace.lambdas.sum(axis=1), 1.0)
        assert np.all(trace.lambdas >= 0)
        np.testing.assert_allclose(trace.lambdas[0], [0.5, 0.5])
        assert trace.is_proxy and trace.formulation == "proxy_stochastic"

    def test_requires_proxies(self):
        problem = ConstrainedProblem(affine([1.0]), [affine([1.0])], Box.cube(1, -1, 1))
        with pytest.raises(ValueError, match="proxy"):
            stochastic_proxy_lagrangian(problem, StochasticGradientSource(), 5, 0.1, 0.1)
        with pytest.raises(ValueError, match="proxy"):
            oracle_proxy_lagrangian(problem, OracleSpec(resolution=0.5), 5, 0.1)

    def test_oracle_proxy_first_move(self):
        inst = figure1()
        trace = oracle_proxy_lagrangian(inst.problem, OracleSpec(resolution=0.1), 40, 0.5)
        # the uniform multipliers put weight 1/4 on the objective and each constraint
        lam = np.full(4, 0.25)
        values = grid_points(inst.problem.domain, 0.1)
        scores = [lam @ np.append(*inst.problem.evaluate(th)) for th in values]
        first = np.append(trace.objective_values[0], trace.constraint_values[0])
        assert lam @ first == pytest.approx(min(scores))
        np.testing.assert_allclose(trace.lambdas.sum(axis=1), 1.0)


class TestIterateTrace:
    def test_rejects_empty_or_mismatched(self):
        with pytest.raises(ValueError):
            IterateTrace(np.zeros((0, 2)), np.zeros((0, 1)), "proxy_oracle")
        with pytest.raises(ValueError):
            IterateTrace(np.zeros((3, 2)), np.zeros((2, 1)), "proxy_oracle")

    def test_save_load_roundtrip(self, tmp_path):
        trace = IterateTrace(np.arange(6.0).reshape(3, 2), np.full((3, 2), 0.5), "proxy_stochastic", seed=9, rho=0.1)
        trace.save(tmp_path / "t.npz")
        back = IterateTrace.load(tmp_path / "t.npz")
        np.testing.assert_array_equal(back.thetas, trace.thetas)
        np.testing.assert_array_equal(back.lambdas, trace.lambdas)
        assert (back.formulation, back.seed, back.radius, back.rho) == ("proxy_stochastic", 9, None, 0.1)
        np.testing.assert_allclose(back.lambda_bar(), [0.5, 0.5])

# %% [markdown]
# # Equal opportunity with proxy constraints
#
# A linear classifier is trained with hinge loss under one constraint:
# the minority group's true-positive rate must reach 90% of the overall
# true-positive rate. The rate is piecewise constant in the parameters, so
# the parameter player descends on a ramp-based proxy while the multiplier
# player still sees the true rate.

# %%
import numpy as np

from lagrangian_games import StochasticGradientSource, check_bounds, shrink, step_sizes, theoretical_epsilons
from lagrangian_games.evaluation import expected_metrics, importance_weighted_mixture
from lagrangian_games.instances import synthetic_fairness
from lagrangian_games.solvers import stochastic_proxy_lagrangian

inst = synthetic_fairness()
problem = inst.problem
T = 5000

# %% [markdown]
# ## Full-batch training with the default step sizes

# %%
schedule = step_sizes(inst.bounds("proxy_stochastic"), T, "proxy_stochastic", problem.m)
trace = stochastic_proxy_lagrangian(problem, StochasticGradientSource(minibatch_size=10**9), T,
                                    schedule.eta_theta, schedule.eta_lambda, schedule)
eps_theta, eps_lambda = theoretical_epsilons(schedule, "proxy_stochastic", exact_gradients=True)
print(f"eps_theta={eps_theta:.4f} eps_lambda={eps_lambda:.4f}")

# %% [markdown]
# The iterates are averaged with weights equal to the objective's share of
# the multipliers. That mixture is nearly feasible.

# %%
report = check_bounds(problem, trace, (eps_theta, eps_lambda))
print("lambda1", round(report.lambda1, 3), "bound", round(report.feasibility_bound, 4),
      "violation", report.measured_max_violation)

# %% [markdown]
# ## Shrinking to two classifiers
#
# With one constraint the LP keeps at most two iterates. Bisection finds
# the smallest attainable tolerance.

# %%
mixture, solution, eps = shrink(problem, trace)
metrics = expected_metrics(problem, mixture)
print("eps", eps, "support", mixture.indices, "weights", np.round(mixture.weights, 3))
print("hinge loss", round(metrics.objective, 4), "constraint", metrics.constraints)
averaged = expected_metrics(problem, importance_weighted_mixture(trace))
print("before shrinking: hinge loss", round(averaged.objective, 4), "constraint", averaged.constraints)

# %% [markdown]
# ## Held-out data

# %%
valid = expected_metrics(inst.validation, mixture)
print("validation constraint", valid.constraints)

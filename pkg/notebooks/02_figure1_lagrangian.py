# %% [markdown]
# # Oracle best responses on a nonconvex toy problem
#
# The `figure1` instance minimizes `-(t1^2 + t2^2)` over `[-1, 1]^2`
# inside a small triangle. The objective is concave, so every best response
# jumps to a corner of the box and no single iterate is feasible. A mixture
# of iterates is.

# %%
import math

import numpy as np

from lagrangian_games import OracleSpec, check_bounds, oracle_lagrangian, shrink, step_sizes, theoretical_epsilons
from lagrangian_games.evaluation import expected_metrics, uniform_mixture
from lagrangian_games.instances import figure1

inst = figure1()
R, T = 10.0, 500

# %% [markdown]
# ## Training
#
# The multiplier step size and the equilibrium tolerance follow from the
# instance's norm bounds. A grid oracle reports its own additive error
# `rho` from the payoff's Lipschitz constant.

# %%
schedule = step_sizes(inst.bounds("lagrangian_oracle", R), T, "lagrangian_oracle", inst.problem.m, radius=R)
oracle = OracleSpec(resolution=0.005, lipschitz=inst.lipschitz("lagrangian_oracle", R))
trace = oracle_lagrangian(inst.problem, oracle, R, T, schedule.eta_lambda, schedule)
eps = theoretical_epsilons(schedule, "lagrangian_oracle", rho=trace.rho)
print(f"eta_lambda={schedule.eta_lambda:.4f} rho={trace.rho:.4f} eps={eps:.4f}")

# %% [markdown]
# Distinct iterates are mostly box corners:

# %%
corners, counts = np.unique(trace.thetas, axis=0, return_counts=True)
for c, k in zip(corners, counts):
    print(c, k)

# %% [markdown]
# ## Bounds
#
# The averaged play is nearly feasible, with a violation bounded by
# `eps / (R - ||lambda_bar||_1)`.

# %%
report = check_bounds(inst.problem, trace, eps, inst.margin, inst.reference_objective)
for key in ("lambda_norm", "feasibility_bound", "measured_max_violation", "measured_objective"):
    print(key, getattr(report, key))
print(report.satisfied)

# %% [markdown]
# ## Shrinking
#
# The 500-point uniform mixture is replaced by the best mixture of at
# most `m + 1 = 4` iterates meeting the same tolerance.

# %%
mixture, solution, used = shrink(inst.problem, trace, epsilon=report.feasibility_bound)
print("support", mixture.indices, "weights", np.round(mixture.weights, 4))
print("objective", solution.objective, "vs uniform", expected_metrics(inst.problem, uniform_mixture(trace)).objective)
print("mean parameters", mixture.weights @ mixture.support, "constrained optimum", -1.04)
assert mixture.size <= 4 and math.isfinite(solution.objective)

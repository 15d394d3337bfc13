# %% [markdown]
# # Minimax over several losses
#
# `min_theta max_i loss_i(theta)` becomes a constrained problem in
# `(theta, xi)`: minimize `xi` subject to `loss_i(theta) <= xi`. The
# Lagrange multipliers are then the adversary's weights on the losses.

# %%
import numpy as np

from lagrangian_games import OracleSpec, oracle_lagrangian, shrink, step_sizes
from lagrangian_games.instances import ROBUST_TOY_LOSSES, robust_toy

inst = robust_toy()
R, T = 2.0, 400

# %%
schedule = step_sizes(inst.bounds("lagrangian_oracle", R), T, "lagrangian_oracle", inst.problem.m, radius=R)
oracle = OracleSpec(resolution=0.05, lipschitz=inst.lipschitz("lagrangian_oracle", R))
trace = oracle_lagrangian(inst.problem, oracle, R, T, schedule.eta_lambda, schedule)
lam = trace.lambda_bar()
print("adversary weights on the losses", np.round(lam / lam.sum(), 3))

# %% [markdown]
# The affine losses are convex, so the mean of a feasible mixture is a
# deterministic solution with the same worst-case loss.

# %%
mixture, solution, eps = shrink(inst.problem, trace)
theta = (mixture.weights @ mixture.support)[:2]
worst = max(a @ theta + b for a, b in ROBUST_TOY_LOSSES)
print("theta", np.round(theta, 3), "worst loss", round(worst, 4), "shrink eps", eps)

# %%
grid = np.stack(np.meshgrid(np.linspace(-1, 1, 201), np.linspace(-1, 1, 201)), -1).reshape(-1, 2)
brute = np.max([grid @ a + b for a, b in ROBUST_TOY_LOSSES], axis=0).min()
print("grid minimax", round(brute, 4))

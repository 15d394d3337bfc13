# %% [markdown]
# # Parameter domains, projections and constrained problems
#
# Every solver works on a `ConstrainedProblem`: an objective, a tuple of
# inequality constraints `g_i(theta) <= 0`, an optional tuple of
# differentiable proxies, and a convex parameter domain with a Euclidean
# projection.

# %%
import numpy as np

from lagrangian_games import Box, ConstrainedProblem, L2Ball, affine, project_l1_nonneg

# %% [markdown]
# ## Projections
#
# Boxes clip coordinates; balls rescale toward their center.

# %%
box = Box.cube(2, -1.0, 1.0)
ball = L2Ball(np.zeros(2), 1.0)
point = np.array([3.0, -0.5])
print("box :", box.project(point))
print("ball:", ball.project(point))

# %% [markdown]
# The multiplier player of the Lagrangian game lives in
# `{lam >= 0, sum(lam) <= R}`. Points already inside are left alone;
# others are thresholded onto the budget.

# %%
for v in ([0.2, 0.3, -1.0], [3.0, 1.0, 0.0], [-1.0, -2.0, -3.0]):
    print(v, "->", project_l1_nonneg(np.array(v), 2.0))

# %% [markdown]
# ## A small problem
#
# Minimize `theta_1 + theta_2` on the unit box subject to
# `theta_1 >= 0.25`. Affine functions carry their gradients.

# %%
problem = ConstrainedProblem(
    affine([1.0, 1.0]),
    [affine([-1.0, 0.0], 0.25)],
    box,
)
g0, g = problem.evaluate(np.array([0.25, -1.0]))
print("objective", g0, "constraints", g)
print("m =", problem.m, "dim =", problem.dim)

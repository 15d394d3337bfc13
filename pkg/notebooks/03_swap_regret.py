# %% [markdown]
# # The swap-regret multiplier player
#
# The proxy-Lagrangian multiplier player keeps a left-stochastic matrix
# `M`, plays its stationary distribution, and updates each column with a
# multiplicative step. Its regret is measured against every remapping of
# its own actions, not only against fixed actions.

# %%
import math

import numpy as np

from lagrangian_games import SwapRegretLearner, stationary_distribution, swap_regret

# %% [markdown]
# ## Stationary distributions
#
# Periodic chains such as permutations have several eigenvalues on the
# unit circle. The solver still returns a fixed point.

# %%
for M in (np.array([[0.9, 0.5], [0.1, 0.5]]), np.array([[0.0, 1.0], [1.0, 0.0]]), np.eye(3)):
    lam = stationary_distribution(M)
    print(lam, "residual", np.abs(M @ lam - lam).max())

# %% [markdown]
# ## Learning against a fixed payoff sequence
#
# The best action switches every `T / 10` rounds. Swap regret decays like
# `1 / sqrt(T)`, and stays under `2 sqrt(n ln n / T)` for payoffs in
# `[-1, 1]`.

# %%
n = 4
for T in (100, 1000, 10000):
    payoffs = np.array([np.eye(n)[(t // (T // 10)) % n] for t in range(T)])
    learner = SwapRegretLearner(n, math.sqrt(n * math.log(n) / T))
    lambdas = np.empty((T, n))
    for t in range(T):
        lambdas[t] = learner.strategy()
        learner.update(lambdas[t], payoffs[t])
    print(f"T={T:>5}  swap regret={swap_regret(lambdas, payoffs):.4f}  bound={2 * math.sqrt(n * math.log(n) / T):.4f}")

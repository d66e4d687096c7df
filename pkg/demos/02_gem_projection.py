# %% [markdown]
# # Projecting a gradient against remembered tasks
#
# Rows of `G` are gradients on stored batches from earlier tasks. If the new
# gradient `g` points against any of them, `gem_project` returns the closest
# vector that does not.

# %%
import numpy as np

from liferec.gem import GemConfig, gem_project, solve_nnqp

rng = np.random.default_rng(3)
G = rng.normal(size=(3, 10))
g = -G[0] + 0.3 * rng.normal(size=10)
print("before:", (G @ g).round(3))

# %%
g_tilde = gem_project(g, G, GemConfig(gamma=0.0))
print("after: ", (G @ g_tilde).round(6))
print("moved by", np.linalg.norm(g_tilde - g).round(4))

# %% the dual is a small nonnegative QP, one variable per stored task
sol = solve_nnqp(G @ G.T, G @ g)
print("multipliers", sol.x.round(4), "kkt residual", f"{sol.residual:.1e}")

# %% gamma pushes the result further into the feasible cone
for gamma in (0.0, 0.5, 1.0):
    print(gamma, (G @ gem_project(g, G, GemConfig(gamma=gamma))).round(3))

# %% a gradient that already agrees with memory comes back as the same object
ok = G.T @ np.linalg.solve(G @ G.T, np.ones(3))
print(gem_project(ok, G) is ok)

"""Perturbed regular grids in dimension two.

Sixty-four points on the 8 x 8 grid, each moved by epsilon * X_i with X_i
uniform on [-1, 1]^2.  Larger epsilon lets neighbouring points come close
to each other, down to a spacing of 1 - 2 epsilon.  The design is written
to CSV so it can be plotted with any tool.
"""

# %%
import numpy as np

from perturbgp import sample_design
from perturbgp.sampling import design_to_csv, min_spacing

# %% The three regimes: regular grid, mild and strong perturbation
for eps in (0.0, 0.2, 0.375, 0.45):
    des = sample_design(64, 2, eps, seed=1)
    print(f"eps = {eps:5.3f}   min spacing = {min_spacing(des):.3f}   "
          f"guaranteed >= {1 - 2 * eps:.3f}")

# %% Same perturbations at every epsilon: only the scale changes
a = sample_design(64, 2, 0.2, seed=1)
b = a.with_epsilon(0.375)
print("identical X:", np.array_equal(a.perturbations, b.perturbations))

# %% Save the eps = 0.375 design
design_to_csv(b, "design_eps0375.csv")
print("first rows:\n", b.points[:4])

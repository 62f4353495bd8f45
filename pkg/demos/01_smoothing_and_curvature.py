"""
Smoothing by horizontal convolution, and boundary curvature
============================================================

A tour of the two ingredients that every time step leans on: the
tangential smoothing of velocity fields near the free boundary, and the
curvature of the boundary curve.  Runs in a few seconds.
"""

# %%
import numpy as np

from kappaflow.fields import random_smooth_field, sobolev_norm
from kappaflow.geometry import BoundaryLine, DomainSpec, boundary_geometry, build_atlas
from kappaflow.smoothing import Mollifier, Smoother, commutator_operator_norm, fit_slope

# %%
# The mollifier is discretised by integrating the kernel over each node cell.
# Weights are even, nonnegative and sum to one.
off, w = Mollifier("bump").weights(h=1 / 64, delta=0.08)
print("stencil half-width:", off.max(), " sum of weights:", w.sum())

# %%
# Disk atlas: eight annular sector charts plus an interior weight.
spec = DomainSpec("disk")
grid = spec.grid(128, 32)
atlas = build_atlas(spec, grid)
print("charts:", atlas.K, " partition of unity error:", np.abs(atlas.partition_sum() - 1).max())

# %%
# Smoothing a random field lowers its high Sobolev norms a little and
# leaves the L2 norm almost alone.
rng = np.random.default_rng(0)
v = random_smooth_field(grid, rng, ncomp=2, decay=3.0)
for kappa in (0.08, 0.02):
    vk = Smoother(atlas, kappa).apply(v)
    ratios = [sobolev_norm(grid, vk, s) / sobolev_norm(grid, v, s) for s in (0, 1, 2)]
    print(f"kappa={kappa}: norm ratios s=0,1,2 ->", np.round(ratios, 4))

# %%
# The commutator with a smooth multiplier shrinks like kappa.
n = 256
f = np.cos(2 * np.pi * np.arange(n) / n)
kappas = [0.08, 0.04, 0.02, 0.01]
norms = [commutator_operator_norm(n, 1.0, f, k) for k in kappas]
print("commutator norms:", np.round(norms, 5), " slope:", round(fit_slope(kappas, norms), 3))

# %%
# Curvature of an ellipse x = cos t, y = 2 sin t.  At t = 0 the exact
# value is a / b^2 = 0.25.
m = 256
t = 2 * np.pi * np.arange(m) / m
ellipse = np.stack([np.cos(t), 2 * np.sin(t)])
bg = boundary_geometry(ellipse, BoundaryLine(1.0, True, 1.0))
exact = 2.0 / (np.sin(t) ** 2 + 4 * np.cos(t) ** 2) ** 1.5
print("H(0) =", bg.H[0], " max error:", np.abs(bg.H - exact).max())

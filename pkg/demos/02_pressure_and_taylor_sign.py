"""
Pressure on the disk and the Taylor sign
========================================

Strain flow ``u = (-x, y)`` on the unit disk at rest geometry has the
pressure ``(1 - r^2) / 2``.  We solve for it, watch the error fall with
resolution, then look at the sign of ``-grad p . n`` for two flows
without surface tension.
"""

# %%
from kappaflow import experiments as ex

# %%
rows = [ex.strain_pressure_error(n) for n in (16, 32, 64)]
for r in rows:
    print(f"n={r['n']:3d}  max error {r['max_error']:.2e}  n^2 * error {r['scaled']:.4f}  "
          f"Dirichlet/Neumann gap {r['cross_gap']:.1e}")
order = -ex.fit_slope([r["n"] for r in rows], [r["max_error"] for r in rows])
print("observed order:", round(order, 2))

# %%
# Strain flow pushes fluid against the boundary: positive margin, the
# problem is well posed without surface tension.  Rigid rotation pulls
# the boundary outward and fails the test at t = 0.
m = ex.taylor_margins(n=32, t_end=0.05)
print("strain margin at t=0:", round(m["strain_initial"], 5), "-> status", m["strain_status"])
print("rotation margin at t=0:", round(m["rotation_initial"], 5), "-> status", m["rotation_status"])

# %%
# A much stronger strain leaves the validity window quickly; the run stops
# with a status instead of producing NaNs.
res = ex.violent_run(n=16)
print(res.status, "at t =", round(res.state.t, 4), "-", res.message)

"""
Large and moderate deviation rates
==================================

Build a path from a known control, then recover the control's energy.
"""
import numpy as np

from mfbm import (GridPath, SpectralSpace, apply_KH, make_family, rate_ldp, rate_mdp, solve_averaged,
                  solve_skeleton_ldp, uniform_grid)

sp = SpectralSpace([1.0, 4.0])
q1 = np.array([1.0, 0.5])
fam = make_family("linear_dissipative", sp, dict(b_x=0.5, b_y=1.0, a=1.0, c=0.5, sigma_f=1.0, g_scale=1.0))

# %%
# A control with known energy, mapped into the Cameron-Martin space.
t = uniform_grid(1.0, 512)
mid = 0.5 * (t[1:] + t[:-1])
vdot = np.column_stack([np.cos(2 * np.pi * mid) + 0.5, np.sin(np.pi * mid)]) * np.sqrt(q1)
energy = np.sum(np.diff(t)[:, None] * vdot ** 2 / q1)
u0 = apply_KH(0.7, GridPath(t, vdot, "cell"))

phi = solve_skeleton_ldp(sp, fam, fam, u0, [0.3, 0.3])
rep = rate_ldp(phi, fam, fam, sp, 0.7, q1, error_estimate=True)
print("2 I(phi) =", 2 * rep.rate, "  |vdot|^2 =", energy, "  quadrature error:", rep.quadrature_error)

# %%
# The averaged path costs nothing.
xbar = solve_averaged(sp, fam, [0.3, 0.3], t)
print("I(xbar) =", rate_ldp(xbar, fam, fam, sp, 0.7, q1).rate)

# %%
# Moderate deviations are quadratic in the displacement.
phi = 0.2 * np.column_stack([np.sin(np.pi * t), t * (1 - t)])
for c in (1.0, 2.0, 3.0):
    print(c, rate_mdp(GridPath(t, c * phi), xbar, fam, fam, sp, 0.7, q1).rate)

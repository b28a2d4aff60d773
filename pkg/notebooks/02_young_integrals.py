"""
Pathwise integrals against fBM
==============================

Weyl derivatives and the Young integral for Hoelder paths with H > 1/2.
"""
import warnings

import numpy as np
from scipy import special

from mfbm import GridPath, path_norms, rs_integral, sample_fbm_1d, uniform_grid, weyl_forward
from mfbm.rough import SingularNodeWarning

warnings.simplefilter("ignore", SingularNodeWarning)

# %%
# Weyl derivative of f(t) = t, checked against t^{1-a} / Gamma(2-a).
t = uniform_grid(1.0, 256)
a = 0.3
d = weyl_forward(GridPath(t, t), a)
print("max rel error:", np.abs(d.values[:, 0] / (t[1:] ** (1 - a) / special.gamma(2 - a)) - 1).max())

# %%
# int B dB for a single fBM path should be B_T^2 / 2 (no Ito correction).
t = uniform_grid(1.0, 1024)
B = sample_fbm_1d(0.75, t, np.random.default_rng(1))
print("int B dB =", rs_integral(B, B, a)[0], "  B_T^2/2 =", 0.5 * B.values[-1, 0] ** 2)

# %%
# Two independent paths: coarse Young integral vs a fine left-point sum.
tf = uniform_grid(1.0, 2048)
f, g = sample_fbm_1d(0.75, tf, np.random.default_rng(2), replicas=2).values[..., 0]
coarse = rs_integral(GridPath(tf[::4], f[::4]), GridPath(tf[::4], g[::4]), a)[0]
print("coarse Young:", coarse, "  fine Riemann:", np.sum(f[:-1] * np.diff(g)))

rep = path_norms(GridPath(tf, f), a)
print("norms of f:", rep)

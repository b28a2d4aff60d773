"""
Fractional Brownian motion and its Volterra kernel
==================================================

Exact sampling, the kernel K_H, and the Cameron-Martin map.
"""
import numpy as np

from mfbm import (GridPath, apply_KH, apply_KH_inverse, fbm_covariance, hurst_constant, sample_fbm_1d,
                  uniform_grid, volterra_kernel, volterra_kernel_2f1)

# %%
# Draw a few thousand paths on a coarse grid and compare the sample
# covariance to the closed form.
t = uniform_grid(1.0, 8)
X = sample_fbm_1d(0.7, t, np.random.default_rng(0), replicas=20000).values[:, 1:, 0]
emp = X.T @ X / X.shape[0]
exact = fbm_covariance(0.7, t[1:, None], t[None, 1:])
print("max covariance error:", np.abs(emp - exact).max())

# %%
# The kernel has two independent evaluation routes.
print("c_H(0.7) =", hurst_constant(0.7))
for s in (0.1, 0.5, 0.9):
    print(f"K(1, {s}) quad = {volterra_kernel(0.7, 1.0, s):.12f}   2F1 = {volterra_kernel_2f1(0.7, 1.0, s):.12f}")

# as H -> 1/2 the kernel flattens to the indicator of [0, t)
print("H = 0.5 + 1e-9:", volterra_kernel(0.5 + 1e-9, 1.0, np.array([0.2, 0.5, 0.8])))

# %%
# Push a smooth control through K_H and pull it back.
t = uniform_grid(1.0, 512)
mid = 0.5 * (t[1:] + t[:-1])
hdot = GridPath(t, np.cos(2 * np.pi * mid), "cell")
u = apply_KH(0.7, hdot)
back = apply_KH_inverse(0.7, u)
print("round trip rel error:", np.linalg.norm(apply_KH(0.7, back).values - u.values) / np.linalg.norm(u.values))

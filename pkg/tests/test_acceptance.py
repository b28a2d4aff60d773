"""Acceptance suite: thirteen end-to-end checks against analytic oracles.

Each test prints one ``PASS``/``FAIL`` line (shown even under capture) and
then asserts.  Run alone with ``pytest tests/test_acceptance.py -v``.
"""
import time

import numpy as np
import pytest
from scipy import special

from mfbm import (CovarianceSpec, GridPath, ScaleParams, SpectralSpace, TerminalEvent, apply_KH,
                  apply_KH_inverse, averaging_error_sweep, estimate_bbar, fbm_covariance,
                  gaussian_terminal_moments, make_family, mc_rare_event, rate_ldp, rate_mdp, rate_vs_mc,
                  rs_integral, sample_cylindrical_fbm, sample_fbm_1d, solve_averaged,
                  solve_khasminskii_auxiliary, solve_skeleton_ldp, solve_slow_fast, uniform_grid,
                  volterra_kernel, volterra_kernel_2f1, weyl_forward)
from mfbm.cli import run_command

pytestmark = pytest.mark.filterwarnings("ignore::mfbm.rough.SingularNodeWarning")


@pytest.fixture
def verdict(capsys):
    t0 = time.perf_counter()

    def _v(n, ok, detail, budget):
        dt = time.perf_counter() - t0
        ok = bool(ok) and dt < budget
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {n:2d}: {detail} [{dt:.1f}s / {budget:.0f}s]")
        assert ok, f"criterion {n}: {detail}"
    return _v


def linear_avg_family(sp):
    return make_family("linear_dissipative", sp, dict(b_x=1.0, b_y=2.0, a=1.0, c=1.0, sigma_f=1.0, g_scale=0.05))


def test_01_fbm_covariance(verdict):
    tt = np.array([0.0, 0.25, 0.5, 0.75, 1.0])
    worst = 0.0
    for i, H in enumerate((0.6, 0.75, 0.9)):
        X = sample_fbm_1d(H, tt, np.random.default_rng(100 + i), replicas=100_000).values[:, 1:, 0]
        P = X[:, :, None] * X[:, None, :]
        se = P.std(axis=0, ddof=1) / np.sqrt(X.shape[0])
        z = np.abs(P.mean(axis=0) - fbm_covariance(H, tt[1:, None], tt[None, 1:])) / se
        worst = max(worst, z.max())
    verdict(1, worst <= 3, f"max |cov - exact| = {worst:.2f} SE", 30)


def test_02_kernel_degeneracy_and_two_routes(verdict):
    s = np.linspace(0.1, 0.9, 81)
    dev = max(np.abs(volterra_kernel(0.5 + 1e-9, t, s * t) - 1).max() for t in (0.5, 1.0, 3.0))
    rng = np.random.default_rng(2)
    diff = 0.0
    for _ in range(100):
        t = rng.uniform(0.05, 3.0)
        s_ = rng.uniform(0.005, 0.995) * t
        diff = max(diff, abs(volterra_kernel(0.7, t, s_) - volterra_kernel_2f1(0.7, t, s_)))
    verdict(2, dev <= 1e-6 and diff <= 1e-8, f"|K - 1| = {dev:.1e} near H=1/2, integral vs 2F1 = {diff:.1e}", 10)


def test_03_young_integral_vs_fine_riemann_sums(verdict):
    tf = uniform_grid(1.0, 2048)
    tc = tf[::4]
    errs, refs = [], []
    for seed in range(20):
        B = sample_fbm_1d(0.75, tf, np.random.default_rng(seed), replicas=2).values[..., 0]
        f, g = B
        val = rs_integral(GridPath(tc, f[::4]), GridPath(tc, g[::4]), 0.3)[0]
        ref = np.sum(f[:-1] * np.diff(g))
        errs.append(val - ref)
        refs.append(ref)
    errs, refs = np.array(errs), np.array(refs)
    agg = np.sqrt(np.sum(errs ** 2) / np.sum(refs ** 2))
    per_seed = np.abs(errs) / np.abs(refs)
    scaled = np.abs(errs).max() / np.sqrt(np.mean(refs ** 2))
    print("per-seed relative errors:", np.array2string(per_seed, precision=4))
    # seeds whose integral is near zero make the per-seed ratio ill-conditioned, so the gate is the
    # aggregate relative error plus every seed's error against the typical integral size
    verdict(3, agg <= 1e-2 and scaled <= 1e-2,
            f"aggregate rel L2 = {agg:.1e}, max |err| / rms = {scaled:.1e}, "
            f"seeds with rel > 1e-2: {int(np.sum(per_seed > 1e-2))}/20", 60)


def test_04_weyl_closed_forms(verdict):
    a = 0.3
    errs = {}
    for M in (512, 1024, 2048):
        t = uniform_grid(1.0, M)
        e = 0.0
        s = t[1:]
        for f, ref in ((np.full_like(t, 2.0), 2 * s ** -a / special.gamma(1 - a)),
                       (t, s ** (1 - a) / special.gamma(2 - a))):
            d = weyl_forward(GridPath(t, f), a).values[:, 0]
            e = max(e, np.abs(d / ref - 1).max())
        errs[M] = e
    # the discrete derivative is exact on piecewise-linear paths, so refinement can only stay at round-off
    ok = errs[1024] <= 1e-3 and errs[2048] <= max(errs[1024], 1e-12) and errs[1024] <= max(errs[512], 1e-12)
    verdict(4, ok, "rel errors " + ", ".join(f"M={m}: {e:.1e}" for m, e in errs.items()), 10)


def test_05_kh_round_trip(verdict):
    t = uniform_grid(1.0, 1024)
    mid = 0.5 * (t[1:] + t[:-1])
    out = {}
    for H in (0.6, 0.7, 0.8):
        u = apply_KH(H, GridPath(t, np.cos(2 * np.pi * mid), "cell"))
        r = apply_KH(H, apply_KH_inverse(H, u))
        out[H] = np.linalg.norm(r.values - u.values) / np.linalg.norm(u.values)
    verdict(5, max(out.values()) <= 2e-2, "rel errors " + ", ".join(f"H={h}: {e:.1e}" for h, e in out.items()), 30)


def test_06_rate_round_trip(verdict):
    t = uniform_grid(1.0, 1024)
    mid = 0.5 * (t[1:] + t[:-1])
    errs = []
    for dim in (1, 2):
        sp = SpectralSpace([1.0, 4.0][:dim])
        q1 = np.array([1.0, 0.5][:dim])
        fam = make_family("linear_dissipative", sp, dict(b_x=0.5, b_y=1.0, a=1.0, c=0.5, sigma_f=1.0, g_scale=1.0))
        vd = np.column_stack([np.cos(2 * np.pi * mid) + 0.5, np.sin(np.pi * mid)][:dim]) * np.sqrt(q1)
        u0 = apply_KH(0.7, GridPath(t, vd, "cell"))
        phi = solve_skeleton_ldp(sp, fam, fam, u0, np.full(dim, 0.3))
        energy = np.sum(np.diff(t)[:, None] * vd ** 2 / q1)
        errs.append(abs(2 * rate_ldp(phi, fam, fam, sp, 0.7, q1).rate - energy) / energy)
    verdict(6, max(errs) <= 0.03, "|2I - |vdot|^2| / |vdot|^2 = " + ", ".join(f"{e:.1e}" for e in errs), 60)


def test_07_classical_reduction(verdict):
    sp = SpectralSpace([1.0, 2.5])
    fam = make_family("bounded_nonlinear", sp)
    q = np.array([1.5, 0.4])
    t = uniform_grid(1.0, 256)
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(10):
        k = rng.normal(size=(2, 3))
        phi = np.column_stack([1.0 + sum(k[i, j] * np.sin((j + 1) * np.pi * t) / (j + 1) for j in range(3))
                               for i in range(2)])
        rep = rate_ldp(GridPath(t, phi), fam, fam, sp, 0.5, q1=q)
        ud = np.diff(rep.minimal_control.values, axis=0) / np.diff(t)[:, None]
        ref = 0.5 * np.sum(np.diff(t)[:, None] * ud ** 2 / q)
        worst = max(worst, abs(rep.rate - ref) / ref)
    verdict(7, worst <= 1e-8, f"max rel deviation from the Brownian energy = {worst:.1e}", 10)


def test_08_averaging_principle(verdict):
    sp = SpectralSpace([1.0])
    fam = linear_avg_family(sp)
    sched = [ScaleParams(0.1, d) for d in (1e-2, 1e-3, 1e-4)]
    rep = averaging_error_sweep(sp, fam, sched, 200, 7, x0=[1.0], times=uniform_grid(1.0, 100), H=0.75)
    ok = rep.valid and bool(np.all(np.diff(rep.means) < 0)) and rep.means[-1] <= 2 * rep.floor
    verdict(8, ok, "means " + ", ".join(f"{m:.4f}" for m in rep.means) + f", floor {rep.floor:.4f}", 300)


def test_09_khasminskii_scaling(verdict):
    sp = SpectralSpace([1.0])
    fam = make_family("linear_dissipative", sp, dict(b_x=0.5, b_y=0.0, a=1.0, c=2.0, sigma_f=1.0, g_scale=1.0))
    t = uniform_grid(1.0, 400)
    eps = 0.25
    bh = sample_cylindrical_fbm(sp, CovarianceSpec([1.0]), 0.55, t, 9, replicas=200)
    v = GridPath(t, 2.0 * t)
    X, Y = [], []
    for D in (0.05, 0.1, 0.2):
        for r in (0.005, 0.01, 0.02):
            a, aux = solve_khasminskii_auxiliary(sp, fam, ScaleParams(eps, r * eps, block=D), None, v, bh, None,
                                                 [0.0], [0.0], times=t, q2=[1.0], seed=4)
            dy = np.sum((a.fast.values - aux.fast.values) ** 2, axis=-1)
            X.append([D, r])
            Y.append(np.mean(np.sum(0.5 * (dy[:, 1:] + dy[:, :-1]) * np.diff(t), axis=1)))
    X, Y = np.array(X), np.array(Y)
    c, *_ = np.linalg.lstsq(X, Y, rcond=None)
    r2 = 1 - np.sum((Y - X @ c) ** 2) / np.sum((Y - Y.mean()) ** 2)
    verdict(9, r2 >= 0.9 and np.all(c > 0), f"c1 = {c[0]:.3f}, c2 = {c[1]:.3f}, R^2 = {r2:.4f}", 300)


def test_10_frozen_ergodicity(verdict):
    sp = SpectralSpace([1.0])
    nl = make_family("bounded_nonlinear", sp, dict(b_y=2.0, c=1.5))
    z_ic = 0.0
    for x in (0.3, 1.2):
        e1, s1 = estimate_bbar(sp, nl, [x], replicas=16, rng=1, y0=[-3.0])
        e2, s2 = estimate_bbar(sp, nl, [x], replicas=16, rng=2, y0=[3.0])
        z_ic = max(z_ic, abs(e1[0] - e2[0]) / np.hypot(s1[0], s2[0]))
    lin = make_family("linear_dissipative", sp, dict(b_x=1.0, b_y=2.0, a=1.0, c=1.0, sigma_f=1.0, g_scale=0.1))
    z_ou = 0.0
    for i, x in enumerate(np.linspace(-1.0, 2.0, 5)):
        e, se = estimate_bbar(sp, lin, [x], replicas=16, rng=10 + i)
        z_ou = max(z_ou, abs(e[0] - lin.bbar(np.array([x]))[0]) / se[0])
    verdict(10, z_ic <= 3 and z_ou <= 3, f"two-start gap {z_ic:.2f} SE, OU closed form gap {z_ou:.2f} SE", 120)


def test_11_mc_vs_rate(verdict):
    sp = SpectralSpace([1.0, 2.0, 3.0])
    q1 = np.array([1.0, 0.5, 0.25])
    fam = make_family("linear_dissipative", sp, dict(b_x=1.0, b_y=0.0, a=1.0, c=0.0, sigma_f=1.0, g_scale=1.0))
    x0, H = np.ones(3), 0.75
    m, v1 = gaussian_terminal_moments(sp, fam, x0, 1.0, H, q1)
    a = np.sqrt(2 * 0.36 * v1[0])
    # weights v1[0]/v1 whiten the modes, so the event is a chi-square tail with limit a^2 / (2 v1[0])
    ref = a * a / (2 * v1[0])
    ev = TerminalEvent("weighted_norm", a, center=m, weights=v1[0] / v1)
    sched = [ScaleParams(e, 0.01 * e * e) for e in (0.4, 0.2, 0.1, 0.05)]
    rep = mc_rare_event(sp, fam, sched, ev, 100_000, 11, x0=x0, times=uniform_grid(1.0, 100), H=H, q1=q1,
                        rate_reference=ref)
    v = rate_vs_mc(rep, ref, band=(0.75, 1.25))
    print(rep.to_csv_string())
    verdict(11, v.status == "PASS" and abs(v.ratio - 1) <= 0.25 and v.spearman >= 0.8,
            f"-eps log p / I = {v.ratio:.3f}, Spearman {v.spearman:.2f}, {v.status}", 600)


def test_12_mdp_scaling_and_clt(verdict):
    sp = SpectralSpace([1.0])
    q1 = np.array([1.0])
    fam = make_family("linear_dissipative", sp, dict(b_x=1.0, b_y=0.0, a=1.0, c=0.0, sigma_f=1.0, g_scale=1.0))
    t = uniform_grid(1.0, 100)
    x0 = np.ones(1)
    xbar = solve_averaged(sp, fam, x0, t)
    phi = np.sin(np.pi * t)[:, None] * 0.4
    i1 = rate_mdp(GridPath(t, phi), xbar, fam, fam, sp, 0.7, q1).rate
    i2 = rate_mdp(GridPath(t, 2 * phi), xbar, fam, fam, sp, 0.7, q1).rate
    scal = abs(i2 - 4 * i1) / (4 * i1)

    eps, H = 0.05, 0.75
    sc = ScaleParams(eps, 1e-4, h_form="power:0.2")
    bh = sample_cylindrical_fbm(sp, CovarianceSpec(q1), H, t, 5, replicas=10_000)
    res = solve_slow_fast(sp, fam, sc, bh, None, x0, np.zeros(1), q2=np.ones(1), seed=5, track_fast=False)
    zT = (res.slow.values[:, -1, 0] - xbar.values[-1, 0]) / (np.sqrt(eps) * sc.h)
    var = zT.var(ddof=1)
    se = np.sqrt((np.mean((zT - zT.mean()) ** 4) - var ** 2) / zT.size)
    pred = gaussian_terminal_moments(sp, fam, x0, 1.0, H, q1)[1][0] / sc.h ** 2
    z = abs(var - pred) / se
    verdict(12, scal <= 1e-8 and z <= 3, f"|I(2phi) - 4I(phi)| rel = {scal:.1e}, Var(Z_T) gap {z:.2f} SE", 300)


CFG8 = """
seed = 7
[space]
eigenvalues = [1.0]
[noise]
H = 0.75
alpha = 0.3
[family]
name = "linear_dissipative"
params = { b_x = 1.0, b_y = 2.0, a = 1.0, c = 1.0, sigma_f = 1.0, g_scale = 0.05 }
[scales]
epsilon = 0.1
delta = 1e-4
[grid]
T = 1.0
M = 100
[run]
replicas = 200
x0 = [1.0]
"""


def test_13_determinism(verdict, tmp_path):
    cfg = tmp_path / "cell.toml"
    cfg.write_text(CFG8)
    blobs = []
    for run in ("a", "b"):
        assert run_command(["simulate", "--config", str(cfg), "--out", str(tmp_path / run)]) == 0
        blobs.append((tmp_path / run / "simulate" / "paths_0.csv").read_bytes())
    verdict(13, blobs[0] == blobs[1] and len(blobs[0]) > 0,
            f"two seeded runs, {len(blobs[0])} bytes, identical = {blobs[0] == blobs[1]}", 120)

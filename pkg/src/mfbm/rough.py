"""Weyl fractional derivatives, the generalized Riemann-Stieltjes (Young)
integral and the fractional path norms.

Paths are treated as piecewise linear between grid nodes.  For such data
every singular inner integral (over ``(t-s)^{-alpha-1}`` or
``(s-t)^{alpha-2}``) has a closed form per cell, so the Weyl derivatives are
exact at any evaluation point.  The outer integral of the product of the two
derivatives is done with graded Gauss-Legendre rules on each half cell, which
resolves the ``(r - t_k)^{1-alpha}`` and ``(t_{k+1} - r)^alpha`` behaviour of
the integrand next to every node.

Sign convention: the backward derivative is returned without its unimodular
factor ``(-1)^{1-alpha}``; combined with the ``(-1)^alpha`` in front of the
integral it contributes an overall minus sign, i.e.

    int_a^b f dg = - int_a^b D^alpha_{a+} f(r) * Dt^{1-alpha}_{b-} g_{b-}(r) dr.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, special

from .errors import ContractError, DomainError, IntegrabilityError
from .paths import GridPath
from .spectral import BoundReport

NORM_CAP = 1e8


class SingularNodeWarning(UserWarning):
    """An evaluation node coincided with a singular endpoint and was dropped."""


@dataclass(frozen=True)
class FracOrder:
    alpha: float

    def __post_init__(self):
        a = float(self.alpha)
        if not 0.0 < a < 0.5:
            raise DomainError(f"alpha must lie in (0, 1/2), got {a}")
        object.__setattr__(self, "alpha", a)

    def check_hurst(self, H: float) -> None:
        if not 1.0 - H < self.alpha:
            raise DomainError(f"alpha={self.alpha} must exceed 1-H={1 - H}")


def _alpha(alpha) -> float:
    if isinstance(alpha, FracOrder):
        return alpha.alpha
    if hasattr(alpha, "alpha") and alpha.alpha is not None:
        return float(alpha.alpha)
    return FracOrder(float(alpha)).alpha


@dataclass
class NormReport:
    w_alpha_1: float
    w_alpha_inf: float
    holder: float
    lambda_g: float
    b_alpha_2: float = 0.0
    alpha: float = 0.0
    eta: float = 0.0
    extra: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in
                ("w_alpha_1", "w_alpha_inf", "holder", "lambda_g", "b_alpha_2", "alpha", "eta")}


# --------------------------------------------------------------------------
# grid helpers

def _as_2d(values) -> np.ndarray:
    v = np.asarray(values, dtype=float)
    return v[:, None] if v.ndim == 1 else v


def _restrict(times, vals, lo, hi):
    """Nodes of ``[lo, hi]`` with both ends inserted (linear interpolation)."""
    t = np.asarray(times, dtype=float)
    if lo < t[0] - 1e-14 or hi > t[-1] + 1e-14 or not lo < hi:
        raise DomainError(f"window [{lo}, {hi}] not inside [{t[0]}, {t[-1]}]")
    inner = (t > lo) & (t < hi)
    tt = np.concatenate([[lo], t[inner], [hi]])
    vv = np.stack([np.interp(tt, t, vals[:, i]) for i in range(vals.shape[1])], axis=1)
    # keep exact node values where the window ends on a node
    for end, idx in ((lo, 0), (hi, -1)):
        hit = np.nonzero(np.abs(t - end) <= 1e-14 * max(1.0, abs(end)))[0]
        if hit.size:
            vv[idx] = vals[hit[0]]
    return tt, vv


def _locate(times, r):
    k = np.searchsorted(times, r, side="right") - 1
    return np.clip(k, 0, times.size - 2)


def _pow(x, p):
    # x^p with 0^p := 0 (the matching coefficient vanishes there)
    out = np.zeros_like(x)
    pos = x > 0
    out[pos] = x[pos] ** p
    return out


# --------------------------------------------------------------------------
# Weyl derivatives for piecewise-linear data

def _forward_at(t, f, r, alpha, chunk=2_000_000):
    """``Gamma(1-alpha) D^alpha_{t0+} f(r)`` for points ``r`` strictly inside ``(t0, tM]``."""
    M = t.size - 1
    m = np.diff(f, axis=0) / np.diff(t)[:, None]
    k = _locate(t, r)
    out = np.empty((r.size, f.shape[1]))
    step = max(1, chunk // max(M, 1))
    cells = np.arange(M)
    for lo in range(0, r.size, step):
        rr, kk = r[lo:lo + step], k[lo:lo + step]
        own = rr - t[kk]
        fr = f[kk] + m[kk] * own[:, None]
        mask = cells[None, :] < kk[:, None]
        tau0 = np.where(mask, rr[:, None] - t[None, 1:], 1.0)
        tau1 = np.where(mask, rr[:, None] - t[None, :-1], 1.0)
        # D_j = f(r) - L_j(r) with L_j anchored at t_{j+1}; exact 0 slope mismatch on j = k-1
        D = (f[kk][:, None, :] - f[None, 1:, :]) + (m[kk] * own[:, None])[:, None, :] \
            - m[None, :, :] * tau0[:, :, None]
        w1 = np.where(mask, _pow(tau0, -alpha) - tau1 ** -alpha, 0.0)
        w2 = np.where(mask, alpha * (tau1 ** (1 - alpha) - tau0 ** (1 - alpha)) / (1 - alpha), 0.0)
        inner = np.einsum("pj,pjn->pn", w1, D) + np.einsum("pj,jn->pn", w2, m)
        inner += alpha * m[kk] * (own ** (1 - alpha))[:, None] / (1 - alpha)
        out[lo:lo + step] = fr * ((rr - t[0]) ** -alpha)[:, None] + inner
    return out


def _backward_at(t, g, r, alpha, chunk=2_000_000):
    """``Gamma(alpha) * Dt^{1-alpha}_{tM-} g_{tM-}(r)`` for ``r`` in ``[t0, tM)``."""
    M = t.size - 1
    m = np.diff(g, axis=0) / np.diff(t)[:, None]
    k = _locate(t, r)
    out = np.empty((r.size, g.shape[1]))
    step = max(1, chunk // max(M, 1))
    cells = np.arange(M)
    for lo in range(0, r.size, step):
        rr, kk = r[lo:lo + step], k[lo:lo + step]
        own = t[kk + 1] - rr
        gr_minus_b = (g[kk + 1] - g[-1]) - m[kk] * own[:, None]
        mask = cells[None, :] > kk[:, None]
        sig0 = np.where(mask, t[None, :-1] - rr[:, None], 1.0)
        sig1 = np.where(mask, t[None, 1:] - rr[:, None], 1.0)
        # E_j = g(r) - L_j(r) with L_j anchored at t_j
        E = (g[kk + 1][:, None, :] - g[None, :-1, :]) - (m[kk] * own[:, None])[:, None, :] \
            + m[None, :, :] * sig0[:, :, None]
        w1 = np.where(mask, _pow(sig0, alpha - 1) - sig1 ** (alpha - 1), 0.0)
        w2 = np.where(mask, -(1 - alpha) * (sig1 ** alpha - sig0 ** alpha) / alpha, 0.0)
        inner = np.einsum("pj,pjn->pn", w1, E) + np.einsum("pj,jn->pn", w2, m)
        inner -= (1 - alpha) * m[kk] * (own ** alpha)[:, None] / alpha
        out[lo:lo + step] = gr_minus_b * ((t[-1] - rr) ** (alpha - 1))[:, None] + inner
    return out


def weyl_forward(f: GridPath, alpha, a: float | None = None) -> GridPath:
    """``D^alpha_{a+} f`` at the grid nodes after ``a``.

    The node at ``a`` itself is singular and is dropped with a
    ``SingularNodeWarning``.
    """
    al = _alpha(alpha)
    a = f.times[0] if a is None else float(a)
    t, v = _restrict(f.times, _as_2d(f.values), a, f.times[-1])
    warnings.warn(f"node t={a} is singular for the forward derivative and was dropped",
                  SingularNodeWarning, stacklevel=2)
    d = _forward_at(t, v, t[1:], al) / special.gamma(1 - al)
    if t.size - 1 < 2:
        raise ContractError("need at least two nodes after the singular one")
    return GridPath(t[1:], d)


def weyl_backward(g: GridPath, alpha, b: float | None = None) -> GridPath:
    """``D^{1-alpha}_{b-} g_{b-}`` (real form, see module docstring) at the nodes before ``b``.

    ``alpha`` is the order paired with the forward derivative; the derivative
    taken here has order ``1 - alpha``.  The node at ``b`` is dropped with a
    ``SingularNodeWarning``.
    """
    al = _alpha(alpha)
    b = g.times[-1] if b is None else float(b)
    t, v = _restrict(g.times, _as_2d(g.values), g.times[0], b)
    warnings.warn(f"node t={b} is singular for the backward derivative and was dropped",
                  SingularNodeWarning, stacklevel=2)
    if t.size - 1 < 2:
        raise ContractError("need at least two nodes before the singular one")
    d = _backward_at(t, v, t[:-1], al) / special.gamma(al)
    return GridPath(t[:-1], d)


# --------------------------------------------------------------------------
# generalized Riemann-Stieltjes integral

_OUTER_ORDER = 16
_OUTER_GRADING = 4.0


def _outer_rule(t):
    """Graded Gauss-Legendre nodes/weights on both halves of every cell."""
    z, w = np.polynomial.legendre.leggauss(_OUTER_ORDER)
    z = 0.5 * (z + 1.0)
    w = 0.5 * w
    zp = z ** _OUTER_GRADING
    jac = _OUTER_GRADING * z ** (_OUTER_GRADING - 1.0) * w
    half = 0.5 * np.diff(t)
    left = t[:-1, None] + half[:, None] * zp[None, :]
    right = t[1:, None] - half[:, None] * zp[None, :]
    wt = half[:, None] * jac[None, :]
    r = np.concatenate([left, right], axis=1).ravel()
    ww = np.concatenate([wt, wt], axis=1).ravel()
    return r, ww


def _young(t, f, g, alpha):
    """``int f dg`` over ``[t0, tM]`` for piecewise-linear f, g (broadcast over modes)."""
    r, w = _outer_rule(t)
    Df = _forward_at(t, f, r, alpha) / special.gamma(1 - alpha)
    Dg = _backward_at(t, g, r, alpha) / special.gamma(alpha)
    return -np.einsum("p,pn->n", w, Df * Dg)


def rs_integral(f: GridPath, g: GridPath, alpha, window=None, check_norms: bool = True,
                norm_cap: float = NORM_CAP) -> np.ndarray:
    """``int_s^t f dg`` through Weyl derivatives, componentwise over modes.

    A scalar path on either side broadcasts against a multi-mode path on the
    other.  The window integral is computed in compensated form
    ``f(s)(g(t)-g(s)) + int_s^t (f - f(s)) dg`` which removes the
    ``f(s)(r-s)^{-alpha}`` singularity of the forward derivative.
    """
    f.check_same_grid(g)
    al = _alpha(alpha)
    lo, hi = (f.times[0], f.times[-1]) if window is None else (float(window[0]), float(window[1]))
    fv, gv = _as_2d(f.values), _as_2d(g.values)
    if fv.shape[1] != gv.shape[1] and 1 not in (fv.shape[1], gv.shape[1]):
        raise ContractError(f"mode counts {fv.shape[1]} and {gv.shape[1]} do not broadcast")
    if lo == hi:
        return np.zeros(max(fv.shape[1], gv.shape[1]))
    t, fw = _restrict(f.times, fv, lo, hi)
    _, gw = _restrict(g.times, gv, lo, hi)
    if check_norms:
        nf = _w_alpha_1(t, fw, al)
        ng = _lambda_norm(t, gw, al)
        if not (np.isfinite(nf) and nf <= norm_cap):
            raise IntegrabilityError(f"||f||_(alpha,1) = {nf:.3g} exceeds the cap {norm_cap:g}")
        if not (np.isfinite(ng) and ng <= norm_cap):
            raise IntegrabilityError(f"||g||_(1-alpha,0,T) = {ng:.3g} exceeds the cap {norm_cap:g}")
    f0 = fw[0]
    return f0 * (gw[-1] - gw[0]) + _young(t, fw - f0, gw, al)


def rs_integral_operator(Gfam, u: GridPath, alpha, lambdas=None, return_bound: bool = False,
                         check_norms: bool = False):
    """``int G(s) du = sum_i int G(s) e_i du_i`` for an operator path ``G``.

    ``Gfam`` has shape ``(M+1, n, n)``; column ``i`` of ``G(s)`` is ``G(s) e_i``.
    ``u`` is written in the eigenbasis of the noise covariance, so the
    ``sqrt(lambda_i)`` weights and ``Q^{-1/2}`` cancel on every mode with
    ``lambda_i > 0``; a nonzero ``u_i`` on a mode with ``lambda_i = 0`` is not
    in the Cameron-Martin range and is rejected.

    With ``return_bound`` also returns ``(Lambda, sup_i ||G e_i||_(alpha,1))``
    where ``Lambda = sum_i Lambda_(alpha, u_i)``.
    """
    G = np.asarray(Gfam, dtype=float)
    uv = _as_2d(u.values)
    if G.ndim != 3 or G.shape[0] != u.times.size or G.shape[2] != uv.shape[1]:
        raise ContractError(f"operator path of shape {G.shape} does not match u {uv.shape}")
    n_in = uv.shape[1]
    if lambdas is not None:
        lam = np.asarray(lambdas, dtype=float)
        if lam.size != n_in:
            raise ContractError(f"{lam.size} covariance eigenvalues for {n_in} modes")
        bad = (lam == 0) & np.any(np.abs(uv) > 0, axis=0)
        if np.any(bad):
            raise ContractError(f"u has mass on modes {np.nonzero(bad)[0].tolist()} where lambda=0")
    al = _alpha(alpha)
    out = np.zeros(G.shape[1])
    Lam, supG = 0.0, 0.0
    for i in range(n_in):
        col = GridPath(u.times, G[:, :, i])
        ui = GridPath(u.times, uv[:, i])
        if np.any(uv[:, i] != 0):
            out += rs_integral(col, ui, al, check_norms=check_norms)
        if return_bound:
            Lam += _lambda_norm(u.times, uv[:, [i]], al) / (special.gamma(1 - al) * special.gamma(al))
            supG = max(supG, _w_alpha_1(u.times, G[:, :, i], al))
    if return_bound:
        return out, Lam, supG
    return out


# --------------------------------------------------------------------------
# norms

_NORM_ORDER = 4


def _gl(n):
    z, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (z + 1.0), 0.5 * w


def _inner_back(t, f, alpha, chunk=4_000_000):
    """``Phi(t_k) = int_{t0}^{t_k} ||f(t_k) - f(s)|| (t_k - s)^{-alpha-1} ds`` at every node."""
    M = t.size - 1
    z, w = _gl(_NORM_ORDER)
    dt = np.diff(t)
    m = np.diff(f, axis=0) / dt[:, None]
    s = (t[:-1, None] + dt[:, None] * z[None, :]).ravel()
    ws = (dt[:, None] * w[None, :]).ravel()
    cell = np.repeat(np.arange(M), z.size)
    fs = f[cell] + m[cell] * (s - t[cell])[:, None]
    slope_norm = np.linalg.norm(m, axis=1)
    phi = np.zeros(M + 1)
    step = max(1, chunk // max(s.size * f.shape[1], 1))
    for lo in range(1, M + 1, step):
        ks = np.arange(lo, min(M + 1, lo + step))
        far = cell[None, :] < (ks[:, None] - 1)
        diff = np.linalg.norm(f[ks][:, None, :] - fs[None, :, :], axis=2)
        dist = np.where(far, t[ks][:, None] - s[None, :], 1.0)
        phi[ks] = np.sum(np.where(far, ws * diff * dist ** (-alpha - 1), 0.0), axis=1)
        # adjacent cell: ||f(t_k) - f(s)|| = |slope| (t_k - s) exactly
        phi[ks] += slope_norm[ks - 1] * dt[ks - 1] ** (1 - alpha) / (1 - alpha)
    return phi


def _w_alpha_1(t, f, alpha):
    f = _as_2d(f)
    z, w = _gl(_NORM_ORDER)
    dt = np.diff(t)
    m = np.diff(f, axis=0) / dt[:, None]
    # int ||f(s)|| (s - t0)^{-alpha} ds with a graded rule on the first cell
    zp, jac = z ** 2, 2 * z * w
    s = t[:-1, None] + dt[:, None] * zp[None, :]
    vals = np.linalg.norm(f[:-1, None, :] + m[:, None, :] * (s - t[:-1, None])[..., None], axis=2)
    first = np.sum(dt[:, None] * jac[None, :] * vals * (s - t[0]) ** -alpha)
    phi = _inner_back(t, f, alpha)
    second = np.sum(0.5 * (phi[1:] + phi[:-1]) * dt)
    return float(first + second)


def _lambda_norm(t, g, alpha, chunk=4_000_000):
    """``||g||_{1-alpha,0,T}``: sup over node pairs ``s < t``."""
    g = _as_2d(g)
    M = t.size - 1
    z, w = _gl(_NORM_ORDER)
    dt = np.diff(t)
    m = np.diff(g, axis=0) / dt[:, None]
    slope_norm = np.linalg.norm(m, axis=1)
    zeta = t[:-1, None] + dt[:, None] * z[None, :]
    gz = g[:-1, None, :] + m[:, None, :] * (zeta - t[:-1, None])[..., None]
    best = 0.0
    step = max(1, chunk // max(M * z.size * g.shape[1], 1))
    for lo in range(0, M, step):
        iv = np.arange(lo, min(M, lo + step))
        # C[i, j] = int_{cell j} ||g(zeta) - g_i|| (zeta - t_i)^{alpha-2} dzeta for j > i
        diff = np.linalg.norm(gz[None, :, :, :] - g[iv][:, None, None, :], axis=3)
        dist = zeta[None, :, :] - t[iv][:, None, None]
        far = np.arange(M)[None, :] > iv[:, None]
        C = np.where(far, np.sum(w * diff * np.abs(dist) ** (alpha - 2), axis=2) * dt[None, :], 0.0)
        C[np.arange(iv.size), iv] = slope_norm[iv] * dt[iv] ** alpha / alpha
        cum = np.cumsum(C, axis=1)
        # pair (t_i, t_{j+1})
        inc = np.linalg.norm(g[None, 1:, :] - g[iv][:, None, :], axis=2)
        span = t[None, 1:] - t[iv][:, None]
        ok = np.arange(M)[None, :] >= iv[:, None]
        val = np.where(ok, inc / np.where(ok, span, 1.0) ** (1 - alpha) + cum, 0.0)
        best = max(best, float(np.max(val)))
    return best


def _holder(t, f, eta, chunk=4_000_000):
    f = _as_2d(f)
    M = t.size - 1
    best = 0.0
    step = max(1, chunk // max((M + 1) * f.shape[1], 1))
    for lo in range(0, M, step):
        iv = np.arange(lo, min(M, lo + step))
        inc = np.linalg.norm(f[None, :, :] - f[iv][:, None, :], axis=2)
        span = t[None, :] - t[iv][:, None]
        ok = span > 0
        best = max(best, float(np.max(np.where(ok, inc / np.where(ok, span, 1.0) ** eta, 0.0))))
    return float(np.max(np.linalg.norm(f, axis=1))) + best


def path_norms(f: GridPath, alpha, eta: float | None = None) -> NormReport:
    """Fractional and Holder norms of a piecewise-linear path.

    ``eta`` (Holder exponent) defaults to ``1 - alpha``.  ``lambda_g`` is the
    integrator constant ``||f||_{1-alpha,0,T} / (Gamma(1-alpha) Gamma(alpha))``
    that bounds ``|int h df| <= lambda_g ||h||_{alpha,1}``.
    """
    al = _alpha(alpha)
    eta = 1.0 - al if eta is None else float(eta)
    if not 0 < eta <= 1:
        raise DomainError(f"Holder exponent must lie in (0, 1], got {eta}")
    if f.batched:
        raise ContractError("path_norms takes a single path")
    t, v = f.times, _as_2d(f.values)
    phi = _inner_back(t, v, al)
    sup_f = np.linalg.norm(v, axis=1)
    w_inf = float(np.max(sup_f + phi))
    b2 = float(np.sqrt(np.max(sup_f) ** 2 + np.sum(0.5 * (phi[1:] ** 2 + phi[:-1] ** 2) * np.diff(t))))
    lam = _lambda_norm(t, v, al) / (special.gamma(1 - al) * special.gamma(al))
    return NormReport(w_alpha_1=_w_alpha_1(t, v, al), w_alpha_inf=w_inf, holder=_holder(t, v, eta),
                      lambda_g=float(lam), b_alpha_2=b2, alpha=al, eta=eta)


# --------------------------------------------------------------------------
# Beta-type integral inequalities

def beta_lemma_sides(a: float, d: float, r: float, t: float):
    """Left sides and common right side of the two Beta-function inequalities.

    Returns ``(int_0^r (r-s)^{-a} (t-s)^{-d} ds, int_r^t (s-r)^{-a} (t-s)^{-d} ds,
    (t-r)^{1-a-d} B(1-a, a+d-1))``.  The second left side has the closed form
    ``(t-r)^{1-a-d} B(1-a, 1-d)`` (infinite for ``d >= 1``).
    """
    left, _ = integrate.quad(lambda s: (t - s) ** -d, 0.0, r, weight="alg", wvar=(0.0, -a),
                             epsabs=0.0, epsrel=1e-10, limit=200)
    right = (t - r) ** (1 - a - d) * special.beta(1 - a, 1 - d) if d < 1 else np.inf
    rhs = (t - r) ** (1 - a - d) * special.beta(1 - a, a + d - 1) if a + d > 1 else np.nan
    return left, right, rhs


def exp_kernel_integral(a: float, d: float, t: float, rho: float) -> float:
    """``int_0^t exp(-rho (t-r)) (t-r)^{-a} r^{-d} dr``."""
    if t <= 0:
        return 0.0
    val, _ = integrate.quad(lambda r: np.exp(-rho * (t - r)), 0.0, t, weight="alg",
                            wvar=(-d, -a), epsabs=0.0, epsrel=1e-10, limit=400)
    return val


def exp_kernel_sup(a: float, d: float, rho: float, horizon: float = 1.0, n: int = 200) -> float:
    """``sup_{0 < t <= horizon}`` of :func:`exp_kernel_integral`, on a log grid."""
    # the integral equals rho^{a+d-1} F(rho t); F peaks at O(1) arguments
    x = np.unique(np.concatenate([np.geomspace(1e-3, 50.0, n), [rho * horizon]]))
    x = x[x <= rho * horizon]
    return max(exp_kernel_integral(a, d, xi / rho, rho) for xi in x)


def exp_kernel_constant(a: float, d: float, n: int = 200) -> float:
    """Smallest ``C`` with ``sup_t int ... <= C rho^{a+d-1}`` for every ``rho``."""
    return exp_kernel_sup(a, d, 1.0, horizon=60.0, n=n)


def exp_kernel_slope(a: float, d: float, rhos, horizon: float = 1.0, sup: bool = True) -> float:
    """Log-log slope of the exponential-kernel integral against ``rho``.

    With ``sup=True`` the integral is maximized over ``t`` (slope ``a+d-1``);
    at fixed ``t = horizon`` the decay is the faster ``rho^{a-1}``.
    """
    rhos = np.asarray(rhos, dtype=float)
    if sup:
        vals = [exp_kernel_sup(a, d, rho, horizon) for rho in rhos]
    else:
        vals = [exp_kernel_integral(a, d, horizon, rho) for rho in rhos]
    return float(np.polyfit(np.log(rhos), np.log(vals), 1)[0])


def verify_beta_bounds(samples: int, rng) -> BoundReport:
    """Spot-check both Beta-type inequalities on random admissible parameters.

    ``constants`` holds the max ratio left/right per inequality (<= 1 means
    the inequality held on every draw).  For the exponential-kernel bound the
    constant is calibrated per ``(a, d)`` as the supremum over ``rho t``.
    ``details["second_violations"]`` counts draws where the second Beta
    inequality failed; it requires ``d <= 1 - a/2`` in addition to the stated
    hypotheses.
    """
    if samples < 1:
        raise DomainError("samples must be >= 1")
    gen = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    worst1 = worst2 = worst3 = 0.0
    violations2 = 0
    violations2_in_range = 0
    for _ in range(samples):
        a = gen.uniform(0.05, 0.98)
        d = gen.uniform(1.0 - a + 0.02, min(0.98, 2.0 - a))
        t = gen.uniform(0.1, 2.0)
        r = t * gen.uniform(0.05, 0.95)
        left, right, rhs = beta_lemma_sides(a, d, r, t)
        worst1 = max(worst1, left / rhs)
        ratio2 = right / rhs
        worst2 = max(worst2, ratio2)
        if ratio2 > 1 + 1e-9:
            violations2 += 1
            if d <= 1 - a / 2:
                violations2_in_range += 1
    n_exp = max(1, min(samples, 20))
    for _ in range(n_exp):
        a = gen.uniform(0.0, 0.9)
        d = gen.uniform(0.0, 0.95 - a)
        C = exp_kernel_constant(a, d, n=60)
        rho = float(np.exp(gen.uniform(0.0, np.log(200.0))))
        t = gen.uniform(0.05, 2.0)
        worst3 = max(worst3, exp_kernel_integral(a, d, t, rho) / (C * rho ** (a + d - 1)))
    consts = {"beta_left": worst1, "beta_right": worst2, "exp_kernel": worst3}
    return BoundReport(constants=consts, samples=samples,
                       finite=all(np.isfinite(v) for v in consts.values()),
                       details={"second_violations": violations2,
                                "second_violations_with_d_le_1_minus_a_half": violations2_in_range})

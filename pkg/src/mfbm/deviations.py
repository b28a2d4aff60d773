"""Rate functions, minimal controls and Monte Carlo tail diagnostics.

LDP rate of a path ``phi``::

    u*(t) = int_0^t g(phi)^{-1} (phi' - A phi - bbar(phi)) ds
    I(phi) = 1/2 int_0^T ||KH^{-1} u*||_1^2 dt,   ||x||_1^2 = sum_i x_i^2 / lambda_i

MDP rate: the same with the drift linearised along the averaged path,
``phi' - (A + Dbbar(xbar)) phi``, and ``phi(0) = 0``.  ``phi'`` comes from
centred differences with second-order one-sided ends.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy import special, stats
from scipy.integrate import cumulative_trapezoid, quad
from scipy.special import logsumexp
from statsmodels.stats.proportion import proportion_confint

from . import rng as _rng
from .coefficients import CoefficientSystem, as_bbar, as_dbbar, as_g
from .errors import CapabilityError, ConfigError, ContractError, RegimeError, SingularControlError
from .noise import CovarianceSpec, HurstParam, apply_KH_inverse, fbm_covariance, sample_cylindrical_fbm
from .paths import GridPath
from .solvers import ScaleParams, classify_regime, solve_slow_fast
from .spectral import SpectralSpace

COND_MAX = 1e8


@dataclass
class RateReport:
    rate: float
    minimal_control: GridPath
    minimal_control_dot: GridPath | None
    quadrature_error: float
    regime: str
    H: float
    weights: np.ndarray = field(default=None, repr=False)
    extra: dict = field(default_factory=dict)

    def recompute(self) -> float:
        """``1/2 ||udot||^2_{L2(V1)}`` from the stored cell values."""
        if self.minimal_control_dot is None:
            return self.rate
        return _energy(self.minimal_control_dot, self.weights)

    def to_dict(self) -> dict:
        f = lambda v: float(v) if np.isfinite(v) else str(v)
        return {"rate": f(self.rate), "quadrature_error": f(self.quadrature_error), "regime": self.regime,
                "H": self.H, **{k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in self.extra.items()}}

    def to_json(self, path=None) -> str:
        txt = json.dumps(self.to_dict(), indent=2)
        if path is not None:
            Path(path).write_text(txt)
        return txt


def _energy(hdot: GridPath, weights) -> float:
    v = np.asarray(hdot.values)
    dt = np.diff(hdot.times)
    w = np.where(weights > 0, 1.0 / np.where(weights > 0, weights, 1.0), 0.0)
    return 0.5 * float(np.sum(dt[:, None] * v ** 2 * w))


def _solve_residual(G, r, times, what):
    """``G^{-1} r`` node by node with a conditioning check."""
    cond = np.linalg.cond(G)
    bad = np.nonzero(~(cond <= COND_MAX))[0]
    if bad.size:
        k = int(bad[0])
        raise SingularControlError(f"{what} is ill-conditioned at step {k} (t={times[k]:.6g}, "
                                   f"cond={cond[k]:.3g} > {COND_MAX:.0e})")
    return np.linalg.solve(G, r[..., None])[..., 0]


def _phi_values(phi: GridPath, n):
    v = np.asarray(phi.values, dtype=float)
    if v.ndim != 2 or v.shape[1] != n:
        raise ContractError(f"path of shape {v.shape} does not live in a space of dim {n}")
    if phi.centering != "node":
        raise ContractError("rate functions take node-centred paths")
    return v


def minimal_control_ldp(phi: GridPath, bbar, g, space: SpectralSpace, x0=None) -> GridPath:
    """Minimal-norm control ``u*`` generating ``phi`` through the LDP skeleton.

    Returns the integrated control on the nodes of ``phi``; the pointwise
    derivative is kept in ``meta["udot"]``.
    """
    n = space.dim
    v = _phi_values(phi, n)
    if x0 is not None and not np.allclose(v[0], np.asarray(x0, dtype=float), rtol=1e-12, atol=1e-12):
        raise ContractError(f"phi(0) = {v[0].tolist()} differs from x0 = {np.asarray(x0).tolist()}")
    t = phi.times
    dphi = np.gradient(v, t, axis=0, edge_order=2)
    res = dphi + space.eigenvalues * v - as_bbar(bbar)(v)
    ud = _solve_residual(np.asarray(as_g(g, n)(v), dtype=float), res, t, "g(phi)")
    u = cumulative_trapezoid(ud, t, axis=0, initial=0.0)
    return GridPath(t, u, meta={"udot": ud})


def minimal_control_mdp(phi: GridPath, xbar: GridPath, Dbbar, g, space: SpectralSpace) -> GridPath:
    n = space.dim
    v = _phi_values(phi, n)
    phi.check_same_grid(xbar)
    if not np.allclose(v[0], 0.0, atol=1e-12):
        raise ContractError("the MDP rate needs phi(0) = 0")
    t = phi.times
    xb = np.asarray(xbar.values, dtype=float)
    dphi = np.gradient(v, t, axis=0, edge_order=2)
    D = np.asarray(as_dbbar(Dbbar)(xb), dtype=float)
    res = dphi + space.eigenvalues * v - np.einsum("kij,kj->ki", D, v)
    ud = _solve_residual(np.asarray(as_g(g, n)(xb), dtype=float), res, t, "g(xbar)")
    u = cumulative_trapezoid(ud, t, axis=0, initial=0.0)
    return GridPath(t, u, meta={"udot": ud})


def _weights(q1, n):
    if q1 is None:
        return np.ones(n)
    w = np.asarray(getattr(q1, "lambdas", q1), dtype=float)
    if w.shape != (n,):
        raise ContractError(f"Q1 has {w.size} eigenvalues, space has dim {n}")
    return w


def _rate_from_control(u: GridPath, H, weights, regime, error_estimate):
    Hf = float(getattr(H, "H", H))
    uv = np.asarray(u.values)
    dead = (weights == 0) & np.any(np.abs(uv) > 0, axis=0)
    if np.any(dead):
        return RateReport(math.inf, u, None, 0.0, regime, Hf, weights,
                          {"reason": f"control charges modes {np.nonzero(dead)[0].tolist()} with zero noise"})
    hdot = apply_KH_inverse(Hf, u)
    rate = _energy(hdot, weights)
    err = math.nan
    M = u.times.size - 1
    if error_estimate and M % 2 == 0 and M // 2 >= 32:
        coarse = GridPath(u.times[::2], uv[::2])
        err = abs(rate - _energy(apply_KH_inverse(Hf, coarse), weights))
    return RateReport(rate, u, hdot, err, regime, Hf, weights)


def rate_ldp(phi: GridPath, bbar, g, space: SpectralSpace, H, q1=None, *, x0=None,
             error_estimate: bool = False) -> RateReport:
    """``I(phi)``; ``+inf`` when the control charges a mode without noise.

    ``quadrature_error`` (with ``error_estimate``) is the change in the rate
    when the path is subsampled to every other node.
    """
    n = space.dim
    u = minimal_control_ldp(phi, bbar, g, space, x0)
    return _rate_from_control(u, H, _weights(q1, n), "ldp", error_estimate)


def rate_mdp(phi: GridPath, xbar: GridPath, Dbbar, g, space: SpectralSpace, H, q1=None, *,
             error_estimate: bool = False) -> RateReport:
    """Moderate-deviation rate ``I~(phi)`` with the drift linearised along ``xbar``."""
    n = space.dim
    u = minimal_control_mdp(phi, xbar, Dbbar, g, space)
    return _rate_from_control(u, H, _weights(q1, n), "mdp", error_estimate)


# --------------------------------------------------------------------------
# Gaussian reference quantities

def fbm_ou_variance(H, kappa, T) -> float:
    """``Var int_0^T exp(-kappa (T-s)) d beta^H_s`` for a scalar fBM.

    Integration by parts gives ``beta_T - kappa int f beta ds`` with
    ``f(s) = exp(-kappa (T-s))``.  Expanding the covariance, every term is a
    one-dimensional integral of an exponential against ``s^{2H}``,
    ``(T-s)^{2H}`` or ``|s-r|^{2H}`` (the last after the substitution
    ``d = s - r``), done with algebraic-weight quadrature.
    """
    Hf = float(getattr(H, "H", H))
    k, T = float(kappa), float(T)
    p = 2 * Hf
    if k == 0.0:
        return T ** p
    opts = dict(epsabs=0.0, epsrel=1e-13, limit=200)
    f = lambda s: np.exp(-k * (T - s))
    F0 = -math.expm1(-k * T) / k
    A = quad(f, 0.0, T, weight="alg", wvar=(p, 0.0), **opts)[0]
    Bm = quad(f, 0.0, T, weight="alg", wvar=(0.0, p), **opts)[0]
    D = quad(lambda d: -np.exp(-k * d) * np.expm1(2 * k * (d - T)), 0.0, T, weight="alg",
             wvar=(p, 0.0), **opts)[0] / k
    cross = 0.5 * (T ** p * F0 + A - Bm)
    return float(T ** p - 2 * k * cross + k ** 2 * (F0 * A - 0.5 * D))


def gaussian_terminal_moments(space: SpectralSpace, coeffs: CoefficientSystem, x0, T, H, q1=None,
                              epsilon: float = 1.0):
    """Mean and per-mode variance of ``X_T`` for a linear family with ``b_y = 0``.

    ``X`` then solves ``dX = -(lam + b_x) X dt + sqrt(eps) g dB^H`` mode by mode,
    so ``X_T`` is Gaussian with Duhamel mean and fBM-OU variance.
    """
    p = coeffs.params
    if not coeffs.name.startswith("linear_dissipative") or p.get("b_y", 1.0) != 0.0:
        raise CapabilityError("closed-form Gaussian moments need the linear family with b_y = 0")
    kap = space.eigenvalues + coeffs.slow_damping
    lam1 = _weights(q1, space.dim)
    m = np.exp(-kap * T) * np.asarray(x0, dtype=float)
    var = np.array([epsilon * coeffs.g_diag[i] ** 2 * lam1[i] * fbm_ou_variance(H, kap[i], T)
                    for i in range(space.dim)])
    return m, var


def gaussian_terminal_rate(x, mean, var_unit):
    """Terminal-value LDP rate ``sum_i (x_i - m_i)^2 / (2 s_i^2)`` of a Gaussian family.

    ``var_unit`` is the variance at ``eps = 1``.
    """
    x = np.asarray(x, dtype=float)
    return 0.5 * np.sum((x - mean) ** 2 / var_unit, axis=-1)


def gaussian_event_rate(event, mean, var_unit) -> float:
    """Infimum of the Gaussian terminal rate over a threshold event.

    Mode events: ``(a - m_i)^2 / (2 s_i^2)`` when ``a`` lies beyond the mean in
    the event direction, else 0.  Weighted-norm events centred at the mean:
    ``a^2 / (2 max_i w_i s_i^2)``.
    """
    mean = np.asarray(mean, dtype=float)
    var_unit = np.asarray(var_unit, dtype=float)
    if event.kind == "mode":
        i = event.mode
        gap = event.a - mean[i] if event.direction == ">=" else mean[i] - event.a
        return 0.0 if gap <= 0 else float(gap ** 2 / (2 * var_unit[i]))
    c = mean if event.center is None else np.asarray(event.center, dtype=float)
    if not np.allclose(c, mean, rtol=1e-10, atol=1e-12):
        raise CapabilityError("closed-form tail rates need the norm centred at the mean")
    w = np.ones_like(var_unit) if event.weights is None else np.asarray(event.weights, dtype=float)
    if event.direction == "<=":
        return 0.0
    return float(event.a ** 2 / (2 * np.max(w * var_unit)))


# --------------------------------------------------------------------------
# Monte Carlo

@dataclass
class TerminalEvent:
    """Threshold event on a functional of ``X_T``.

    kind ``"mode"``: ``X_T[mode] >= a`` (``direction="<="`` flips it).
    kind ``"weighted_norm"``: ``sqrt(sum_i w_i (X_T[i] - center_i)^2) >= a``.
    """

    kind: str
    a: float
    mode: int = 0
    direction: str = ">="
    center: np.ndarray | None = None
    weights: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in ("mode", "weighted_norm"):
            raise ConfigError(f"unknown event kind {self.kind!r}")
        if self.direction not in (">=", "<="):
            raise ConfigError("direction must be '>=' or '<='")

    def functional(self, xT):
        xT = np.asarray(xT, dtype=float)
        if self.kind == "mode":
            return xT[..., self.mode]
        c = 0.0 if self.center is None else np.asarray(self.center, dtype=float)
        w = 1.0 if self.weights is None else np.asarray(self.weights, dtype=float)
        return np.sqrt(np.sum(w * (xT - c) ** 2, axis=-1))

    def indicator(self, xT):
        f = self.functional(xT)
        return f >= self.a if self.direction == ">=" else f <= self.a

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "a": self.a, "mode": self.mode, "direction": self.direction}
        if self.center is not None:
            d["center"] = np.asarray(self.center).tolist()
        if self.weights is not None:
            d["weights"] = np.asarray(self.weights).tolist()
        return d


@dataclass
class McLdpReport:
    schedule: list
    replicas: np.ndarray
    hits: np.ndarray
    p_hat: np.ndarray
    ci_lo: np.ndarray
    ci_hi: np.ndarray
    estimates: np.ndarray
    est_lo: np.ndarray
    est_hi: np.ndarray
    rate_reference: float | None = None
    abort_fraction: np.ndarray | None = None
    flags: list = field(default_factory=list)
    event: dict | None = None

    @property
    def epsilons(self) -> np.ndarray:
        return np.array([s.epsilon for s in self.schedule])

    @property
    def usable(self) -> np.ndarray:
        return self.hits > 0

    def to_dict(self) -> dict:
        f = lambda a: [float(v) if np.isfinite(v) else None for v in np.asarray(a, dtype=float)]
        return {"epsilon": f(self.epsilons), "replicas": self.replicas.tolist(), "hits": self.hits.tolist(),
                "p_hat": f(self.p_hat), "ci_lo": f(self.ci_lo), "ci_hi": f(self.ci_hi),
                "minus_eps_log_p": f(self.estimates), "estimate_lo": f(self.est_lo),
                "estimate_hi": f(self.est_hi), "rate_reference": self.rate_reference,
                "abort_fraction": None if self.abort_fraction is None else f(self.abort_fraction),
                "flags": list(self.flags), "event": self.event,
                "schedule": [s.to_dict() for s in self.schedule]}

    def to_json(self, path=None) -> str:
        txt = json.dumps(self.to_dict(), indent=2)
        if path is not None:
            Path(path).write_text(txt)
        return txt

    def to_csv_string(self) -> str:
        rows = ["epsilon,p_hat,ci_lo,ci_hi,minus_eps_log_p,rate_reference"]
        ref = "" if self.rate_reference is None else repr(float(self.rate_reference))
        for i, e in enumerate(self.epsilons):
            est = "" if not np.isfinite(self.estimates[i]) else repr(float(self.estimates[i]))
            rows.append(",".join([repr(float(e)), repr(float(self.p_hat[i])), repr(float(self.ci_lo[i])),
                                  repr(float(self.ci_hi[i])), est, ref]))
        return "\n".join(rows) + "\n"

    def to_csv(self, path) -> None:
        Path(path).write_text(self.to_csv_string())


def _terminal_batches(space, coeffs, scales, x0, y0, times, H, q1, q2, seed, replicas, batch,
                      divergence="record"):
    """Yield ``(X_T, aborted)`` batch by batch; replica ``r`` always sees the same noise."""
    n = space.dim
    q1 = q1 if isinstance(q1, CovarianceSpec) else CovarianceSpec(np.ones(n) if q1 is None else q1)
    lam2 = np.ones(n) if q2 is None else np.asarray(getattr(q2, "lambdas", q2), dtype=float)
    y0 = np.zeros(n) if y0 is None else y0
    for start in range(0, replicas, batch):
        reps = range(start, min(replicas, start + batch))
        bh = sample_cylindrical_fbm(space, q1, H, times, seed, replicas=reps)
        res = solve_slow_fast(space, coeffs, scales, bh, None, x0, y0, q2=lam2, seed=seed, replicas=reps,
                              divergence=divergence, track_fast=coeffs.depends_on_y)
        yield np.asarray(res.slow.values)[:, -1], res.diagnostics["aborted"]


def _wilson(k, N, level):
    lo, hi = proportion_confint(k, N, alpha=1 - level, method="wilson")
    return float(lo), float(hi)


def mc_rare_event(space: SpectralSpace, coeffs: CoefficientSystem, scales_schedule, event: TerminalEvent,
                  replicas, rng=0, *, x0, times, y0=None, H=0.75, q1=None, q2=None,
                  rate_reference: float | None = None, level: float = 0.95, batch: int = 10_000,
                  min_replicas: int = 1000) -> McLdpReport:
    """Crude Monte Carlo of ``P(event)`` along an epsilon schedule.

    ``replicas`` is a count or one count per schedule entry.  All cells use
    the same seed, so replica ``r`` is driven by the same fBM at every
    epsilon.  Cells without hits get a one-sided Wilson upper bound on ``p``
    (a lower bound on ``-eps log p``) and no point estimate.
    """
    sched = list(scales_schedule)
    reps = np.broadcast_to(np.asarray(replicas, dtype=int), (len(sched),)).copy()
    if np.any(reps < min_replicas):
        raise ConfigError(f"Monte Carlo tails need at least {min_replicas} replicas per cell")
    seed = _rng.as_seed(rng)
    times = np.asarray(times, dtype=float)
    Hf = float(getattr(H, "H", H))
    hits = np.zeros(len(sched), dtype=int)
    valid = np.zeros(len(sched), dtype=int)
    aborts = np.zeros(len(sched))
    for i, s in enumerate(sched):
        k = N = 0
        for xT, ab in _terminal_batches(space, coeffs, s, x0, y0, times, Hf, q1, q2, seed, int(reps[i]), batch):
            ok = ~ab
            k += int(np.sum(event.indicator(xT[ok])))
            N += int(ok.sum())
        hits[i], valid[i] = k, N
        aborts[i] = 1 - N / reps[i]
    p = hits / valid
    lo = np.empty(len(sched))
    hi = np.empty(len(sched))
    for i in range(len(sched)):
        if hits[i] == 0:
            # one-sided bound at the requested level
            lo[i], hi[i] = 0.0, _wilson(0, valid[i], 2 * level - 1)[1]
        else:
            lo[i], hi[i] = _wilson(hits[i], valid[i], level)
    eps = np.array([s.epsilon for s in sched])
    with np.errstate(divide="ignore"):
        est = np.where(hits > 0, -eps * np.log(np.where(hits > 0, p, 1.0)), np.nan)
        est_lo = -eps * np.log(hi)
        est_hi = np.where(lo > 0, -eps * np.log(np.where(lo > 0, lo, 1.0)), np.inf)
    flags = []
    if np.all(hits == 0):
        flags.append("insufficient tail resolution")
    if np.any(aborts > 0.01):
        flags.append("divergence fraction above 1%")
    return McLdpReport(sched, valid, hits, p, lo, hi, est, est_lo, est_hi,
                       None if np.all(hits == 0) else rate_reference, aborts, flags, event.to_dict())


def laplace_functional(space: SpectralSpace, coeffs: CoefficientSystem, scales: ScaleParams,
                       h_functional: Callable, replicas: int, rng=0, *, bound: float | None, x0, times,
                       y0=None, H=0.75, q1=None, q2=None, level: float = 0.95, batch: int = 10_000):
    """``-eps log E exp(-h(X_T)/eps)`` with a delta-method confidence interval.

    ``h_functional`` maps terminal states ``(R, n)`` to ``(R,)``; ``bound``
    must be a finite declared bound on ``|h|``.  Returns
    ``(estimate, (lo, hi))``.
    """
    if bound is None or not np.isfinite(bound):
        raise ContractError("laplace_functional needs a finite declared bound on h")
    eps = scales.epsilon
    if eps <= 0:
        raise ConfigError("laplace_functional needs epsilon > 0")
    seed = _rng.as_seed(rng)
    hv = []
    for xT, ab in _terminal_batches(space, coeffs, scales, x0, y0, np.asarray(times, dtype=float),
                                    float(getattr(H, "H", H)), q1, q2, seed, replicas, batch):
        hv.append(np.asarray(h_functional(xT[~ab]), dtype=float))
    h = np.concatenate(hv)
    if np.any(np.abs(h) > bound * (1 + 1e-12)):
        raise ContractError(f"h exceeds its declared bound {bound} (max |h| = {np.max(np.abs(h)):.6g})")
    if np.ptp(h) == 0:
        return float(h[0]), (float(h[0]), float(h[0]))
    N = h.size
    est = -eps * (logsumexp(-h / eps) - math.log(N))
    # weights relative to the minimum keep the CI computation in range
    w = np.exp(-(h - h.min()) / eps)
    mw, sw = w.mean(), w.std(ddof=1) / math.sqrt(N)
    z = stats.norm.ppf(0.5 + level / 2)
    lo_w, hi_w = max(mw - z * sw, np.finfo(float).tiny), mw + z * sw
    return float(est), (float(h.min() - eps * math.log(hi_w)), float(h.min() - eps * math.log(lo_w)))


def variational_terminal_value(h_functional: Callable, mean, var_unit, grid_axes) -> float:
    """``inf_x {h(x) + I_T(x)}`` by grid search for a Gaussian terminal rate."""
    mesh = np.stack(np.meshgrid(*[np.asarray(a, dtype=float) for a in grid_axes], indexing="ij"), axis=-1)
    pts = mesh.reshape(-1, mesh.shape[-1])
    vals = np.asarray(h_functional(pts), dtype=float) + gaussian_terminal_rate(pts, mean, var_unit)
    return float(np.min(vals))


# --------------------------------------------------------------------------
# verdict

@dataclass
class ComparisonVerdict:
    status: str
    ratio: float
    spearman: float
    monotone: bool
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"status": self.status, "ratio": self.ratio, "spearman": self.spearman,
                "monotone": self.monotone, **self.diagnostics}


def trend_spearman(epsilons, estimates, reference) -> float:
    """Spearman correlation between ``eps`` and ``|estimate - reference|``.

    Close to 1 when the estimates approach the reference as ``eps`` shrinks.
    """
    d = np.abs(np.asarray(estimates, dtype=float) - reference)
    e = np.asarray(epsilons, dtype=float)
    if np.ptp(d) == 0:
        return 1.0
    return float(stats.spearmanr(e, d)[0])


def rate_vs_mc(report: McLdpReport, rate_reference: float, *, band=(0.5, 1.5), min_rho: float = 0.8
               ) -> ComparisonVerdict:
    """PASS when the smallest-eps estimate is within ``band * reference`` and the trend points at it.

    MC noise alone never yields a failure; anything short of PASS is
    INCONCLUSIVE with the reason recorded.  Zero-hit cells are censored.
    """
    reg = classify_regime(report.schedule)
    if reg != 1:
        raise RegimeError(f"scale schedule is in Regime {reg}; no rate comparison outside Regime 1")
    use = report.usable & np.isfinite(report.estimates)
    diag = {"usable_cells": int(use.sum()), "censored_cells": int((~use).sum()),
            "rate_reference": rate_reference}
    if use.sum() < 2:
        diag["reason"] = "fewer than two usable epsilon cells"
        return ComparisonVerdict("INCONCLUSIVE", math.nan, math.nan, False, diag)
    eps = report.epsilons[use]
    est = report.estimates[use]
    i = int(np.argmin(eps))
    lo, hi = band[0] * rate_reference, band[1] * rate_reference
    tol = 1e-12
    within = lo - tol <= est[i] <= hi + tol
    ratio = est[i] / rate_reference if rate_reference != 0 else (1.0 if abs(est[i]) <= tol else math.inf)
    rho = trend_spearman(eps, est, rate_reference)
    order = np.argsort(-eps)
    dist = np.abs(est[order] - rate_reference)
    monotone = bool(np.all(np.diff(dist) <= tol) or rho >= min_rho)
    diag.update({"smallest_eps": float(eps[i]), "smallest_estimate": float(est[i]), "band": [lo, hi]})
    if within and monotone:
        return ComparisonVerdict("PASS", ratio, rho, monotone, diag)
    diag["reason"] = ("estimate outside the band" if not within else "") + \
        ("; " if not within and not monotone else "") + ("no monotone trend" if not monotone else "")
    return ComparisonVerdict("INCONCLUSIVE", ratio, rho, monotone, diag)

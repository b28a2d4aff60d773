"""Exponential-integrator schemes for the slow-fast system and its relatives.

Stochastic solvers work on a uniform slow grid.  On each slow step the fast
component is advanced with ``r`` sub-steps of size ``h <= delta/4`` using the
exact factors ``exp(-(lam + a) h / delta)``; the slow step then uses the
sub-step average of ``b(X_k, Y)``:

    X_{k+1} = e^{-k_s dt} X_k + phi1(k_s dt) [dt * mean_j b_rest(X_k, Y_j)
                                              + g(X_k)(sqrt(eps) dB_k + du_k)]

with ``k_s = lam + d`` (``d`` the slow damping of the family).  Fast noise
increments are rescaled per mode so each sub-step has the exact OU variance.

Deterministic equations (averaged, skeletons) use a Lawson (integrating
factor) RK4 scheme with the control derivative held constant per cell.

Arrays carry a leading replica axis internally; single-path inputs return
single-path outputs.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.interpolate import CubicSpline

from . import rng as _rng
from .coefficients import CoefficientSystem, as_bbar, as_dbbar, as_g
from .errors import ConfigError, ContractError, DivergenceError, DomainError, RegimeError, StiffnessError
from .paths import GridPath
from .spectral import SpectralSpace, phi1

REGIME1_MAX_RATIO = 0.1


@dataclass
class ScaleParams:
    """Scale parameters of one run.

    ``h_form`` selects the deviation speed: ``"ldp"`` (``eps^{-1/2}``),
    ``"clt"`` (1) or ``"power:p"`` (``eps^{-p}``); an explicit ``h`` wins.
    ``block`` is the Khasminskii block length.
    """

    epsilon: float
    delta: float
    h: float | None = None
    h_form: str | None = None
    block: float | None = None

    def __post_init__(self):
        self.epsilon = float(self.epsilon)
        self.delta = float(self.delta)
        if not 0.0 <= self.epsilon < 1.0:
            raise DomainError(f"epsilon must lie in [0, 1), got {self.epsilon}")
        if not 0.0 < self.delta < 1.0:
            raise DomainError(f"delta must lie in (0, 1), got {self.delta}")
        if self.block is not None and not self.block > 0:
            raise DomainError(f"block length must be > 0, got {self.block}")
        if self.h is None and self.h_form is not None:
            self.h = speed(self.epsilon, self.h_form)

    @property
    def ratio(self) -> float:
        return math.inf if self.epsilon == 0 else self.delta / self.epsilon

    @property
    def in_regime1(self) -> bool:
        return self.ratio <= REGIME1_MAX_RATIO

    def to_dict(self) -> dict:
        return {"epsilon": self.epsilon, "delta": self.delta, "ratio": self.ratio, "h": self.h,
                "h_form": self.h_form, "block": self.block}


def speed(eps: float, form: str) -> float:
    if eps <= 0:
        raise DomainError("the deviation speed needs epsilon > 0")
    if form == "ldp":
        return eps ** -0.5
    if form == "clt":
        return 1.0
    if form.startswith("power:"):
        p = float(form.split(":", 1)[1])
        return eps ** -p
    raise ConfigError(f"unknown speed form {form!r}; use ldp, clt or power:p")


def classify_regime(schedule) -> int:
    """1 when ``delta/eps`` shrinks toward 0 along the schedule, 2 if it stays put, 3 if it grows.

    Schedules are ordered by decreasing ``epsilon``.  A single pair counts as
    Regime 1 when its ratio is at most ``REGIME1_MAX_RATIO``.
    """
    sched = sorted(schedule, key=lambda s: -s.epsilon)
    ratios = np.array([s.ratio for s in sched])
    if ratios.size == 1:
        return 1 if ratios[0] <= REGIME1_MAX_RATIO else 2
    if ratios[-1] <= REGIME1_MAX_RATIO and ratios[-1] < ratios[0] and np.all(np.diff(ratios) <= 1e-15):
        return 1
    if np.allclose(ratios, ratios[0], rtol=0.05):
        return 2
    return 3 if ratios[-1] > ratios[0] else 2


def check_mdp_speed(schedule) -> bool:
    """``h -> inf`` and ``sqrt(eps) h -> 0`` along a decreasing-epsilon schedule."""
    sched = sorted(schedule, key=lambda s: -s.epsilon)
    h = np.array([s.h for s in sched], dtype=float)
    e = np.array([s.epsilon for s in sched])
    return bool(np.all(np.diff(h) > 0) and np.all(np.diff(np.sqrt(e) * h) < 0))


@dataclass
class SolveResult:
    slow: GridPath
    fast: GridPath | None = None
    diagnostics: dict = field(default_factory=dict)

    def to_csv(self, path) -> None:
        Path(path).write_text(self.to_csv_string())

    def to_csv_string(self) -> str:
        t = self.slow.times
        xs = self.slow.values
        ys = None if self.fast is None else self.fast.values
        n = xs.shape[-1]
        cols = ["t"] + [f"x_{i}" for i in range(n)]
        if ys is not None:
            cols += [f"y_{i}" for i in range(ys.shape[-1])]
        lines = []
        if xs.ndim == 3:
            lines.append(",".join(["replica"] + cols))
            for r in range(xs.shape[0]):
                for k, tk in enumerate(t):
                    row = [str(r), repr(float(tk))] + [repr(float(v)) for v in xs[r, k]]
                    if ys is not None:
                        row += [repr(float(v)) for v in ys[r, k]]
                    lines.append(",".join(row))
        else:
            lines.append(",".join(cols))
            for k, tk in enumerate(t):
                row = [repr(float(tk))] + [repr(float(v)) for v in xs[k]]
                if ys is not None:
                    row += [repr(float(v)) for v in ys[k]]
                lines.append(",".join(row))
        return "\n".join(lines) + "\n"

    def diagnostics_json(self, path=None) -> str:
        def conv(v):
            if isinstance(v, np.ndarray):
                return v.tolist()
            if isinstance(v, (np.floating, np.integer, np.bool_)):
                return v.item()
            return v
        txt = json.dumps({k: conv(v) for k, v in self.diagnostics.items()}, indent=2, sort_keys=True)
        if path is not None:
            Path(path).write_text(txt)
        return txt


# --------------------------------------------------------------------------
# helpers

def _uniform_step(times) -> float:
    dt = np.diff(times)
    if not np.allclose(dt, dt[0], rtol=1e-9, atol=0):
        raise ContractError("stochastic solvers need a uniform slow grid")
    return float(dt[0])


def _batch(values, R):
    """Give ``values`` a leading replica axis of size ``R``."""
    v = np.asarray(values, dtype=float)
    if v.ndim == 3:
        if v.shape[0] != R:
            raise ContractError(f"got {v.shape[0]} replicas, expected {R}")
        return v
    return np.broadcast_to(v, (R,) + v.shape)


def _state(v, R, n, name):
    v = np.asarray(v, dtype=float)
    if v.shape[-1:] != (n,):
        raise DomainError(f"{name} of shape {v.shape} does not live in a space of dim {n}")
    return np.array(np.broadcast_to(v, (R, n)), dtype=float)


class _FastNoise:
    """Wiener increments for the fast sub-steps, one slow step at a time."""

    def __init__(self, n, R, r, h, w: GridPath | None, q2=None, seed=None, replicas=None,
                 stream=_rng.STREAM_WIENER):
        self.r, self.n, self.R = r, n, R
        if w is not None:
            inc = np.diff(_batch(w.values, R), axis=1)
            self.inc = inc.reshape(R, -1, r, n)
            self.gens = None
        else:
            if seed is None or q2 is None:
                raise ContractError("on-the-fly fast noise needs a seed and a fast covariance")
            lam2 = np.asarray(getattr(q2, "lambdas", q2), dtype=float)
            if lam2.size != n:
                raise ContractError(f"fast covariance has {lam2.size} modes, space has {n}")
            reps = range(R) if replicas is None else list(replicas)
            self.scale = np.sqrt(lam2 * h)
            self.gens = [[_rng.substream(seed, stream, rep, i) if lam2[i] > 0 else None
                          for i in range(n)] for rep in reps]

    def step(self, k):
        if self.gens is None:
            return self.inc[:, k]
        out = np.zeros((self.R, self.r, self.n))
        for a, row in enumerate(self.gens):
            for i, g in enumerate(row):
                if g is not None:
                    out[a, :, i] = g.standard_normal(self.r)
        return out * self.scale


def _fast_setup(times, scales, w, q2, seed, replicas, n, R):
    dt = _uniform_step(times)
    M = times.size - 1
    hmax = scales.delta / 4.0
    if w is not None:
        fine = w.times
        if (fine.size - 1) % M:
            raise StiffnessError(f"fast grid of {fine.size - 1} steps does not refine {M} slow steps")
        r = (fine.size - 1) // M
        if not np.allclose(fine[::r], times, rtol=0, atol=1e-12 * max(1.0, times[-1])):
            raise ContractError("fast grid does not contain the slow grid nodes")
        if dt / r > hmax * (1 + 1e-9):
            need = int(math.ceil(dt / hmax - 1e-9))
            raise StiffnessError(
                f"fast step {dt / r:.3g} exceeds delta/4 = {hmax:.3g}; refine the fast grid to "
                f"at least {need * M} steps (step <= {hmax:.3g})")
    else:
        r = max(1, int(math.ceil(dt / hmax - 1e-9)))
    h = dt / r
    return dt, r, h, _FastNoise(n, R, r, h, w, q2, seed, replicas)


class _Divergence:
    def __init__(self, policy, R):
        if policy not in ("raise", "record"):
            raise ConfigError(f"divergence policy must be 'raise' or 'record', got {policy!r}")
        self.policy = policy
        self.aborted = np.zeros(R, dtype=bool)
        self.step = np.full(R, -1)

    def check(self, k, t, *states):
        bad = np.zeros_like(self.aborted)
        for s in states:
            bad |= ~np.all(np.isfinite(s), axis=-1)
        new = bad & ~self.aborted
        if np.any(new):
            if self.policy == "raise":
                raise DivergenceError(f"non-finite state at slow step {k} (t={t:.6g}) in replicas "
                                      f"{np.nonzero(new)[0][:10].tolist()}")
            self.aborted |= new
            self.step[new] = k
            for s in states:
                s[new] = np.nan


def _noise_batch(bh, R_hint):
    if bh is None:
        return None, R_hint
    v = np.asarray(bh.values, dtype=float)
    return v, (v.shape[0] if v.ndim == 3 else R_hint)


# --------------------------------------------------------------------------
# the coupled stepper

def _run(space, coeffs: CoefficientSystem, scales: ScaleParams, times, bh, w, x0, y0, *,
         u=None, v=None, block=None, q2=None, seed=None, replicas=None, divergence="raise",
         track_fast=True):
    n = space.dim
    lam = space.eigenvalues
    times = np.asarray(times, dtype=float)
    M = times.size - 1
    bh_vals, R = _noise_batch(bh, 1)
    if w is not None and np.ndim(w.values) == 3:
        R = w.values.shape[0]
    if replicas is not None:
        R = len(range(replicas)) if isinstance(replicas, int) else len(list(replicas))
    reps = None if replicas is None else (range(replicas) if isinstance(replicas, int) else list(replicas))
    single = (bh_vals is None or bh_vals.ndim == 2) and (w is None or np.ndim(w.values) == 2) \
        and replicas is None
    if bh is not None:
        bh.check_same_grid(GridPath(times, np.zeros((times.size, n))))
    eps = scales.epsilon
    need_fast = track_fast or coeffs.depends_on_y or block is not None
    if not track_fast and coeffs.depends_on_y:
        raise ContractError("the slow drift depends on y; the fast process cannot be skipped")

    dt = _uniform_step(times)
    ks = lam + coeffs.slow_damping
    Es, Ps = np.exp(-ks * dt), phi1(ks * dt)
    X = _state(x0, R, n, "x0")
    Y = _state(y0, R, n, "y0") if need_fast else None

    dB = np.zeros((R, M, n)) if bh_vals is None else np.diff(_batch(bh_vals, R), axis=1)
    du = np.zeros((R, M, n)) if u is None else np.diff(_batch(u.values, R), axis=1)
    if u is not None:
        u.check_same_grid(GridPath(times, np.zeros((times.size, n))))
    dv = None
    if v is not None:
        v.check_same_grid(GridPath(times, np.zeros((times.size, n))))
        dv = np.diff(_batch(v.values, R), axis=1) / dt
        if eps == 0 and np.any(dv != 0):
            raise ContractError("a fast control needs epsilon > 0")
    sq_eps = math.sqrt(eps)

    if need_fast:
        dt, r, h, noise = _fast_setup(times, scales, w, q2, seed, reps, n, R)
        kf = lam + coeffs.fast_damping
        eta = h / scales.delta
        Ef = np.exp(-kf * eta)
        Pf = phi1(kf * eta) * eta
        Sf = np.sqrt(phi1(2 * kf * eta)) / math.sqrt(scales.delta)
        Cf = phi1(kf * eta) * h / math.sqrt(scales.delta * eps) if eps > 0 else 0.0
    else:
        r = 0

    kha = block is not None
    if kha:
        if block < dt * (1 - 1e-9):
            raise ConfigError(f"block length {block} is smaller than the grid step {dt}")
        nb = int(round(block / dt))
        if not math.isclose(nb * dt, block, rel_tol=1e-9):
            raise ConfigError(f"block length {block} is not a multiple of the grid step {dt}")
        Xh, Yh = X.copy(), Y.copy()
        Xfrz = X.copy()
        Xs_h = np.empty((R, M + 1, n))
        Ys_h = np.empty((R, M + 1, n))
        Xs_h[:, 0], Ys_h[:, 0] = Xh, Yh

    Xs = np.empty((R, M + 1, n))
    Xs[:, 0] = X
    Ys = None
    if need_fast:
        Ys = np.empty((R, M + 1, n))
        Ys[:, 0] = Y
    div = _Divergence(divergence, R)
    xmax = np.empty(M + 1)
    ymax = np.empty(M + 1)
    xmax[0] = np.max(np.linalg.norm(X, axis=-1))
    ymax[0] = np.max(np.linalg.norm(Y, axis=-1)) if need_fast else 0.0

    for k in range(M):
        if kha and k % nb == 0:
            Xfrz = X.copy()
        if need_fast:
            dW = noise.step(k)
            bsum = np.zeros((R, n))
            bsum_h = np.zeros((R, n)) if kha else None
            vk = None if dv is None else dv[:, k]
            for j in range(r):
                bsum += coeffs.b_rest(X, Y)
                fr = coeffs.F_rest(X, Y)
                incr = Sf * coeffs.G_apply(X, Y, dW[:, j])
                if vk is not None:
                    incr = incr + Cf * coeffs.G_apply(X, Y, vk)
                if kha:
                    bsum_h += coeffs.b_rest(Xfrz, Yh)
                    frh = coeffs.F_rest(Xfrz, Yh)
                    Yh = Ef * Yh + Pf * frh + Sf * coeffs.G_apply(Xfrz, Yh, dW[:, j])
                Y = Ef * Y + Pf * fr + incr
            bmean = bsum / r
        else:
            bmean = coeffs.b_rest(X, X)
        drive = sq_eps * dB[:, k] + du[:, k]
        Xn = Es * X + Ps * (dt * bmean + coeffs.g_apply(X, drive))
        if kha:
            Xh = Es * Xh + Ps * (dt * (bsum_h / r) + coeffs.g_apply(Xh, du[:, k]))
        X = Xn
        if kha:
            div.check(k, times[k + 1], X, Y, Xh, Yh)
            Xs_h[:, k + 1], Ys_h[:, k + 1] = Xh, Yh
        elif need_fast:
            div.check(k, times[k + 1], X, Y)
        else:
            div.check(k, times[k + 1], X)
        Xs[:, k + 1] = X
        xmax[k + 1] = np.nanmax(np.linalg.norm(X, axis=-1)) if not np.all(div.aborted) else np.nan
        if need_fast:
            Ys[:, k + 1] = Y
            ymax[k + 1] = np.nanmax(np.linalg.norm(Y, axis=-1)) if not np.all(div.aborted) else np.nan

    diag = {"substeps_per_step": r, "slow_step": dt, "max_norm_slow": xmax, "max_norm_fast": ymax,
            "aborted": div.aborted, "abort_step": div.step, "abort_fraction": float(np.mean(div.aborted)),
            "replicas": R, **{f"scale_{k}": v for k, v in scales.to_dict().items()}}

    def pack(xs, ys):
        if single:
            xs, ys = xs[0], (None if ys is None else ys[0])
        return SolveResult(GridPath(times, xs), None if ys is None else GridPath(times, ys), dict(diag))

    main = pack(Xs, Ys if need_fast else None)
    if kha:
        return main, pack(Xs_h, Ys_h)
    return main


def solve_slow_fast(space: SpectralSpace, coeffs: CoefficientSystem, scales: ScaleParams,
                    bh: GridPath | None, w: GridPath | None, x0, y0, *, times=None, q2=None, seed=None,
                    replicas=None, divergence: str = "raise", track_fast: bool = True) -> SolveResult:
    """Mild exponential-Euler solution of the slow-fast pair.

    ``bh`` is the cylindrical fBM on the slow grid (``None``: no slow noise).
    ``w`` is the fast Wiener path on a grid refining the slow grid by an
    integer factor with step ``<= delta/4``; with ``w=None`` it is drawn on the
    fly from ``seed`` and the fast covariance ``q2`` (substream per replica
    and mode).
    """
    times = _times(bh, times)
    return _run(space, coeffs, scales, times, bh, w, x0, y0, q2=q2, seed=seed, replicas=replicas,
                divergence=divergence, track_fast=track_fast)


def solve_controlled(space, coeffs, scales, u: GridPath | None, v: GridPath | None, bh, w, x0, y0, *,
                     times=None, q2=None, seed=None, replicas=None, divergence="raise") -> SolveResult:
    """Controlled pair: ``g(X) du`` in the slow equation, ``G dv / sqrt(delta eps)`` in the fast one.

    Within a slow step ``u`` is linear, so the control integral of the
    frozen integrand is its increment (exactly what the Young integral of a
    constant against ``u`` gives).  ``u = v = 0`` reproduces
    :func:`solve_slow_fast` bit for bit.
    """
    times = _times(bh, times, u)
    return _run(space, coeffs, scales, times, bh, w, x0, y0, u=u, v=v, q2=q2, seed=seed,
                replicas=replicas, divergence=divergence)


def solve_khasminskii_auxiliary(space, coeffs, scales, u, v, bh, w, x0, y0, *, block=None, times=None,
                                q2=None, seed=None, replicas=None, divergence="raise"):
    """Controlled pair and its block-frozen auxiliary, stepped on the same noise.

    The auxiliary pair freezes the slow argument of ``b``, ``F`` and ``G`` at
    ``X~_{t(Delta)}`` with ``t(Delta) = floor(t/Delta) Delta``; its slow part
    keeps the control ``g(X^) du`` but has no ``sqrt(eps)`` noise, and its fast
    part has no ``v`` control.  Returns ``(controlled, auxiliary)``.
    """
    times = _times(bh, times, u)
    block = scales.block if block is None else block
    if block is None:
        raise ConfigError("a block length Delta is required")
    return _run(space, coeffs, scales, times, bh, w, x0, y0, u=u, v=v, block=float(block), q2=q2,
                seed=seed, replicas=replicas, divergence=divergence)


def _times(bh, times, u=None):
    if times is not None:
        return np.asarray(times, dtype=float)
    if bh is not None:
        return bh.times
    if u is not None:
        return u.times
    raise ContractError("no time grid: pass times or a noise path")


# --------------------------------------------------------------------------
# frozen equation

def solve_frozen(space, coeffs: CoefficientSystem, x, w: GridPath | None, y0, *, times=None, q2=None,
                 seed=None, replicas=None, on_step=None, stream=_rng.STREAM_WIENER) -> GridPath:
    """Frozen fast equation ``dY = (AY + F(x, Y)) dt + G(x, Y) dW`` in its own time.

    Standard (unaccelerated) exponential Euler with exact OU variance per
    step.  ``on_step(k, Y)`` is called after every step; if given, the path
    itself is not stored and ``None`` is returned.
    """
    n = space.dim
    if w is not None:
        times = w.times
        R = w.values.shape[0] if np.ndim(w.values) == 3 else 1
    else:
        if times is None or seed is None or q2 is None:
            raise ContractError("without a Wiener path, pass times, seed and q2")
        times = np.asarray(times, dtype=float)
        R = 1 if replicas is None else (replicas if isinstance(replicas, int) else len(list(replicas)))
    single = (w is None and replicas is None) or (w is not None and np.ndim(w.values) == 2)
    dt = _uniform_step(times)
    M = times.size - 1
    kf = space.eigenvalues + coeffs.fast_damping
    E, P = np.exp(-kf * dt), phi1(kf * dt) * dt
    S = np.sqrt(phi1(2 * kf * dt))
    xb = np.broadcast_to(np.asarray(x, dtype=float), (R, n))
    Y = _state(y0, R, n, "y0")
    if w is not None:
        inc = np.diff(_batch(w.values, R), axis=1)
        get = lambda k: inc[:, k]
    else:
        reps = range(R) if replicas is None or isinstance(replicas, int) else list(replicas)
        lam2 = np.asarray(getattr(q2, "lambdas", q2), dtype=float)
        noise = _FastNoise(n, R, 1, dt, None, lam2, seed, reps, stream)
        get = lambda k: noise.step(k)[:, 0]
    store = on_step is None
    if store:
        out = np.empty((R, M + 1, n))
        out[:, 0] = Y
    else:
        on_step(0, Y)
    for k in range(M):
        Y = E * Y + P * coeffs.F_rest(xb, Y) + S * coeffs.G_apply(xb, Y, get(k))
        if not np.all(np.isfinite(Y)):
            raise DivergenceError(f"non-finite frozen state at step {k}")
        if store:
            out[:, k + 1] = Y
        else:
            on_step(k + 1, Y)
    if not store:
        return None
    return GridPath(times, out[0] if single else out)


# --------------------------------------------------------------------------
# deterministic equations

def _lawson_rk4(space: SpectralSpace, rhs, x0, times, damping=None) -> np.ndarray:
    """Integrating-factor RK4 for ``x' = -lam x + rhs(k, t, x)`` (``k`` the step index)."""
    lam = space.eigenvalues if damping is None else space.eigenvalues + damping
    times = np.asarray(times, dtype=float)
    x = space.check(np.asarray(x0, dtype=float)).copy()
    out = np.empty((times.size,) + x.shape)
    out[0] = x
    for k in range(times.size - 1):
        t, h = times[k], times[k + 1] - times[k]
        E2, E1 = np.exp(-lam * h / 2), np.exp(-lam * h)
        k1 = rhs(k, t, x)
        k2 = rhs(k, t + h / 2, E2 * (x + h / 2 * k1))
        k3 = rhs(k, t + h / 2, E2 * x + h / 2 * k2)
        k4 = rhs(k, t + h, E1 * x + h * E2 * k3)
        x = E1 * x + h / 6 * (E1 * k1 + 2 * E2 * (k2 + k3) + k4)
        if not np.all(np.isfinite(x)):
            raise DivergenceError(f"non-finite state at step {k} (t={times[k + 1]:.6g})")
        out[k + 1] = x
    return out


def _cell_rates(u: GridPath | None, n):
    if u is None:
        return None
    uv = np.asarray(u.values, dtype=float)
    if uv.ndim != 2 or uv.shape[1] != n:
        raise ContractError(f"control of shape {uv.shape} does not match dim {n}")
    return np.diff(uv, axis=0) / np.diff(u.times)[:, None]


def solve_averaged(space: SpectralSpace, bbar, x0, times) -> GridPath:
    """``dX = (AX + bbar(X)) dt``."""
    f = as_bbar(bbar)
    times = np.asarray(times, dtype=float)
    return GridPath(times, _lawson_rk4(space, lambda k, t, x: f(x), x0, times))


def solve_skeleton_ldp(space: SpectralSpace, bbar, g, u: GridPath | None, x0, times=None) -> GridPath:
    """``dX = (AX + bbar(X)) dt + g(X) du`` with ``du/dt`` constant per cell."""
    f = as_bbar(bbar)
    gm = as_g(g, space.dim)
    times = u.times if times is None else np.asarray(times, dtype=float)
    ud = _cell_rates(u, space.dim)
    if ud is None:
        return solve_averaged(space, f, x0, times)
    if u.times.size != times.size:
        raise ContractError("control and solution grids differ")

    def rhs(k, t, x):
        return f(x) + gm(x) @ ud[k]
    return GridPath(times, _lawson_rk4(space, rhs, x0, times))


def solve_skeleton_mdp(space: SpectralSpace, xbar: GridPath, Dbbar, g, u: GridPath | None,
                       z0=None) -> GridPath:
    """``dZ = (A + Dbbar(xbar_t)) Z dt + g(xbar_t) du``, ``Z_0 = 0``.

    ``xbar`` is interpolated with a cubic spline at the RK stages.
    """
    n = space.dim
    D = as_dbbar(Dbbar)
    gm = as_g(g, n)
    times = xbar.times
    spline = CubicSpline(times, np.asarray(xbar.values, dtype=float), axis=0)
    ud = _cell_rates(u, n) if u is not None else np.zeros((times.size - 1, n))
    if u is not None:
        xbar.check_same_grid(u)
    z0 = np.zeros(n) if z0 is None else np.asarray(z0, dtype=float)

    def rhs(k, t, z):
        xb = spline(t)
        return D(xb) @ z + gm(xb) @ ud[k]
    return GridPath(times, _lawson_rk4(space, rhs, z0, times))


def deviation_path(x: GridPath, xbar: GridPath, scales: ScaleParams) -> GridPath:
    """``Z = (X - Xbar) / (sqrt(eps) h(eps))``."""
    x.check_same_grid(xbar)
    if scales.h is None:
        raise ConfigError("deviation_path needs a speed h (set h or h_form)")
    if scales.epsilon <= 0:
        raise DomainError("deviation_path needs epsilon > 0")
    return GridPath(x.times, (np.asarray(x.values) - np.asarray(xbar.values)) /
                    (math.sqrt(scales.epsilon) * scales.h))


def require_regime1(schedule) -> None:
    reg = classify_regime(schedule)
    if reg != 1:
        raise RegimeError(f"scale schedule is in Regime {reg}; rate claims need delta/eps -> 0")

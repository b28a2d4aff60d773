"""Averaged drift by ergodic time averages of the frozen equation.

The invariant measure of the frozen process is never represented; only the
time average of ``b(x, Y^x_t)`` over ``[burn_in, burn_in + horizon]`` is
accumulated, replica by replica, and the spread across replicas gives the
standard error.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from . import rng as _rng
from .coefficients import CONSTANT_NAMES, CoefficientSystem
from .errors import ConfigError, ContractError, DomainError, OutOfRangeError
from .noise import CovarianceSpec, HurstParam, sample_cylindrical_fbm
from .paths import GridPath
from .solvers import ScaleParams, classify_regime, solve_averaged, solve_frozen, solve_slow_fast
from .spectral import SpectralSpace


# --------------------------------------------------------------------------
# assumption probes

@dataclass
class AssumptionReport:
    declared: dict
    sampled: dict
    lam1: float
    eta: float
    kappa: float
    eta_sampled: float
    kappa_sampled: float
    a5_pass: bool
    a6_pass: bool
    a6_ratio: float
    violations: list = field(default_factory=list)
    radius: float = 10.0
    samples: int = 0

    @property
    def passed(self) -> bool:
        return self.a5_pass and self.a6_pass and not self.violations

    def failing(self) -> list[str]:
        out = []
        if not self.eta > 1:
            out.append(f"eta = {self.eta:.6g} (needs > 1; beta3={self.declared['beta3']:.6g}, "
                       f"C2={self.declared['C2']:.6g})")
        if not self.kappa > 0:
            out.append(f"kappa = {self.kappa:.6g} (needs > 0; beta1={self.declared['beta1']:.6g}, "
                       f"C3={self.declared['C3']:.6g})")
        if not self.a6_pass:
            out.append(f"C6 (sampled ratio {self.a6_ratio:.6g} > declared {self.declared['C6']:.6g})")
        out += [f"{k} (sampled {s:.6g} > declared {d:.6g})" for k, s, d in self.violations]
        return out

    def to_dict(self) -> dict:
        f = lambda v: float(v) if np.isfinite(v) else str(v)
        return {"declared": {k: f(v) for k, v in self.declared.items()},
                "sampled": {k: f(v) for k, v in self.sampled.items()},
                "lam1": self.lam1, "eta": f(self.eta), "kappa": f(self.kappa),
                "eta_sampled": f(self.eta_sampled), "kappa_sampled": f(self.kappa_sampled),
                "a5_pass": self.a5_pass, "a6_pass": self.a6_pass, "a6_ratio": f(self.a6_ratio),
                "violations": [list(v[:1]) + [float(v[1]), float(v[2])] for v in self.violations],
                "failing": self.failing(), "passed": self.passed,
                "radius": self.radius, "samples": self.samples}


def _ball(rng, m, n, radius):
    d = rng.standard_normal((m, n))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    return d * radius * rng.uniform(0, 1, (m, 1)) ** (1.0 / n)


def _hs(G):
    return np.sqrt(np.sum(G ** 2, axis=(-2, -1)))


def check_assumptions(space: SpectralSpace, coeffs: CoefficientSystem, sample_count: int = 2000,
                      rng=0, radius: float | None = None) -> AssumptionReport:
    """Sampled finite-difference estimates of the structural constants.

    Pairs ``(x, y)`` are drawn uniformly from the ball on which the family
    declares its constants (radius 10 for global families).  ``eta`` and
    ``kappa`` use the declared constants; the ``_sampled`` variants plug in
    the sampled ones.  Sampled constants above their declarations are listed
    as violations.
    """
    n = space.dim
    gen = rng if isinstance(rng, np.random.Generator) else _rng.substream(_rng.as_seed(rng), _rng.STREAM_PROBE)
    R = float(radius if radius is not None else (coeffs.valid_box if np.isfinite(coeffs.valid_box) else 10.0))
    m = int(sample_count)
    x1, x2, y1, y2 = (_ball(gen, m, n, R) for _ in range(4))
    dx = np.linalg.norm(x1 - x2, axis=1)
    dy = np.linalg.norm(y1 - y2, axis=1)
    nx, ny = np.linalg.norm(x1, axis=1), np.linalg.norm(y1, axis=1)
    b1, b2 = coeffs.b(x1, y1), coeffs.b(x2, y2)
    F1, F2 = coeffs.F(x1, y1), coeffs.F(x2, y2)
    G1, G2 = coeffs.G_matrix(x1, y1), coeffs.G_matrix(x2, y2)
    dec = {k: float(coeffs.declared.get(k, np.nan)) for k in CONSTANT_NAMES}

    s = {}
    s["C1"] = np.max(np.linalg.norm(b1 - b2, axis=1) / (dx + dy))
    s["C2"] = np.max((np.linalg.norm(F1 - F2, axis=1) + _hs(G1 - G2)) / (dx + dy))
    s["C3"] = np.max((np.linalg.norm(F1, axis=1) + _hs(G1)) / (1 + nx + ny))
    s["C4"] = np.max(np.linalg.norm(b1, axis=1) / (1 + nx + ny))
    # one-sided conditions: beta1 is taken as declared and the matching beta2 sampled
    s["beta1"] = dec["beta1"]
    s["beta2"] = np.max(np.sum(y1 * F1, axis=1) + dec["beta1"] * ny ** 2)
    Fs = coeffs.F(x1, y2)
    s["beta3"] = np.max(np.sum((y1 - y2) * (F1 - Fs), axis=1) / dy ** 2)
    s["C5"] = max(0.0, np.max((np.sum((y1 - y2) * (F1 - F2), axis=1) - dec["beta3"] * dy ** 2) / dx ** 2))
    # A6: sup over y at fixed x
    ys = _ball(gen, 64, n, R)
    xs = x1[: min(m, 256)]
    tot = (np.linalg.norm(coeffs.b(xs[:, None, :], ys[None]), axis=-1)
           + _hs(coeffs.G_matrix(np.broadcast_to(xs[:, None, :], (xs.shape[0], ys.shape[0], n)),
                                 np.broadcast_to(ys[None], (xs.shape[0], ys.shape[0], n)))))
    a6 = np.max(np.max(tot, axis=1) / (1 + np.linalg.norm(xs, axis=1)))
    s["C6"] = a6
    gd1, gd2 = coeffs.g_matrix(x1), coeffs.g_matrix(x2)
    s["L_g"] = np.max(np.max(np.linalg.norm(gd1 - gd2, axis=-2), axis=-1) / dx)
    # g' by central differences along each basis direction
    hstep = 1e-5 * max(R, 1.0)
    dg = []
    for x in (x1[:200], x2[:200]):
        cols = []
        for j in range(n):
            e = np.zeros(n)
            e[j] = hstep
            cols.append((coeffs.g_matrix(x + e) - coeffs.g_matrix(x - e)) / (2 * hstep))
        dg.append(np.stack(cols, axis=-1))     # (m, n, n, n): d g[:, i] / d x_j
    diff = dg[0] - dg[1]
    opn = np.max(np.linalg.norm(diff, ord=2, axis=(-3, -1)) if n > 0 else 0.0, axis=-1)
    s["M_g"] = float(np.max(opn / dx[:200]))

    lam1 = space.lam1
    eta = 2 * lam1 - 2 * dec["beta3"] - dec["C2"]
    kappa = 2 * lam1 + 2 * dec["beta1"] - dec["C3"]
    eta_s = 2 * lam1 - 2 * s["beta3"] - s["C2"]
    kappa_s = 2 * lam1 + 2 * s["beta1"] - s["C3"]
    viol = []
    for k in CONSTANT_NAMES:
        if k in ("beta1",):
            continue
        tol = 1e-6 * max(1.0, abs(dec[k])) + (1e-4 if k == "M_g" else 0.0)
        if np.isfinite(dec[k]) and s[k] > dec[k] + tol:
            viol.append((k, float(s[k]), dec[k]))
    return AssumptionReport(declared=dec, sampled={k: float(v) for k, v in s.items()}, lam1=lam1,
                            eta=eta, kappa=kappa, eta_sampled=eta_s, kappa_sampled=kappa_s,
                            a5_pass=bool(eta > 1 and kappa > 0), a6_pass=bool(a6 <= dec["C6"] * (1 + 1e-9)),
                            a6_ratio=float(a6), violations=viol, radius=R, samples=m)


def _require_ergodic(space, coeffs, probe_samples=500):
    rep = check_assumptions(space, coeffs, probe_samples, rng=0)
    bad = [f for f in rep.failing() if f.startswith(("eta", "kappa", "beta", "C5"))]
    if bad:
        raise ContractError("frozen equation fails the dissipativity probe: " + "; ".join(bad))
    return rep


# --------------------------------------------------------------------------
# time averages

def relaxation_time(space: SpectralSpace, coeffs: CoefficientSystem) -> float:
    return 1.0 / (space.lam1 + max(float(coeffs.declared.get("beta1", 0.0)), 0.0))


def estimate_bbar(space: SpectralSpace, coeffs: CoefficientSystem, x, burn_in: float | None = None,
                  horizon: float | None = None, replicas: int = 16, rng=0, *, q2=None, y0=None,
                  dt: float | None = None, probe: bool = True):
    """``(bbar(x), SE)`` from replica-averaged time averages of ``b(x, Y^x_t)``.

    ``dt`` is the frozen-time step (default 1/20 of the relaxation time
    ``1/(lam1 + beta1)``); burn-in defaults to ten relaxation times and the
    averaging horizon to 100 burn-ins.  The fast noise comes from the
    ``STREAM_FAST`` substreams of ``rng`` (an int seed).
    """
    n = space.dim
    x = space.check(np.asarray(x, dtype=float))
    if not coeffs.depends_on_y:
        return coeffs.b(x, x), np.zeros(n)
    if probe:
        _require_ergodic(space, coeffs)
    tau = relaxation_time(space, coeffs)
    burn_in = 10 * tau if burn_in is None else float(burn_in)
    horizon = 100 * burn_in if horizon is None else float(horizon)
    dt = tau / 20 if dt is None else float(dt)
    if burn_in < 0 or horizon <= 0 or dt <= 0:
        raise DomainError("burn_in >= 0, horizon > 0 and dt > 0 are required")
    k0 = int(round(burn_in / dt))
    K = int(round(horizon / dt))
    times = dt * np.arange(k0 + K + 1)
    seed = _rng.as_seed(rng) if not isinstance(rng, np.random.Generator) else int(rng.integers(2 ** 63))
    lam2 = np.ones(n) if q2 is None else np.asarray(getattr(q2, "lambdas", q2), dtype=float)
    y0 = np.zeros(n) if y0 is None else np.asarray(y0, dtype=float)
    acc = np.zeros((replicas, n))

    def on_step(k, Y):
        if k < k0:
            return
        w = 0.5 if k in (k0, k0 + K) else 1.0
        acc[:] += w * coeffs.b(x, Y)

    solve_frozen(space, coeffs, x, None, y0, times=times, q2=lam2, seed=seed, replicas=replicas,
                 on_step=on_step, stream=_rng.STREAM_FAST)
    per = acc / K
    est = per.mean(axis=0)
    se = per.std(axis=0, ddof=1) / math.sqrt(replicas) if replicas > 1 else np.full(n, np.inf)
    return est, se


@dataclass
class AveragedDrift:
    """Averaged drift, either a registered closed form or a table with SEs.

    Tables live on a tensor grid (one axis per mode, up to three modes) and
    are interpolated multilinearly; evaluation outside the grid raises
    :class:`OutOfRangeError`.
    """

    mode: str
    axes: list | None = None
    table: np.ndarray | None = None
    se: np.ndarray | None = None
    burn_in: float | None = None
    horizon: float | None = None
    replicas: int | None = None
    fn: object = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.mode not in ("closed_form", "tabulated"):
            raise ConfigError(f"mode must be closed_form or tabulated, got {self.mode!r}")
        if self.mode == "closed_form":
            if self.fn is None:
                raise ConfigError("closed_form drift needs a function")
            return
        self.axes = [np.asarray(a, dtype=float) for a in self.axes]
        self.table = np.asarray(self.table, dtype=float)
        self.se = np.zeros_like(self.table) if self.se is None else np.asarray(self.se, dtype=float)
        if not np.all(np.isfinite(self.se)):
            raise ContractError("tabulated standard errors must be finite")
        n = len(self.axes)
        if self.table.shape != tuple(a.size for a in self.axes) + (n,):
            raise ContractError(f"table shape {self.table.shape} does not match the grid axes")
        self._interp = None
        if all(a.size >= 2 for a in self.axes):
            self._interp = RegularGridInterpolator(self.axes, self.table, method="linear")

    @classmethod
    def closed_form(cls, coeffs: CoefficientSystem) -> "AveragedDrift":
        if not coeffs.has_closed_form_bbar:
            raise ConfigError(f"family {coeffs.name!r} has no closed-form averaged drift")
        return cls(mode="closed_form", fn=coeffs.bbar)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.mode == "closed_form":
            return self.fn(x)
        lo = np.array([a[0] for a in self.axes])
        hi = np.array([a[-1] for a in self.axes])
        tol = 1e-12 * np.maximum(1.0, np.abs(hi - lo))
        out = (x < lo - tol) | (x > hi + tol)
        if np.any(out):
            bad = x[np.any(out, axis=-1)] if x.ndim > 1 else x
            raise OutOfRangeError(f"averaged drift evaluated at x={np.atleast_2d(bad)[0].tolist()} outside "
                                  f"the tabulated box {lo.tolist()}..{hi.tolist()}")
        if self._interp is None:
            # degenerate axes: interpolate over the non-degenerate ones only
            keep = [i for i, a in enumerate(self.axes) if a.size >= 2]
            tab = self.table.reshape([a.size for a in self.axes if a.size >= 2] + [len(self.axes)])
            if not keep:
                return np.broadcast_to(tab, x.shape).copy()
            f = RegularGridInterpolator([self.axes[i] for i in keep], tab, method="linear")
            return f(np.clip(x[..., keep], lo[keep], hi[keep]))
        return self._interp(np.clip(x, lo, hi))

    def to_json(self, path=None) -> str:
        if self.mode == "closed_form":
            d = {"mode": "closed_form"}
        else:
            d = {"mode": "tabulated", "axes": [a.tolist() for a in self.axes], "table": self.table.tolist(),
                 "se": self.se.tolist(), "burn_in": self.burn_in, "horizon": self.horizon,
                 "replicas": self.replicas}
        txt = json.dumps(d, indent=2)
        if path is not None:
            Path(path).write_text(txt)
        return txt

    @classmethod
    def from_json(cls, src, coeffs: CoefficientSystem | None = None) -> "AveragedDrift":
        txt = Path(src).read_text() if not str(src).lstrip().startswith("{") else str(src)
        d = json.loads(txt)
        if d["mode"] == "closed_form":
            if coeffs is None:
                raise ConfigError("a closed-form drift can only be restored with its family")
            return cls.closed_form(coeffs)
        return cls(mode="tabulated", axes=d["axes"], table=d["table"], se=d["se"], burn_in=d.get("burn_in"),
                   horizon=d.get("horizon"), replicas=d.get("replicas"))


def build_bbar(space: SpectralSpace, coeffs: CoefficientSystem, x_grid, settings: dict | None = None
               ) -> AveragedDrift:
    """Tabulate ``estimate_bbar`` on a tensor grid.

    ``x_grid`` is a 1-D array for one mode or a sequence of axes, one per
    mode (at most three).  All grid nodes share the same seed so the table is
    smooth in ``x`` (common random numbers).
    """
    n = space.dim
    if n > 3:
        raise ConfigError("tabulated averaged drifts support at most three modes")
    axes = [np.asarray(x_grid, dtype=float)] if n == 1 and np.ndim(x_grid[0]) == 0 else \
        [np.asarray(a, dtype=float) for a in x_grid]
    if len(axes) != n:
        raise ContractError(f"need one grid axis per mode ({n}), got {len(axes)}")
    for a in axes:
        if a.ndim != 1 or a.size < 1 or np.any(np.diff(a) <= 0):
            raise ContractError("grid axes must be strictly increasing 1-D arrays")
    st = dict(settings or {})
    shape = tuple(a.size for a in axes)
    table = np.empty(shape + (n,))
    se = np.empty(shape + (n,))
    if coeffs.depends_on_y:
        _require_ergodic(space, coeffs)
    for idx in np.ndindex(*shape):
        x = np.array([axes[i][j] for i, j in enumerate(idx)])
        table[idx], se[idx] = estimate_bbar(space, coeffs, x, st.get("burn_in"), st.get("horizon"),
                                            st.get("replicas", 16), st.get("seed", 0), q2=st.get("q2"),
                                            dt=st.get("dt"), probe=False)
    tau = relaxation_time(space, coeffs)
    bi = st.get("burn_in") or 10 * tau
    return AveragedDrift(mode="tabulated", axes=axes, table=table, se=se, burn_in=bi,
                         horizon=st.get("horizon") or 100 * bi, replicas=st.get("replicas", 16))


# --------------------------------------------------------------------------
# averaging error sweep

@dataclass
class SweepReport:
    schedule: list
    means: np.ndarray
    ses: np.ndarray
    abort_fractions: np.ndarray
    monotone: bool
    valid: bool
    floor: float | None = None
    floor_se: float | None = None
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"schedule": [s.to_dict() for s in self.schedule], "means": self.means.tolist(),
                "ses": self.ses.tolist(), "abort_fractions": self.abort_fractions.tolist(),
                "monotone": self.monotone, "valid": self.valid, "floor": self.floor,
                "floor_se": self.floor_se, "notes": list(self.notes)}


def _sup_err(res, xbar):
    d = np.linalg.norm(np.asarray(res.slow.values) - np.asarray(xbar.values), axis=-1)
    return np.max(d, axis=-1)


def averaging_error_sweep(space: SpectralSpace, coeffs: CoefficientSystem, scales_schedule, replicas: int,
                          rng=0, *, x0, y0=None, times, H=0.75, q1=None, q2=None, bbar=None,
                          with_floor: bool = True, max_abort: float = 0.01) -> SweepReport:
    """``E sup_t ||X^{eps,delta}_t - Xbar_t||`` along a schedule of scale pairs.

    All cells share the fBM draws (common random numbers).  ``monotone`` is
    True when the means strictly decrease as ``delta`` shrinks within each
    fixed ``epsilon``.  With ``with_floor`` the same fBM drives the
    ``b := bbar`` system at the smallest ``delta``; its sup-error is the noise
    floor that no amount of averaging removes.
    """
    n = space.dim
    sched = list(scales_schedule)
    for s in sched:
        if not s.in_regime1:
            raise ConfigError(f"scale pair eps={s.epsilon}, delta={s.delta} is outside Regime 1 "
                              f"(delta/eps = {s.ratio:.3g})")
    seed = _rng.as_seed(rng)
    times = np.asarray(times, dtype=float)
    q1 = CovarianceSpec(np.ones(n)) if q1 is None else (q1 if isinstance(q1, CovarianceSpec) else CovarianceSpec(q1))
    lam2 = np.ones(n) if q2 is None else np.asarray(getattr(q2, "lambdas", q2), dtype=float)
    y0 = np.zeros(n) if y0 is None else y0
    Hp = HurstParam(H) if not isinstance(H, HurstParam) else H
    bh = sample_cylindrical_fbm(space, q1, Hp.H, times, seed, replicas=replicas)
    xbar = solve_averaged(space, coeffs.bbar if bbar is None else bbar, x0, times)
    means, ses, ab = [], [], []
    for s in sched:
        res = solve_slow_fast(space, coeffs, s, bh, None, x0, y0, q2=lam2, seed=seed, divergence="record")
        e = _sup_err(res, xbar)
        ok = ~res.diagnostics["aborted"]
        means.append(float(np.mean(e[ok])) if ok.any() else np.nan)
        ses.append(float(np.std(e[ok], ddof=1) / math.sqrt(ok.sum())) if ok.sum() > 1 else np.nan)
        ab.append(float(np.mean(~ok)))
    means, ses, ab = np.array(means), np.array(ses), np.array(ab)
    mono = True
    for eps in sorted({s.epsilon for s in sched}):
        idx = sorted([i for i, s in enumerate(sched) if s.epsilon == eps], key=lambda i: -sched[i].delta)
        m = means[idx]
        mono &= bool(np.all(np.diff(m) < 0))
    notes = []
    valid = bool(np.all(ab <= max_abort))
    if not valid:
        notes.append(f"divergence fraction above {max_abort:.0%}: sweep invalid")
    floor = floor_se = None
    if with_floor:
        smallest = min(sched, key=lambda s: s.delta)
        avg = coeffs.averaged_version() if bbar is None else _with_bbar(coeffs, bbar)
        res = solve_slow_fast(space, avg, smallest, bh, None, x0, y0, q2=lam2, seed=seed,
                              divergence="record", track_fast=False)
        e = _sup_err(res, xbar)
        floor, floor_se = float(np.mean(e)), float(np.std(e, ddof=1) / math.sqrt(e.size))
    return SweepReport(sched, means, ses, ab, mono, valid, floor, floor_se, notes)


def _with_bbar(coeffs: CoefficientSystem, bbar) -> CoefficientSystem:
    from dataclasses import replace
    d = coeffs.slow_damping
    return replace(coeffs, name=coeffs.name + ":averaged", b_rest=lambda x, y: bbar(x) + d * x,
                   depends_on_y=False, bbar_fn=bbar)

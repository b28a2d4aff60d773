"""Fractional and standard Brownian noise, the Volterra kernel and the
Cameron-Martin operators.

For ``H > 1/2`` write ``g = H - 1/2``.  The kernel is

    K_H(t, s) = c_H / Gamma(g) * s^{-g} int_s^t (u - s)^{g-1} u^g du,   s < t,

and ``KH hdot (t) = int_0^t K_H(t, s) hdot(s) ds``.  Its derivative is

    h'(t) = c_H t^g / Gamma(g) int_0^t (t - s)^{g-1} s^{-g} hdot(s) ds

which, after ``s = t x``, reduces to regularized incomplete Beta functions
when ``hdot`` is piecewise constant.  Everything below uses that reduction so
the singular factors are integrated analytically cell by cell.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate, linalg, special

from . import rng as _rng
from .errors import ContractError, DecompositionError, DomainError
from .paths import GridPath
from .spectral import SpectralSpace

CHOLESKY_CAP = 4096


@dataclass(frozen=True)
class HurstParam:
    """Hurst index ``H`` and the fractional order ``alpha`` used for pathwise integrals.

    ``H = 1/2`` is accepted so degenerate (Brownian) limits can be expressed;
    operations that need ``H > 1/2`` refuse it themselves.
    """

    H: float
    alpha: float | None = None

    def __post_init__(self):
        H = float(self.H)
        if not 0.5 <= H < 1.0:
            raise DomainError(f"H must lie in [1/2, 1), got {H}")
        object.__setattr__(self, "H", H)
        if self.alpha is None:
            if H > 0.5:
                object.__setattr__(self, "alpha", 0.5 * ((1.0 - H) + 0.5))
        else:
            a = float(self.alpha)
            if not (1.0 - H < a < 0.5):
                raise DomainError(f"alpha must lie in (1-H, 1/2) = ({1 - H}, 0.5), got {a}")
            object.__setattr__(self, "alpha", a)

    @property
    def gamma(self) -> float:
        return self.H - 0.5

    @property
    def c_H(self) -> float:
        return hurst_constant(self.H)

    @property
    def is_brownian(self) -> bool:
        return self.H == 0.5


def _hurst(H) -> HurstParam:
    return H if isinstance(H, HurstParam) else HurstParam(float(H))


def hurst_constant(H: float) -> float:
    """``c_H = sqrt(2H Gamma(3/2-H) Gamma(H+1/2) / Gamma(2-2H))``; equals 1 at ``H = 1/2``."""
    return float(np.sqrt(2 * H * special.gamma(1.5 - H) * special.gamma(H + 0.5) / special.gamma(2 - 2 * H)))


@dataclass(frozen=True)
class CovarianceSpec:
    """Per-mode eigenvalues ``lambda_i >= 0`` of a covariance operator ``Q``.

    ``budget`` bounds ``sum sqrt(lambda_i)``, the finite stand-in for
    ``Q^{1/2}`` being trace class.
    """

    lambdas: np.ndarray
    budget: float | None = None

    def __post_init__(self):
        lam = np.asarray(self.lambdas, dtype=float).ravel()
        if np.any(~np.isfinite(lam)) or np.any(lam < 0):
            raise DomainError(f"covariance eigenvalues must be finite and >= 0, got {lam}")
        lam.setflags(write=False)
        object.__setattr__(self, "lambdas", lam)
        if self.budget is not None and self.trace_root > self.budget:
            raise DomainError(f"sum sqrt(lambda) = {self.trace_root:.6g} exceeds budget {self.budget}")

    @property
    def trace_root(self) -> float:
        return float(np.sum(np.sqrt(self.lambdas)))

    @property
    def dim(self) -> int:
        return self.lambdas.size

    @classmethod
    def from_config(cls, cfg, dim: int | None = None) -> "CovarianceSpec":
        if isinstance(cfg, dict):
            if "lambdas" in cfg:
                return cls(cfg["lambdas"], cfg.get("budget"))
            decay = float(cfg.get("decay", 2.0))
            scale = float(cfg.get("scale", 1.0))
            k = np.arange(1, int(cfg.get("dim", dim)) + 1)
            return cls(scale * k ** (-decay), cfg.get("budget"))
        return cls(cfg)

    def check(self, space: SpectralSpace) -> None:
        if self.dim != space.dim:
            raise ContractError(f"covariance has {self.dim} modes, space has {space.dim}")


# --------------------------------------------------------------------------
# fBM sampling

def fbm_covariance(H, s, t):
    """``E[B_s B_t] = (t^{2H} + s^{2H} - |t-s|^{2H}) / 2``."""
    h2 = 2 * _hurst(H).H
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    out = 0.5 * (t ** h2 + s ** h2 - np.abs(t - s) ** h2)
    return out if out.ndim else float(out)


@lru_cache(maxsize=32)
def _chol(H: float, key: bytes, cap: int) -> np.ndarray:
    t = np.frombuffer(key, dtype=float)
    C = fbm_covariance(H, t[:, None], t[None, :])
    try:
        return linalg.cholesky(C, lower=True)
    except linalg.LinAlgError as exc:
        raise DecompositionError(
            f"fBM covariance not positive definite for H={H} on grid of {t.size} nodes "
            f"[{t[0]:.6g}, {t[-1]:.6g}]") from exc


def fbm_cholesky(H, times, cap: int = CHOLESKY_CAP) -> np.ndarray:
    """Lower Cholesky factor of the covariance at ``times[1:]`` (``times[0]`` must be 0)."""
    Hp = _hurst(H)
    times = np.asarray(times, dtype=float)
    if times[0] != 0.0:
        raise ContractError("fBM grids must start at t=0")
    if np.any(np.diff(times) <= 0):
        raise ContractError("grid times must be strictly increasing")
    M = times.size - 1
    if M > cap:
        raise ContractError(f"grid with M={M} steps exceeds the Cholesky cap {cap}")
    return _chol(Hp.H, times[1:].tobytes(), cap)


def _draws(rng, stream, replicas, mode, size):
    """Standard normals for one mode; ``rng`` is a Generator or an integer seed."""
    if isinstance(rng, np.random.Generator):
        if replicas is None:
            return rng.standard_normal(size)
        return rng.standard_normal((len(replicas), size))
    reps = [0] if replicas is None else replicas
    z = _rng.normals(int(rng), stream, reps, mode, size)
    return z[0] if replicas is None else z


def _replica_list(replicas):
    if replicas is None:
        return None
    if isinstance(replicas, (int, np.integer)):
        return range(int(replicas))
    return list(replicas)


def sample_fbm_1d(H, times, rng, replicas=None, cap: int = CHOLESKY_CAP, _mode: int = 0) -> GridPath:
    """Exact fBM draw(s) on ``times`` by Cholesky factorization.

    ``rng`` is either a ``numpy.random.Generator`` (numbers are drawn from it
    in order) or an integer seed, in which case replica ``r`` uses the
    substream ``(seed, fbm, r, mode)``.  ``replicas`` (count or index list)
    adds a leading replica axis.
    """
    times = np.asarray(times, dtype=float)
    L = fbm_cholesky(H, times, cap)
    reps = _replica_list(replicas)
    z = _draws(rng, _rng.STREAM_FBM, reps, _mode, times.size - 1)
    x = z @ L.T
    x = np.concatenate([np.zeros(x.shape[:-1] + (1,)), x], axis=-1)
    return GridPath(times, x[..., None])


def sample_cylindrical_fbm(space: SpectralSpace, q: CovarianceSpec, H, times, rng,
                           replicas=None, cap: int = CHOLESKY_CAP) -> GridPath:
    """``B^H = sum_i sqrt(lambda_i) beta^{H,i} e_i`` with independent scalar fBMs."""
    q.check(space)
    times = np.asarray(times, dtype=float)
    L = fbm_cholesky(H, times, cap)
    reps = _replica_list(replicas)
    shape = (times.size, space.dim) if reps is None else (len(reps), times.size, space.dim)
    out = np.zeros(shape)
    for i, lam in enumerate(q.lambdas):
        if lam == 0.0:
            continue
        z = _draws(rng, _rng.STREAM_FBM, reps, i, times.size - 1)
        out[..., 1:, i] = np.sqrt(lam) * (z @ L.T)
    return GridPath(times, out)


def sample_q_wiener(space: SpectralSpace, q: CovarianceSpec, times, rng, replicas=None) -> GridPath:
    """``Q``-Wiener process on ``times``: independent ``N(0, lambda_i dt)`` increments per mode."""
    q.check(space)
    times = np.asarray(times, dtype=float)
    if np.any(np.diff(times) <= 0):
        raise ContractError("grid times must be strictly increasing")
    sd = np.sqrt(np.diff(times))
    reps = _replica_list(replicas)
    shape = (times.size, space.dim) if reps is None else (len(reps), times.size, space.dim)
    out = np.zeros(shape)
    for i, lam in enumerate(q.lambdas):
        if lam == 0.0:
            continue
        z = _draws(rng, _rng.STREAM_WIENER, reps, i, times.size - 1)
        out[..., 1:, i] = np.cumsum(np.sqrt(lam) * sd * z, axis=-1)
    return GridPath(times, out)


# --------------------------------------------------------------------------
# kernel

def _kernel_scalar(Hp: HurstParam, t: float, s: float) -> float:
    g = Hp.gamma
    if s >= t:
        return 0.0
    if g == 0.0:
        return 1.0
    # split u^g = s^g + (u^g - s^g): the first part integrates in closed form,
    # the remainder is smooth enough for algebraic-weight quadrature
    rem, _ = integrate.quad(lambda u: u ** g - s ** g, s, t, weight="alg", wvar=(g - 1.0, 0.0),
                            epsabs=1e-15, epsrel=1e-12, limit=200)
    br = s ** g * (t - s) ** g + g * rem
    return Hp.c_H / special.gamma(1.0 + g) * s ** (-g) * br


def volterra_kernel(H, t, s):
    """``K_H(t, s)``, zero for ``s >= t``; ``s <= 0`` is a domain error."""
    Hp = _hurst(H)
    t_arr = np.asarray(t, dtype=float)
    s_arr = np.asarray(s, dtype=float)
    if np.any(s_arr <= 0):
        raise DomainError("the kernel is singular at s=0; need s > 0")
    tb, sb = np.broadcast_arrays(t_arr, s_arr)
    out = np.array([_kernel_scalar(Hp, float(a), float(b)) for a, b in zip(tb.ravel(), sb.ravel())])
    out = out.reshape(tb.shape)
    return out if out.ndim else float(out)


def volterra_kernel_2f1(H, t: float, s: float, tol: float = 1e-17, max_terms: int = 10 ** 7) -> float:
    """Reference value from the hypergeometric form.

    ``k_H = c_H / Gamma(H+1/2) (t-s)^g F(g, -g; H+1/2; 1 - t/s)``.  The argument
    is below -1 for ``s < t/2``, so a Pfaff transformation maps it to
    ``(t/s)^g F(1, -g; g+1; 1 - s/t)`` whose series is summed directly.
    """
    Hp = _hurst(H)
    g = Hp.gamma
    if s <= 0:
        raise DomainError("the kernel is singular at s=0; need s > 0")
    if s >= t:
        return 0.0
    x = 1.0 - s / t
    term, total, n = 1.0, 1.0, 0
    while n < max_terms:
        term *= (n - g) / (n + g + 1.0) * x
        total += term
        n += 1
        if abs(term) < tol * abs(total):
            break
    F = (t / s) ** g * total
    return Hp.c_H / special.gamma(Hp.H + 0.5) * (t - s) ** g * F


# --------------------------------------------------------------------------
# Cameron-Martin operators on piecewise-constant densities

_GL_ORDER = 10
_GRADING = 4.0


@lru_cache(maxsize=16)
def _kh_weights(H: float, key: bytes) -> np.ndarray:
    """``W[k, j] = int_{cell j} K_H(t_k, s) ds`` for the grid encoded in ``key``."""
    t = np.frombuffer(key, dtype=float)
    M = t.size - 1
    g = H - 0.5
    W = np.zeros((M + 1, M))
    if g == 0.0:
        dt = np.diff(t)
        for k in range(1, M + 1):
            W[k, :k] = dt[:k]
        return W
    z, wz = np.polynomial.legendre.leggauss(_GL_ORDER)
    z = 0.5 * (z + 1.0)
    wz = 0.5 * wz
    # graded map u = t_m + dt z^p clusters nodes at the left end of a cell where
    # the contributions of cells j = m and j = m - 1 have (u - t_m)^g behaviour
    zp = z ** _GRADING
    jac = _GRADING * z ** (_GRADING - 1.0) * wz
    C = hurst_constant(H) * special.gamma(1.0 - g)
    acc = np.zeros(M)
    for m in range(M):
        dt = t[m + 1] - t[m]
        u = t[m] + dt * zp
        w = dt * jac * C * u ** g
        # P[q, j] = I_{min(1, t_j/u_q)}(1-g, g) for j = 0..m+1
        P = special.betainc(1.0 - g, g, np.minimum(1.0, t[None, :m + 2] / u[:, None]))
        acc[:m + 1] += w @ (P[:, 1:] - P[:, :-1])
        W[m + 1] = acc
    return W


def kh_weight_matrix(H, times) -> np.ndarray:
    Hp = _hurst(H)
    times = np.ascontiguousarray(times, dtype=float)
    if times[0] != 0.0:
        raise ContractError("Cameron-Martin operators need grids starting at t=0")
    return _kh_weights(Hp.H, times.tobytes())


def apply_KH(H, hdot: GridPath) -> GridPath:
    """``h(t_k) = int_0^{t_k} K_H(t_k, s) hdot(s) ds`` with ``hdot`` piecewise constant.

    Node-centred input is reduced to cell averages first.  Output is node
    centred and starts at 0.
    """
    W = kh_weight_matrix(H, hdot.times)
    v = hdot.cell_values()
    out = np.einsum("kj,...jn->...kn", W, v)
    return GridPath(hdot.times, out)


def cm_derivative(H, hdot: GridPath) -> GridPath:
    """Node values of ``h'`` for ``h = KH hdot`` via the Beta-function reduction."""
    Hp = _hurst(H)
    if Hp.is_brownian:
        raise DomainError("the derivative formula is singular at H=1/2; use hdot directly")
    g = Hp.gamma
    t = hdot.times
    if t[0] != 0.0:
        raise ContractError("Cameron-Martin operators need grids starting at t=0")
    v = hdot.cell_values()
    tk = t[1:, None]
    I = special.betainc(1.0 - g, g, np.minimum(1.0, t[None, :] / tk))
    D = I[:, 1:] - I[:, :-1]
    C = Hp.c_H * special.gamma(1.0 - g)
    out = np.zeros(v.shape[:-2] + (t.size, v.shape[-1]))
    out[..., 1:, :] = C * tk ** g * np.einsum("kj,...jn->...kn", D, v)
    return GridPath(t, out)


def apply_KH_inverse(H, u: GridPath, min_cells: int = 32, atol0: float = 1e-12) -> GridPath:
    """Cell-centred ``hdot`` with ``KH hdot = u`` for piecewise-linear ``u``.

    Uses the Riemann-Liouville form ``hdot(t) = t^g / (c_H Gamma(1-g)) J'(t)``,
    ``J(t) = int_0^t (t-s)^{-g} s^{-g} u'(s) ds``, which for constant slopes
    per cell reduces to incomplete Beta functions.  At ``H = 1/2`` this is the
    plain cell slope.
    """
    Hp = _hurst(H)
    if u.centering != "node":
        raise ContractError("apply_KH_inverse expects a node-centred path")
    t = u.times
    if t[0] != 0.0:
        raise ContractError("Cameron-Martin operators need grids starting at t=0")
    scale = max(1.0, float(np.max(np.abs(u.values))))
    if np.any(np.abs(u.values[..., 0, :]) > atol0 * scale):
        raise ContractError("apply_KH_inverse needs u(0) = 0")
    dt = np.diff(t)
    slopes = np.diff(u.values, axis=-2) / dt[:, None]
    meta = {}
    if dt.size < min_cells:
        msg = f"grid of {dt.size} cells is coarse for the singular quadrature"
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
        meta["warning"] = msg
    if Hp.is_brownian:
        return GridPath(t, slopes, "cell", meta)
    g = Hp.gamma
    a = 1.0 - g
    tk = t[1:, None]
    I = special.betainc(a, a, np.minimum(1.0, t[None, :] / tk))
    B = special.beta(a, a) * tk ** (1.0 - 2 * g) * (I[:, 1:] - I[:, :-1])
    J = np.zeros(slopes.shape[:-2] + (t.size, slopes.shape[-1]))
    J[..., 1:, :] = np.einsum("kj,...jn->...kn", B, slopes)
    dJ = np.diff(J, axis=-2)
    # cell average of t^g J'(t): exact mean of t^g times the mean of J' away
    # from 0, and on the first cell the J ~ t^{1-2g} profile of constant slopes
    tg_mean = (t[1:] ** (1 + g) - t[:-1] ** (1 + g)) / ((1 + g) * dt)
    avg = tg_mean[:, None] * dJ / dt[:, None]
    avg[..., 0, :] = J[..., 1, :] * (1 - 2 * g) / (1 - g) * t[1] ** (g - 1)
    hdot = avg / (Hp.c_H * special.gamma(1.0 - g))
    return GridPath(t, hdot, "cell", meta)

"""Coefficient families ``(b, F, G, g)`` of the slow-fast system.

Families are registered by name so configs can select them.  Every family
splits off a diagonal linear damping from the slow drift and from the fast
drift (``b = -d * x + b_rest``, ``F = -a * y + F_rest``) so the solvers can put
it in the exponent next to the eigenvalues of ``A``.

All coefficient callables broadcast over leading batch axes; the last axis
is the mode axis.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import CapabilityError, ConfigError, DomainError
from .spectral import SpectralSpace

CONSTANT_NAMES = ("C1", "C2", "C3", "C4", "C5", "C6", "beta1", "beta2", "beta3", "L_g", "M_g")


@dataclass
class CoefficientSystem:
    """A member of a coefficient family with its declared structural constants.

    ``declared`` maps the names in ``CONSTANT_NAMES`` to floats.  ``valid_box``
    gives the radius of the ``(x, y)`` ball on which the declared constants
    hold (``inf`` for global).
    """

    name: str
    params: dict
    space: SpectralSpace
    slow_damping: np.ndarray
    fast_damping: np.ndarray
    b_rest: Callable
    F_rest: Callable
    G_diag: np.ndarray | None
    g_diag: np.ndarray | None
    declared: dict
    depends_on_y: bool = True
    bbar_fn: Callable | None = None
    Dbbar_fn: Callable | None = None
    G_fn: Callable | None = None
    g_fn: Callable | None = None
    valid_box: float = np.inf
    notes: list = field(default_factory=list)

    @property
    def dim(self) -> int:
        return self.space.dim

    # slow drift -------------------------------------------------------------
    def b(self, x, y):
        x = np.asarray(x, dtype=float)
        return -self.slow_damping * x + self.b_rest(x, np.asarray(y, dtype=float))

    def F(self, x, y):
        y = np.asarray(y, dtype=float)
        return -self.fast_damping * y + self.F_rest(np.asarray(x, dtype=float), y)

    # diffusions -------------------------------------------------------------
    def G_matrix(self, x, y):
        if self.G_fn is not None:
            return self.G_fn(x, y)
        shape = np.broadcast_shapes(np.shape(x), np.shape(y))
        return np.broadcast_to(np.diag(self.G_diag), shape + (self.dim,))

    def G_apply(self, x, y, dw):
        if self.G_fn is None:
            return self.G_diag * dw
        return np.einsum("...ij,...j->...i", self.G_fn(x, y), dw)

    def g_matrix(self, x):
        if self.g_fn is not None:
            return self.g_fn(x)
        return np.broadcast_to(np.diag(self.g_diag), np.shape(x) + (self.dim,))

    def g_apply(self, x, d):
        if self.g_fn is None:
            return self.g_diag * d
        return np.einsum("...ij,...j->...i", self.g_fn(x), d)

    @property
    def additive_g(self) -> bool:
        return self.g_fn is None

    # averaged drift -----------------------------------------------------------
    @property
    def has_closed_form_bbar(self) -> bool:
        return self.bbar_fn is not None

    def bbar(self, x):
        if self.bbar_fn is None:
            raise CapabilityError(f"family {self.name!r} has no closed-form averaged drift")
        return self.bbar_fn(np.asarray(x, dtype=float))

    def Dbbar(self, x):
        if self.Dbbar_fn is None:
            raise CapabilityError(f"family {self.name!r} has no registered derivative of the averaged drift")
        return self.Dbbar_fn(np.asarray(x, dtype=float))

    def averaged_version(self) -> "CoefficientSystem":
        """Same family with ``b(x, y) := bbar(x)``; the fast process no longer matters."""
        bb = self.bbar
        d = self.slow_damping
        return CoefficientSystem(
            name=self.name + ":averaged", params=dict(self.params), space=self.space,
            slow_damping=d, fast_damping=self.fast_damping,
            b_rest=lambda x, y: bb(x) + d * x, F_rest=self.F_rest,
            G_diag=self.G_diag, g_diag=self.g_diag, declared=dict(self.declared),
            depends_on_y=False, bbar_fn=self.bbar_fn, Dbbar_fn=self.Dbbar_fn,
            G_fn=self.G_fn, g_fn=self.g_fn, valid_box=self.valid_box, notes=list(self.notes))

    def to_config(self) -> dict:
        return {"family": self.name.split(":")[0], **self.params}


# --------------------------------------------------------------------------
# registry

_REGISTRY: dict[str, Callable] = {}


def register_family(name: str, factory: Callable) -> None:
    """``factory(space, q2_lambdas, **params) -> CoefficientSystem``."""
    _REGISTRY[name] = factory


def family_names():
    return sorted(_REGISTRY)


def make_family(name: str, space: SpectralSpace, params: dict | None = None, q2=None) -> CoefficientSystem:
    if name not in _REGISTRY:
        raise ConfigError(f"unknown coefficient family {name!r}; known: {family_names()}")
    lam2 = np.ones(space.dim) if q2 is None else np.asarray(getattr(q2, "lambdas", q2), dtype=float)
    if lam2.size != space.dim:
        raise ConfigError(f"fast covariance has {lam2.size} modes, space has {space.dim}")
    try:
        return _REGISTRY[name](space, lam2, **(params or {}))
    except TypeError as exc:
        raise ConfigError(f"bad parameters for family {name!r}: {exc}") from exc


def _vec(v, n, name):
    a = np.broadcast_to(np.asarray(v, dtype=float), (n,)).copy()
    if not np.all(np.isfinite(a)):
        raise DomainError(f"parameter {name} must be finite")
    return a


def zero_family(space, lam2):
    n = space.dim
    z = np.zeros(n)
    decl = {k: 0.0 for k in CONSTANT_NAMES}
    return CoefficientSystem(
        name="zero", params={}, space=space, slow_damping=z, fast_damping=z,
        b_rest=lambda x, y: np.zeros(np.broadcast_shapes(np.shape(x), np.shape(y))),
        F_rest=lambda x, y: np.zeros(np.broadcast_shapes(np.shape(x), np.shape(y))),
        G_diag=z, g_diag=z, declared=decl, depends_on_y=False,
        bbar_fn=lambda x: np.zeros_like(x),
        Dbbar_fn=lambda x: np.zeros(np.shape(x) + (n,)))


def linear_dissipative(space, lam2, b_x=1.0, b_y=1.0, a=1.0, c=1.0, sigma_f=1.0, g_scale=1.0,
                       probe_radius=10.0):
    """``b = -b_x x + b_y y``, ``F = -a y + c x``, ``G = sigma_f I``, ``g = g_scale I``.

    The frozen equation is an OU process with mean ``c x / (lam + a)`` per
    mode, so ``bbar(x) = -b_x x + b_y c x / (lam + a)``.  With ``b_y = 0`` the
    slow equation is linear with additive fBM noise and Gaussian.

    The dissipativity bound on ``<y, F(x, y)>`` and the sup over ``y`` of ``b``
    are only finite on a bounded set when ``c`` (resp. ``b_y``) is nonzero;
    the declared constants hold on the ball of radius ``probe_radius``.
    """
    n = space.dim
    lam = space.eigenvalues
    bx, by, av, cv = (float(b_x), float(b_y), float(a), float(c))
    sf, gs = float(sigma_f), float(g_scale)
    if np.any(lam + av <= 0):
        raise DomainError("lam_k + a must be positive for the frozen equation to be ergodic")
    gain = by * cv / (lam + av)
    R = float(probe_radius)
    if cv == 0.0:
        beta1, beta2, beta3, C5 = av, 0.0, -av, 0.0
    else:
        beta1, beta2 = av / 2, cv ** 2 * R ** 2 / (2 * av) if av > 0 else np.inf
        beta3, C5 = -av / 2, cv ** 2 / (2 * av) if av > 0 else np.inf
    if av <= 0:
        beta1, beta3 = av, -av + abs(cv)
    decl = {
        "C1": max(abs(bx), abs(by)),
        "C2": max(abs(cv), abs(av)),
        "C3": max(abs(cv), abs(av), sf * np.sqrt(n)),
        "C4": max(abs(bx), abs(by)),
        "C5": C5, "beta1": beta1, "beta2": beta2, "beta3": beta3,
        "C6": max(abs(bx), abs(by) * R + sf * np.sqrt(n)),
        "L_g": 0.0, "M_g": 0.0,
    }
    box = np.inf if (cv == 0.0 and by == 0.0) else R
    return CoefficientSystem(
        name="linear_dissipative",
        params=dict(b_x=bx, b_y=by, a=av, c=cv, sigma_f=sf, g_scale=gs, probe_radius=R),
        space=space, slow_damping=np.full(n, bx), fast_damping=np.full(n, av),
        b_rest=lambda x, y: by * y + 0.0 * x,
        F_rest=lambda x, y: cv * x + 0.0 * y,
        G_diag=np.full(n, sf), g_diag=np.full(n, gs), declared=decl,
        depends_on_y=by != 0.0,
        bbar_fn=lambda x: (-bx + gain) * x,
        Dbbar_fn=lambda x: np.broadcast_to(np.diag(-bx + gain), np.shape(x) + (n,)),
        valid_box=box)


def bounded_nonlinear(space, lam2, b_x=1.0, b_y=1.0, a=1.0, c=1.0, sigma_f=1.0, g_scale=1.0):
    """``b = -b_x x + b_y sin(y)``, ``F = -a y + c sin(x)``, additive ``G`` and ``g``.

    The frozen process is Gaussian per mode with mean ``m = c sin(x)/(lam+a)``
    and variance ``v = sigma_f^2 lam2 / (2 (lam + a))``, so
    ``bbar(x) = -b_x x + b_y sin(m) exp(-v/2)``.  All constants are global.
    """
    n = space.dim
    lam = space.eigenvalues
    bx, by, av, cv = float(b_x), float(b_y), float(a), float(c)
    sf, gs = float(sigma_f), float(g_scale)
    if av <= 0:
        raise DomainError("bounded_nonlinear needs a > 0")
    var = sf ** 2 * lam2 / (2 * (lam + av))
    damp = np.exp(-var / 2)

    def bbar(x):
        m = cv * np.sin(x) / (lam + av)
        return -bx * x + by * np.sin(m) * damp

    def Dbbar(x):
        m = cv * np.sin(x) / (lam + av)
        d = -bx + by * np.cos(m) * damp * cv * np.cos(x) / (lam + av)
        return d[..., :, None] * np.eye(n)

    sq = np.sqrt(n)
    decl = {
        "C1": max(abs(bx), abs(by)),
        "C2": max(abs(cv), av),
        "C3": max(av, (abs(cv) + sf) * sq),
        "C4": max(abs(bx), abs(by) * sq),
        "C5": cv ** 2 / (2 * av), "beta1": av / 2, "beta2": cv ** 2 * n / (2 * av), "beta3": -av / 2,
        "C6": max(abs(bx), (abs(by) + sf) * sq),
        "L_g": 0.0, "M_g": 0.0,
    }
    return CoefficientSystem(
        name="bounded_nonlinear", params=dict(b_x=bx, b_y=by, a=av, c=cv, sigma_f=sf, g_scale=gs),
        space=space, slow_damping=np.full(n, bx), fast_damping=np.full(n, av),
        b_rest=lambda x, y: by * np.sin(y) + 0.0 * x,
        F_rest=lambda x, y: cv * np.sin(x) + 0.0 * y,
        G_diag=np.full(n, sf), g_diag=np.full(n, gs), declared=decl, depends_on_y=by != 0.0,
        bbar_fn=bbar, Dbbar_fn=Dbbar)


register_family("zero", lambda space, lam2: zero_family(space, lam2))
register_family("linear_dissipative", linear_dissipative)
register_family("bounded_nonlinear", bounded_nonlinear)


def as_bbar(obj) -> Callable:
    """Accept a family, an averaged-drift table or a plain callable."""
    if isinstance(obj, CoefficientSystem):
        return obj.bbar
    if callable(obj):
        return obj
    raise ConfigError(f"cannot use {type(obj).__name__} as an averaged drift")


def as_g(obj, n: int) -> Callable:
    """``x -> g(x)`` matrix; ``None`` means the identity."""
    if obj is None:
        eye = np.eye(n)
        return lambda x: np.broadcast_to(eye, np.shape(x) + (n,))
    if isinstance(obj, CoefficientSystem):
        return obj.g_matrix
    if callable(obj):
        return obj
    m = np.asarray(obj, dtype=float)
    if m.ndim == 0:
        m = m * np.eye(n)
    elif m.ndim == 1:
        m = np.diag(m)
    return lambda x: np.broadcast_to(m, np.shape(x) + (n,))


def as_dbbar(obj) -> Callable:
    if isinstance(obj, CoefficientSystem):
        return obj.Dbbar
    if callable(obj):
        return obj
    if obj is None:
        raise CapabilityError("no derivative of the averaged drift supplied")
    m = np.asarray(obj, dtype=float)
    return lambda x: np.broadcast_to(m, np.shape(x) + (m.shape[-1],))

"""Finite spectral truncation of the state space.

The generator ``A`` is self-adjoint with ``-A e_k = lam_k e_k``; everything
(semigroup, fractional powers, graph norms) acts diagonally on coefficient
vectors in the eigenbasis.  Arrays may carry leading batch axes: the last
axis is always the mode axis.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError


@dataclass(frozen=True)
class SpectralSpace:
    """Truncated eigenbasis of ``-A`` with eigenvalues ``0 < lam_1 < ... < lam_n``."""

    eigenvalues: np.ndarray = field(repr=False)

    def __post_init__(self):
        lam = np.asarray(self.eigenvalues, dtype=float).ravel()
        if lam.size < 1:
            raise DomainError("SpectralSpace needs dim >= 1")
        if np.any(~np.isfinite(lam)) or np.any(lam <= 0):
            raise DomainError(f"eigenvalues must be finite and > 0, got {lam}")
        if np.any(np.diff(lam) <= 0):
            raise DomainError(f"eigenvalues must be strictly increasing, got {lam}")
        lam.setflags(write=False)
        object.__setattr__(self, "eigenvalues", lam)

    @property
    def dim(self) -> int:
        return self.eigenvalues.size

    @property
    def lam1(self) -> float:
        return float(self.eigenvalues[0])

    @classmethod
    def dirichlet_laplacian_1d(cls, dim: int, length: float = 1.0) -> "SpectralSpace":
        """Dirichlet Laplacian on ``(0, length)``: ``lam_k = (k pi / length)^2``."""
        k = np.arange(1, int(dim) + 1)
        return cls((k * np.pi / length) ** 2)

    @classmethod
    def from_config(cls, cfg: dict) -> "SpectralSpace":
        if "eigenvalues" in cfg:
            return cls(np.asarray(cfg["eigenvalues"], dtype=float))
        gen = cfg.get("generator")
        if gen == "dirichlet_laplacian_1d":
            return cls.dirichlet_laplacian_1d(int(cfg["dim"]), float(cfg.get("length", 1.0)))
        raise DomainError(f"unknown space generator {gen!r}")

    def to_config(self) -> dict:
        return {"eigenvalues": [float(v) for v in self.eigenvalues]}

    def check(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1:] != (self.dim,):
            raise DomainError(f"vector of shape {x.shape} does not live in a space of dim {self.dim}")
        return x


def semigroup_apply(space: SpectralSpace, t: float, x) -> np.ndarray:
    """``S_t x``: mode ``k`` is damped by ``exp(-lam_k t)``."""
    if t < 0:
        raise DomainError(f"semigroup time must be >= 0, got {t}")
    x = space.check(x)
    return np.exp(-space.eigenvalues * t) * x


def frac_power_apply(space: SpectralSpace, beta: float, x) -> np.ndarray:
    """``(-A)^beta x``."""
    x = space.check(x)
    return space.eigenvalues ** beta * x


def graph_norm(space: SpectralSpace, x, beta: float = 0.0) -> np.ndarray:
    """Norm in ``V_beta``, i.e. ``||(-A)^beta x||`` (reduces over the mode axis)."""
    return np.linalg.norm(frac_power_apply(space, beta, x), axis=-1)


def phi1(z) -> np.ndarray:
    """``(1 - exp(-z)) / z`` with the removable singularity at 0 filled in."""
    z = np.asarray(z, dtype=float)
    out = np.ones_like(z)
    big = np.abs(z) > 1e-8
    out[big] = -np.expm1(-z[big]) / z[big]
    out[~big] = 1.0 - z[~big] / 2.0
    return out


@dataclass
class BoundReport:
    """Smallest constants making each sampled inequality hold.

    ``constants`` maps a label to the max ratio lhs/rhs seen over the sample;
    ``finite`` is False when any ratio overflowed.
    """

    constants: dict
    samples: int
    finite: bool
    details: dict = field(default_factory=dict)


def _opnorm(weights) -> float:
    # diagonal operators: the operator norm is the largest |weight|
    return float(np.max(np.abs(weights)))


def verify_semigroup_bounds(space: SpectralSpace, samples: int, rng_seed: int,
                            horizon: float = 1.0) -> BoundReport:
    """Spot-check the four analytic-semigroup estimates on random parameters.

    * ``||S_t||_{V_g -> V_z} <= C t^{-(z-g)} e^{-lam_1 t}``
    * ``||S_{t-s} - id||_{V_{nu+mu} -> V_nu} <= C (t-s)^mu``
    * ``||S_{t-r} - S_{t-q}||_{V_nu -> V_g} <= C (r-q)^rho (t-r)^{-rho-g+nu}``
    * ``||S_{t-r} - S_{s-r} - S_{t-q} + S_{s-q}|| <= C (t-s)^rho (r-q)^nu (s-r)^{-(rho+nu)}``

    Degenerate draws (coincident times where the bound is singular) are
    resampled.
    """
    if samples < 1:
        raise DomainError("samples must be >= 1")
    rng = np.random.default_rng(rng_seed)
    lam = space.eigenvalues
    worst = {"eq_3_1": 0.0, "eq_3_2": 0.0, "eq_3_3": 0.0, "eq_3_4": 0.0}

    def times(k):
        while True:
            ts = np.sort(rng.uniform(0.0, horizon, size=k))
            if np.all(np.diff(ts) > 1e-9) and ts[0] > 1e-9:
                return ts

    for _ in range(samples):
        gam, zeta = np.sort(rng.uniform(0.0, 1.0, size=2))
        (t,) = times(1)
        lhs = _opnorm(lam ** (zeta - gam) * np.exp(-lam * t))
        worst["eq_3_1"] = max(worst["eq_3_1"], lhs / (t ** (gam - zeta) * np.exp(-space.lam1 * t)))

        nu = rng.uniform(0.0, 1.0)
        mu = rng.uniform(0.0, 1.0 - nu)
        while mu <= 0:
            mu = rng.uniform(0.0, 1.0 - nu)
        s, t = times(2)
        lhs = _opnorm(-np.expm1(-lam * (t - s)) * lam ** (-mu))
        worst["eq_3_2"] = max(worst["eq_3_2"], lhs / (t - s) ** mu)

        rho = rng.uniform(1e-3, 1.0)
        gam = rng.uniform(0.0, 1.0)
        nu = rng.uniform(0.0, min(1.0, gam + rho))
        q, r, t = times(3)
        lhs = _opnorm(lam ** (gam - nu) * (np.exp(-lam * (t - r)) - np.exp(-lam * (t - q))))
        worst["eq_3_3"] = max(worst["eq_3_3"], lhs / ((r - q) ** rho * (t - r) ** (-rho - gam + nu)))

        rho, nu = rng.uniform(1e-3, 1.0, size=2)
        q, r, s, t = times(4)
        w = -np.expm1(-lam * (t - s)) * np.exp(-lam * (s - r)) * -np.expm1(-lam * (r - q))
        lhs = _opnorm(w)
        worst["eq_3_4"] = max(worst["eq_3_4"],
                              lhs / ((t - s) ** rho * (r - q) ** nu * (s - r) ** (-(rho + nu))))

    finite = all(np.isfinite(v) for v in worst.values())
    return BoundReport(constants=worst, samples=samples, finite=finite)


def sampled_ratio_eq_3_3(space: SpectralSpace, samples: int, rng_seed: int,
                         rho: float, gam: float = 0.0, nu: float = 0.0,
                         horizon: float = 1.0) -> float:
    """Max ratio for the third estimate at fixed exponents (used for regression checks)."""
    rng = np.random.default_rng(rng_seed)
    lam = space.eigenvalues
    q, r, t = np.sort(rng.uniform(0.0, horizon, size=(3, samples)), axis=0)
    keep = (r - q > 1e-9) & (t - r > 1e-9)
    q, r, t = q[keep], r[keep], t[keep]
    diff = lam[:, None] ** (gam - nu) * (np.exp(-lam[:, None] * (t - r)) - np.exp(-lam[:, None] * (t - q)))
    lhs = np.max(np.abs(diff), axis=0)
    return float(np.max(lhs / ((r - q) ** rho * (t - r) ** (-rho - gam + nu))))

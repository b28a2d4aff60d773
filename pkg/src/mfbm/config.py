"""Experiment configuration files.

A config is a TOML file with these sections (``[]`` marks optional keys)::

    seed = 7                      # [] master seed; MFBM_SEED overrides it, --seed overrides both
    output_dir = "out"            # [] default "mfbm_out"

    [space]
    eigenvalues = [1.0, 4.0]      # or generator = "dirichlet_laplacian_1d", dim, [length]

    [noise]
    H = 0.75                      # fBM Hurst index, open interval (1/2, 1)
    alpha = 0.3                   # [] fractional order in (1-H, 1/2)
    q1 = [1.0, 0.5]               # [] slow covariance eigenvalues (or {decay, scale})
    q2 = [1.0, 1.0]               # [] fast covariance eigenvalues

    [family]
    name = "linear_dissipative"
    params = { b_x = 1.0, b_y = 2.0, a = 1.0, c = 1.0, sigma_f = 1.0, g_scale = 0.05 }

    [scales]
    epsilon = [0.1, 0.1]          # scalar or list
    delta = [1e-2, 1e-3]          # scalar or list (broadcast against epsilon)
    block = 0.1                   # [] Khasminskii block length, >= T/M
    h_form = "power:0.2"          # [] deviation speed: ldp | clt | power:p

    [grid]
    T = 1.0
    M = 100

    [run]
    replicas = 200                # []
    x0 = [1.0, 1.0]               # [] default ones
    y0 = [0.0, 0.0]               # [] default zeros

    [average]                     # [] for the ``average`` command
    x_grid = [0.0, 0.5, 1.0]      # one axis, or a list of axes
    replicas = 16
    burn_in = 10.0
    horizon = 1000.0
    sweep = false

    [rate]                        # [] for ``rate`` / ``mdp-rate``
    phi = "path.csv"

    [event]                       # [] for ``mc-ldp``
    kind = "mode"                 # or "weighted_norm"
    a = 1.5
    mode = 0
    rate_reference = 0.36         # or "gaussian" for the closed-form tail rate

Unknown sections or keys are rejected, so typos surface immediately.
"""
from __future__ import annotations

import copy
import hashlib
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from . import rng as _rng
from .coefficients import CoefficientSystem, family_names, make_family
from .errors import ConfigError, DomainError
from .noise import CHOLESKY_CAP, CovarianceSpec, HurstParam
from .paths import uniform_grid
from .solvers import ScaleParams
from .spectral import SpectralSpace

_SCHEMA = {
    None: {"seed", "output_dir", "space", "noise", "family", "scales", "grid", "run", "average", "rate", "event"},
    "space": {"eigenvalues", "generator", "dim", "length"},
    "noise": {"H", "alpha", "q1", "q2"},
    "family": {"name", "params"},
    "scales": {"epsilon", "delta", "block", "h_form", "h"},
    "grid": {"T", "M"},
    "run": {"replicas", "x0", "y0"},
    "average": {"x_grid", "replicas", "burn_in", "horizon", "dt", "sweep", "seed"},
    "rate": {"phi", "error_estimate"},
    "event": {"kind", "a", "mode", "direction", "center", "weights", "rate_reference", "replicas"},
}
REQUIRED = ("space", "noise", "family", "scales", "grid")


@dataclass
class ExperimentConfig:
    space: SpectralSpace
    q1: CovarianceSpec
    q2: CovarianceSpec
    hurst: HurstParam
    family: str
    params: dict
    schedule: list
    T: float
    M: int
    replicas: int
    seed: int
    output_dir: Path
    x0: np.ndarray
    y0: np.ndarray
    sections: dict = field(default_factory=dict)
    source_hash: str = ""
    seed_source: str = "config"
    defaults_applied: list = field(default_factory=list)

    @property
    def times(self) -> np.ndarray:
        return uniform_grid(self.T, self.M)

    @property
    def H(self) -> float:
        return self.hurst.H

    def coefficients(self) -> CoefficientSystem:
        return make_family(self.family, self.space, self.params, self.q2)

    def echo(self) -> dict:
        """Effective configuration with defaults filled in (JSON-ready)."""
        return {
            "seed": self.seed, "seed_source": self.seed_source, "output_dir": str(self.output_dir),
            "space": self.space.to_config(),
            "noise": {"H": self.hurst.H, "alpha": self.hurst.alpha, "q1": self.q1.lambdas.tolist(),
                      "q2": self.q2.lambdas.tolist()},
            "family": {"name": self.family, "params": dict(self.params)},
            "scales": [s.to_dict() for s in self.schedule],
            "grid": {"T": self.T, "M": self.M},
            "run": {"replicas": self.replicas, "x0": self.x0.tolist(), "y0": self.y0.tolist()},
            **{k: _jsonable(v) for k, v in self.sections.items()},
            "defaults_applied": list(self.defaults_applied),
        }


def _jsonable(v):
    return json.loads(json.dumps(v, default=lambda o: o.tolist() if hasattr(o, "tolist") else str(o)))


def _check_keys(raw: dict):
    for k in raw:
        if k not in _SCHEMA[None]:
            raise ConfigError(f"unknown top-level key {k!r}; allowed: {sorted(_SCHEMA[None])}")
    for sec in REQUIRED:
        if sec not in raw:
            raise ConfigError(f"missing required section [{sec}]")
    for sec, keys in _SCHEMA.items():
        if sec is None or sec not in raw:
            continue
        if not isinstance(raw[sec], dict):
            raise ConfigError(f"[{sec}] must be a table")
        for k in raw[sec]:
            if k not in keys:
                raise ConfigError(f"unknown key [{sec}].{k}; allowed: {sorted(keys)}")


def _field(sec, key):
    return f"[{sec}].{key}"


def _float(raw, sec, key, default=None, defaults=None):
    tab = raw.get(sec, {})
    if key not in tab:
        if default is None:
            raise ConfigError(f"missing required field {_field(sec, key)}")
        if defaults is not None:
            defaults.append(f"{_field(sec, key)} = {default}")
        return default
    try:
        return float(tab[key])
    except (TypeError, ValueError):
        raise ConfigError(f"{_field(sec, key)} must be a number, got {tab[key]!r}") from None


def _vector(val, n, name):
    a = np.asarray(val, dtype=float)
    if a.ndim == 0:
        a = np.full(n, float(a))
    if a.shape != (n,) or not np.all(np.isfinite(a)):
        raise ConfigError(f"{name} must be a finite vector of length {n}, got {val!r}")
    return a


def parse_config(raw: dict, *, source_hash: str = "", overrides: dict | None = None) -> ExperimentConfig:
    raw = copy.deepcopy(raw)
    _check_keys(raw)
    ov = {k: v for k, v in (overrides or {}).items() if v is not None}
    for key, (sec, name) in {"T": ("grid", "T"), "M": ("grid", "M"), "H": ("noise", "H"),
                             "replicas": ("run", "replicas"), "epsilon": ("scales", "epsilon"),
                             "delta": ("scales", "delta"), "block": ("scales", "block")}.items():
        if key in ov:
            raw.setdefault(sec, {})[name] = ov[key]
    if "seed" in ov:
        raw["seed"] = ov["seed"]
    if "output_dir" in ov:
        raw["output_dir"] = ov["output_dir"]
    defaults: list[str] = []

    try:
        space = SpectralSpace.from_config(raw["space"])
    except (DomainError, KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"[space]: {exc}") from None
    n = space.dim

    H = _float(raw, "noise", "H")
    if not 0.5 < H < 1.0:
        raise ConfigError(f"[noise].H = {H} rejected: fBM components need H in the open interval (1/2, 1)")
    alpha = raw["noise"].get("alpha")
    if alpha is not None:
        alpha = float(alpha)
        if not (1.0 - H < alpha < 0.5):
            raise ConfigError(f"[noise].alpha = {alpha} outside the admissible interval "
                              f"(1-H, 1/2) = ({1.0 - H:.6g}, 0.5)")
    hurst = HurstParam(H, alpha)
    if alpha is None:
        defaults.append(f"[noise].alpha = {hurst.alpha}")

    def cov(key):
        if key not in raw["noise"]:
            defaults.append(f"[noise].{key} = ones({n})")
            return CovarianceSpec(np.ones(n))
        try:
            c = CovarianceSpec.from_config(raw["noise"][key], n)
        except (DomainError, TypeError, ValueError) as exc:
            raise ConfigError(f"[noise].{key}: {exc}") from None
        if c.dim != n:
            raise ConfigError(f"[noise].{key} has {c.dim} eigenvalues, [space] has dim {n}")
        return c
    q1, q2 = cov("q1"), cov("q2")

    fam = raw["family"].get("name")
    if fam not in family_names():
        raise ConfigError(f"[family].name = {fam!r} is not a registered family {family_names()}")
    params = dict(raw["family"].get("params", {}))

    T = _float(raw, "grid", "T")
    if not T > 0:
        raise ConfigError(f"[grid].T must be > 0, got {T}")
    M = raw["grid"].get("M")
    if not isinstance(M, int) or isinstance(M, bool) or M < 1:
        raise ConfigError(f"[grid].M must be a positive integer, got {M!r}")
    if M > CHOLESKY_CAP:
        raise ConfigError(f"[grid].M = {M} exceeds the exact-sampler cap {CHOLESKY_CAP}")

    sc = raw["scales"]
    if "epsilon" not in sc or "delta" not in sc:
        raise ConfigError("[scales] needs epsilon and delta")
    try:
        eps, dl = np.broadcast_arrays(np.atleast_1d(np.asarray(sc["epsilon"], dtype=float)),
                                      np.atleast_1d(np.asarray(sc["delta"], dtype=float)))
    except ValueError:
        raise ConfigError("[scales].epsilon and [scales].delta have incompatible lengths") from None
    block = sc.get("block")
    if block is not None:
        block = float(block)
        if block < T / M * (1 - 1e-12):
            raise ConfigError(f"[scales].block = {block} is smaller than the grid step T/M = {T / M:.6g}")
    schedule = []
    for i, (e, d) in enumerate(zip(eps, dl)):
        try:
            schedule.append(ScaleParams(float(e), float(d), h=sc.get("h"), h_form=sc.get("h_form"), block=block))
        except (ConfigError, DomainError) as exc:
            raise ConfigError(f"[scales] entry {i}: {exc}") from None

    run = raw.get("run", {})
    replicas = run.get("replicas")
    if replicas is None:
        replicas = 1
        defaults.append("[run].replicas = 1")
    if not isinstance(replicas, int) or replicas < 1:
        raise ConfigError(f"[run].replicas must be a positive integer, got {replicas!r}")
    if "x0" not in run:
        defaults.append("[run].x0 = ones")
    if "y0" not in run:
        defaults.append("[run].y0 = zeros")
    x0 = _vector(run.get("x0", 1.0), n, "[run].x0")
    y0 = _vector(run.get("y0", 0.0), n, "[run].y0")

    seed_cfg = raw.get("seed")
    if seed_cfg is None:
        defaults.append("seed = 0")
    # an explicit --seed beats MFBM_SEED, which beats the file
    if "seed" in ov:
        seed, seed_source = int(ov["seed"]), "flag"
    else:
        seed = _rng.resolve_seed(seed_cfg)
        seed_source = "env" if _env_seed() else "config"
    out = Path(raw.get("output_dir", "mfbm_out"))
    if "output_dir" not in raw:
        defaults.append("output_dir = mfbm_out")

    sections = {k: raw[k] for k in ("average", "rate", "event") if k in raw}
    cfg = ExperimentConfig(space, q1, q2, hurst, fam, params, schedule, T, M, replicas, seed, out, x0, y0,
                           sections, source_hash, seed_source, defaults)
    # building the family validates its parameters eagerly
    try:
        cfg.coefficients()
    except DomainError as exc:
        raise ConfigError(f"[family].params: {exc}") from None
    return cfg


def _env_seed() -> bool:
    import os
    v = os.environ.get(_rng.SEED_ENV)
    return v is not None and bool(v.strip())


def load_config(path, overrides: dict | None = None) -> ExperimentConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    data = p.read_bytes()
    try:
        raw = tomllib.loads(data.decode("utf-8"))
    except (tomllib.TOMLDecodeError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot parse {p}: {exc}") from None
    return parse_config(raw, source_hash=hashlib.sha256(data).hexdigest(), overrides=overrides)

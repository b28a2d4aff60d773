"""Sampled paths on a time grid and their on-disk formats."""
from __future__ import annotations

import csv
import hashlib
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ContractError


@dataclass
class GridPath:
    """Coefficient vectors sampled on ``0 = t_0 < ... < t_M = T``.

    ``values`` has shape ``(M+1, n)`` for a single path or ``(R, M+1, n)``
    for ``R`` replicas.  With ``centering="cell"`` the path holds one value
    per cell ``[t_k, t_{k+1}]`` (shape ``(..., M, n)``); this is how
    derivative-type objects such as Cameron-Martin densities are stored.
    """

    times: np.ndarray
    values: np.ndarray
    centering: str = "node"
    meta: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.times.ndim != 1 or self.times.size < 2:
            raise ContractError("a grid needs at least two nodes")
        if np.any(np.diff(self.times) <= 0):
            raise ContractError("grid times must be strictly increasing")
        if self.values.ndim == 1:
            self.values = self.values[:, None]
        expected = self.times.size - (self.centering == "cell")
        if self.centering not in ("node", "cell"):
            raise ContractError(f"unknown centering {self.centering!r}")
        if self.values.ndim not in (2, 3) or self.values.shape[-2] != expected:
            raise ContractError(
                f"values of shape {self.values.shape} do not match {self.times.size} nodes "
                f"({self.centering}-centred)")

    @property
    def n_modes(self) -> int:
        return self.values.shape[-1]

    @property
    def n_steps(self) -> int:
        return self.times.size - 1

    @property
    def batched(self) -> bool:
        return self.values.ndim == 3

    @property
    def dt(self) -> np.ndarray:
        return np.diff(self.times)

    @property
    def midpoints(self) -> np.ndarray:
        return 0.5 * (self.times[1:] + self.times[:-1])

    def replica(self, r: int) -> "GridPath":
        if not self.batched:
            raise ContractError("path has no replica axis")
        return GridPath(self.times, self.values[r], self.centering)

    def mode(self, i: int) -> np.ndarray:
        return self.values[..., i]

    def cell_values(self) -> np.ndarray:
        """Cell averages under linear interpolation (identity for cell paths)."""
        if self.centering == "cell":
            return self.values
        return 0.5 * (self.values[..., 1:, :] + self.values[..., :-1, :])

    def increments(self) -> np.ndarray:
        if self.centering != "node":
            raise ContractError("increments need a node-centred path")
        return np.diff(self.values, axis=-2)

    def check_same_grid(self, other: "GridPath") -> None:
        if self.times.shape != other.times.shape or not np.allclose(self.times, other.times, rtol=0, atol=1e-14):
            raise ContractError("paths live on different grids")

    def with_values(self, values, centering: str | None = None) -> "GridPath":
        return GridPath(self.times, values, centering or self.centering)

    # --- serialisation -------------------------------------------------
    def to_csv(self, path) -> None:
        Path(path).write_text(self.to_csv_string())

    def to_csv_string(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        n = self.n_modes
        cols = ["t"] + [f"mode_{i}" for i in range(n)]
        t = self.times if self.centering == "node" else self.midpoints
        if self.batched:
            w.writerow(["replica"] + cols)
            for r, vals in enumerate(self.values):
                for tk, row in zip(t, vals):
                    w.writerow([r, repr(float(tk))] + [repr(float(v)) for v in row])
        else:
            w.writerow(cols)
            for tk, row in zip(t, self.values):
                w.writerow([repr(float(tk))] + [repr(float(v)) for v in row])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, path) -> "GridPath":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], np.array(rows[1:], dtype=float)
        if header[0] == "replica":
            reps = body[:, 0].astype(int)
            n_rep = reps.max() + 1
            t = body[reps == 0, 1]
            vals = body[:, 2:].reshape(n_rep, t.size, -1)
            return cls(t, vals)
        return cls(body[:, 0], body[:, 1:])


def grid_hash(times) -> str:
    return hashlib.sha1(np.ascontiguousarray(times, dtype=float).tobytes()).hexdigest()[:16]


def uniform_grid(T: float, M: int) -> np.ndarray:
    return np.linspace(0.0, float(T), int(M) + 1)


def l2_energy(path: GridPath) -> np.ndarray:
    """``int ||v(t)||^2 dt`` with the rule matching the path's centring.

    Node paths use the trapezoid rule, cell paths the midpoint sum.  Reduces
    over time and modes; keeps any replica axis.
    """
    sq = np.sum(path.values ** 2, axis=-1)
    if path.centering == "cell":
        return np.sum(sq * path.dt, axis=-1)
    return np.sum(0.5 * (sq[..., 1:] + sq[..., :-1]) * path.dt, axis=-1)


class PathCache:
    """Binary ``.npz`` cache for sampled noise keyed by (seed, H, grid hash, tag)."""

    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def key(self, seed: int, H: float, times, tag: str = "") -> Path:
        return self.root / f"{tag}s{seed}_H{H:.6f}_{grid_hash(times)}.npz"

    def load(self, seed, H, times, tag=""):
        p = self.key(seed, H, times, tag)
        if not p.exists():
            return None
        with np.load(p) as z:
            return GridPath(z["times"], z["values"])

    def store(self, seed, H, path: GridPath, tag="") -> Path:
        p = self.key(seed, H, path.times, tag)
        np.savez(p, times=path.times, values=path.values)
        return p

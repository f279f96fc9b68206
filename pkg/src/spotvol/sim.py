"""Sample paths of a Heston log-price with symmetric stable jumps.

The observed log-price advances as

    dX = b dt + sqrt(V) dW + dJ,
    dV = kappa (theta - V) dt + xi sqrt(V) dB,

with corr(W, B) = rho and J a symmetric strictly Y-stable Levy process whose
unit-time increment has characteristic function exp(-c^Y |u|^Y).  Variance is
discretised with full-truncation Euler; jumps are exact in distribution.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

__all__ = [
    "ModelSpec",
    "PathSample",
    "stable_increments",
    "simulate_path",
    "path_rng",
    "write_path_csv",
    "read_path_csv",
]


@dataclass(frozen=True)
class ModelSpec:
    """Parameters of one simulated market.

    ``jump_cap`` is a one-sided cap applied to every jump increment
    (``min(dJ, jump_cap)``); ``None`` leaves jumps uncapped.
    """

    x0: float = 0.0
    v0: float = 0.0
    drift_b: float = 0.0
    kappa: float = 0.0
    theta: float = 0.0
    xi: float = 0.0
    rho: float = 0.0
    jump_y: float = 1.5
    jump_scale: float = 0.0
    jump_cap: float | None = None
    horizon_T: float = 1.0
    n_steps: int = 100

    def __post_init__(self):
        errors = []
        if self.kappa < 0:
            errors.append("kappa must be >= 0")
        if self.theta < 0:
            errors.append("theta must be >= 0")
        if self.xi < 0:
            errors.append("xi must be >= 0")
        if abs(self.rho) > 1:
            errors.append("rho must lie in [-1, 1]")
        if not 0 < self.jump_y < 2:
            errors.append("jump_y must lie in (0, 2)")
        if self.jump_scale < 0:
            errors.append("jump_scale must be >= 0")
        if self.v0 < 0:
            errors.append("v0 must be >= 0")
        if int(self.n_steps) != self.n_steps or self.n_steps < 2:
            errors.append("n_steps must be an integer >= 2")
        if not self.horizon_T > 0:
            errors.append("horizon_T must be > 0")
        if errors:
            raise ValueError("invalid ModelSpec: " + "; ".join(errors))
        object.__setattr__(self, "n_steps", int(self.n_steps))

    @property
    def dt(self) -> float:
        return self.horizon_T / self.n_steps

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True, eq=False)
class PathSample:
    """One simulated path on the grid ``times[i] = i * dt``.

    Arrays are made read-only on construction so that a sample can be shared
    between threads.
    """

    times: np.ndarray
    x: np.ndarray
    v: np.ndarray
    seed: object = None
    horizon_T: float = field(default=None)

    def __post_init__(self):
        n = len(self.times)
        if len(self.x) != n or len(self.v) != n:
            raise ValueError("times, x and v must have equal length")
        if n < 2:
            raise ValueError("a path needs at least two observations")
        for name in ("times", "x", "v"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.horizon_T is None:
            object.__setattr__(self, "horizon_T", float(self.times[-1]))

    @property
    def n(self) -> int:
        """Number of increments."""
        return len(self.times) - 1

    @property
    def dt(self) -> float:
        return self.horizon_T / self.n

    @property
    def increments(self) -> np.ndarray:
        return np.diff(self.x)


def stable_increments(y, scale, dt, count, stream):
    """Increments over ``dt`` of a symmetric strictly ``y``-stable process.

    Uses the Chambers-Mallows-Stuck transform.  With ``scale = c`` the
    unit-time increment has characteristic function ``exp(-c^y |u|^y)``, and
    an increment over ``dt`` is ``dt**(1/y) * c * S`` for ``S`` standard.
    """
    if not 0 < y < 2:
        raise ValueError(f"stability index must lie in (0, 2), got {y}")
    if not dt > 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    if scale < 0:
        raise ValueError(f"scale must be >= 0, got {scale}")
    count = int(count)
    if scale == 0:
        return np.zeros(count)
    u = stream.uniform(-0.5 * np.pi, 0.5 * np.pi, size=count)
    w = stream.standard_exponential(size=count)
    if y == 1.0:
        s = np.tan(u)
    else:
        s = (np.sin(y * u) / np.cos(u) ** (1.0 / y)
             * (np.cos((1.0 - y) * u) / w) ** ((1.0 - y) / y))
    return (dt ** (1.0 / y) * scale) * s


def path_rng(master_seed: int, path_index: int, stream: int = 0) -> np.random.Generator:
    """Independent generator for path ``path_index`` of a run.

    Streams depend only on ``(master_seed, path_index, stream)``, so paths can
    be generated in any order or on any worker.  ``stream > 0`` selects extra
    families of paths (used for independent pilot runs).
    """
    key = (int(path_index),) if stream == 0 else (int(path_index), int(stream))
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=key)
    return np.random.Generator(np.random.PCG64(ss))


def simulate_path(model: ModelSpec, stream: np.random.Generator, seed=None) -> PathSample:
    """Simulate one path of ``model``.

    Draw order is fixed (two Gaussian blocks, then the stable block) so a
    given generator state always yields the same path.
    """
    n = model.n_steps
    dt = model.dt
    sq = math.sqrt(dt)
    z1 = stream.standard_normal(n)
    z2 = stream.standard_normal(n)
    dw = sq * z1
    db = sq * (model.rho * z1 + math.sqrt(1.0 - model.rho ** 2) * z2)
    dj = stable_increments(model.jump_y, model.jump_scale, dt, n, stream)
    if model.jump_cap is not None:
        dj = np.minimum(dj, model.jump_cap)

    kappa, theta, xi = model.kappa, model.theta, model.xi
    vi = float(model.v0)
    db_list = db.tolist()
    dw_list = dw.tolist()
    out_v = [vi]
    out_w = []
    for i in range(n):
        vp = vi if vi > 0.0 else 0.0
        rv = math.sqrt(vp)
        out_w.append(rv * dw_list[i])
        vi = vi + kappa * (theta - vp) * dt + xi * rv * db_list[i]
        out_v.append(vi if vi > 0.0 else 0.0)
    v = np.array(out_v)

    times = np.arange(n + 1) * dt
    x = np.empty(n + 1)
    x[0] = 0.0
    np.cumsum(np.array(out_w) + dj, out=x[1:])
    # drift enters through the grid so a noise-free path is exactly x0 + b t
    x += model.x0 + model.drift_b * times
    return PathSample(times=times, x=x, v=v, seed=seed, horizon_T=model.horizon_T)


def write_path_csv(path: PathSample, dest) -> None:
    """Write a path as CSV with header ``t,x,v``."""
    dest = Path(dest)
    with dest.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "x", "v"])
        for t, xv, vv in zip(path.times, path.x, path.v):
            writer.writerow([repr(float(t)), repr(float(xv)), repr(float(vv))])


def read_path_csv(src) -> PathSample:
    data = np.loadtxt(Path(src), delimiter=",", skiprows=1, ndmin=2)
    return PathSample(times=data[:, 0], x=data[:, 1], v=data[:, 2])

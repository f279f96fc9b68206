"""Closed-form small-time quantities for the truncated kernel estimator.

Jumps are described by a Levy density ``C_+ x^{-1-Y}`` on ``x > 0`` and
``C_- |x|^{-1-Y}`` on ``x < 0``, multiplied by ``|chi|^Y``.  For a symmetric
``Y``-stable process whose unit increment has characteristic function
``exp(-c^Y |u|^Y)`` the two constants coincide, see
:func:`stable_levy_constant`.

Everything here is a formula, apart from :func:`mc_truncated_moment_oracle`,
a brute-force Monte Carlo check of the truncated moment expansion.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special, stats

from .kernels import KernelSpec, eval_scaled, k_squared_integral, l_squared_integral
from .sim import stable_increments

__all__ = [
    "JumpActivityParams",
    "stable_levy_constant",
    "stable_scale_from_levy",
    "c_coeff",
    "d_coeff",
    "truncated_moment_expansion",
    "truncated_moment_difference",
    "mc_truncated_moment_oracle",
    "bias_A",
    "u_rate",
    "difference_clt_variance",
    "z1_variance",
    "z2_variance",
    "feasible_ci",
]


@dataclass(frozen=True)
class JumpActivityParams:
    y: float
    c_plus: float
    c_minus: float
    chi: float = 1.0
    sigma2: float = 0.0

    def __post_init__(self):
        if not 0 < self.y < 2 or self.y == 1:
            raise ValueError("y must lie in (0, 2) and differ from 1")
        if not (self.c_plus > 0 and self.c_minus > 0):
            raise ValueError("c_plus and c_minus must be > 0")
        if self.sigma2 < 0:
            raise ValueError("sigma2 must be >= 0")

    @classmethod
    def from_stable(cls, y: float, scale: float, sigma2: float = 0.0, chi: float = 1.0):
        """Parameters of a symmetric stable process with the given scale."""
        c = stable_levy_constant(y, scale)
        return cls(y=y, c_plus=c, c_minus=c, chi=chi, sigma2=sigma2)

    @property
    def sigma(self) -> float:
        return math.sqrt(self.sigma2)


def stable_levy_constant(y: float, scale: float) -> float:
    """Levy density constant of a symmetric stable law.

    The law with characteristic function ``exp(-scale^y |u|^y)`` has density
    ``C |x|^{-1-y}`` with ``C = scale^y y (1 - y) / (2 Gamma(2 - y) cos(pi y / 2))``.
    """
    if not 0 < y < 2 or y == 1:
        raise ValueError("y must lie in (0, 2) and differ from 1")
    return scale ** y * y * (1.0 - y) / (2.0 * special.gamma(2.0 - y) * math.cos(0.5 * math.pi * y))


def stable_scale_from_levy(y: float, c: float) -> float:
    """Inverse of :func:`stable_levy_constant` in ``scale``."""
    return (c / stable_levy_constant(y, 1.0)) ** (1.0 / y)


def c_coeff(p: int, params: JumpActivityParams) -> float:
    """``(C_+ + C_-) |chi|^Y / (2p - Y)``."""
    if 2 * p <= params.y:
        raise ValueError(f"need 2p > Y, got p={p}, Y={params.y}")
    return (params.c_plus + params.c_minus) * abs(params.chi) ** params.y / (2 * p - params.y)


def d_coeff(params: JumpActivityParams) -> float:
    """``(C_+ + C_-) (Y+1)(Y+2) / (2Y) sigma^2 |chi|^Y``."""
    y = params.y
    return ((params.c_plus + params.c_minus) * (y + 1) * (y + 2) / (2 * y)
            * params.sigma2 * abs(params.chi) ** y)


def _double_factorial_odd(p: int) -> int:
    return math.prod(range(1, 2 * p, 2))


def truncated_moment_expansion(p: int, params: JumpActivityParams, dt: float, v: float) -> float:
    """Small-``dt`` expansion of ``E[dX^{2p} 1{|dX| <= v}]``.

    ``p = 1`` keeps the second-order term ``D_1 dt^2 v^{-Y}``; higher ``p``
    stop at the leading jump term.
    """
    if p < 1:
        raise ValueError("p must be >= 1")
    if not v > math.sqrt(dt):
        raise ValueError("expansion needs v > sqrt(dt)")
    y = params.y
    if p == 1:
        return (params.sigma2 * dt + c_coeff(1, params) * dt * v ** (2 - y)
                + d_coeff(params) * dt ** 2 * v ** (-y))
    return (_double_factorial_odd(p) * params.sigma2 ** p * dt ** p
            + c_coeff(p, params) * dt * v ** (2 * p - y))


def truncated_moment_difference(params: JumpActivityParams, dt: float, v: float,
                                zeta: float) -> float:
    """Expansion of ``E[dX^2 1{v < |dX| <= zeta v}]``."""
    if not zeta > 1:
        raise ValueError("zeta must be > 1")
    y = params.y
    return (c_coeff(1, params) * dt * (zeta ** (2 - y) - 1) * v ** (2 - y)
            + d_coeff(params) * dt ** 2 * (zeta ** (-y) - 1) * v ** (-y))


def mc_truncated_moment_oracle(p: int, params: JumpActivityParams, dt: float, v: float,
                               n_draws: int, stream: np.random.Generator,
                               zeta: float | None = None, chunk: int = 250_000):
    """Monte Carlo estimate of ``E[dX^{2p} 1{|dX| <= v}]`` and its standard error.

    ``dX = sigma sqrt(dt) Z + chi dJ`` with ``dJ`` a symmetric stable
    increment.  With ``zeta`` set the indicator becomes ``v < |dX| <= zeta v``.
    Only symmetric jump parameters (``c_plus == c_minus``) can be simulated.
    """
    if n_draws < 10_000:
        raise ValueError("n_draws must be >= 1e4")
    if not math.isclose(params.c_plus, params.c_minus, rel_tol=1e-12):
        raise ValueError("oracle simulates symmetric stable jumps only")
    scale = stable_scale_from_levy(params.y, params.c_plus) * abs(params.chi)
    sq = params.sigma * math.sqrt(dt)
    total = 0.0
    total_sq = 0.0
    done = 0
    while done < n_draws:
        k = min(chunk, n_draws - done)
        z = stream.standard_normal(k)
        dj = stable_increments(params.y, scale, dt, k, stream)
        dx = sq * z + dj
        a = np.abs(dx)
        if zeta is None:
            keep = a <= v
        else:
            keep = (a > v) & (a <= zeta * v)
        g = np.where(keep, dx ** (2 * p), 0.0)
        total += float(g.sum())
        total_sq += float(np.dot(g, g))
        done += k
    mean = total / n_draws
    var = max(total_sq / n_draws - mean * mean, 0.0) * n_draws / (n_draws - 1)
    return mean, math.sqrt(var / n_draws)


def bias_A(v: float, m: float, kernel: KernelSpec, params_grid, tau: float, dt: float) -> float:
    """Kernel-weighted threshold bias of the stage-0 estimator at ``tau``.

    ``params_grid[i-1]`` holds the parameters in force over step ``i``; the
    weights are those of the estimator itself, so constant parameters give
    ``C_1 v^{2-Y} + D_1 dt v^{-Y}``.
    """
    params_grid = list(params_grid)
    n = len(params_grid)
    left = np.arange(n) * dt
    w = eval_scaled(kernel, m * dt, left - tau)
    den = dt * w.sum()
    if not den > 0:
        raise ZeroDivisionError(f"kernel weights vanish around tau={tau}")
    terms = np.array([c_coeff(1, q) * dt * v ** (2 - q.y) + d_coeff(q) * dt ** 2 * v ** (-q.y)
                      for q in params_grid])
    return float(np.dot(w, terms) / den)


def u_rate(dt: float, v: float, y: float) -> float:
    """Rate ``dt^{-1/2} v^{2 - y/2}`` of the threshold-difference statistic."""
    if not (dt > 0 and v > 0):
        raise ValueError("need dt > 0 and v > 0")
    return dt ** -0.5 * v ** (2 - 0.5 * y)


def difference_clt_variance(zeta: float, params: JumpActivityParams, kernel: KernelSpec) -> float:
    """``(C_+ + C_-) |chi|^Y / (4 - Y) (zeta^{4-Y} - 1) int K^2``."""
    if not zeta > 1:
        raise ValueError("zeta must be > 1")
    y = params.y
    return ((params.c_plus + params.c_minus) * abs(params.chi) ** y / (4 - y)
            * (zeta ** (4 - y) - 1) * k_squared_integral(kernel))


def z1_variance(sigma2: float, kernel: KernelSpec) -> float:
    """Sampling-error variance ``2 sigma^4 int K^2``."""
    return 2.0 * sigma2 ** 2 * k_squared_integral(kernel)


def z2_variance(vol_of_vol2: float, kernel: KernelSpec) -> float:
    """Smoothing-error variance ``sigma_tilde^2 int L^2``; the input is never estimated here."""
    return vol_of_vol2 * l_squared_integral(kernel)


def feasible_ci(estimate, m: float, kernel: KernelSpec, level: float = 0.95,
                k2: float | None = None) -> tuple[float, float]:
    """Plug-in interval ``c +/- z sqrt(2 c^2 int K^2 / m)``.

    Only the sampling error is accounted for, which is the right limit when
    the bandwidth shrinks faster than ``sqrt(dt)`` (``m sqrt(dt) -> 0``).
    ``estimate`` may be a :class:`SpotEstimate` or a plain number.  Pass
    ``k2`` to skip the quadrature for ``int K^2``.
    """
    value = float(getattr(estimate, "value", estimate))
    if value < 0:
        raise ValueError("estimate must be >= 0")
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    if not m > 0:
        raise ValueError("m must be > 0")
    k2 = k_squared_integral(kernel) if k2 is None else k2
    z = stats.norm.ppf(0.5 + 0.5 * level)
    half = z * math.sqrt(2.0 * value ** 2 * k2 / m)
    return value - half, value + half

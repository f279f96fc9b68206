"""Smoothing kernels and the functionals that enter bias and variance formulas.

A kernel is a nonnegative, bounded, integrable density ``K`` on the real
line.  ``K_b(u) = K(u / b) / b`` is its rescaling to bandwidth ``b``.  Besides
``int K^2`` (variance of the sampling error) we need

    L(t) = int_t^inf K(u) du           for t >= 0,
    L(t) = -int_-inf^t K(u) du         for t < 0,

whose squared integral scales the variance contributed by volatility moving
inside the smoothing window.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy import integrate

__all__ = [
    "KernelSpec",
    "KernelCheck",
    "ValidationReport",
    "EXPONENTIAL",
    "UNIFORM2",
    "QUARTIC_K3",
    "BUILTIN_KERNELS",
    "get_kernel",
    "tabulated_kernel",
    "load_kernel_csv",
    "eval_scaled",
    "integrate_kernel",
    "k_squared_integral",
    "l_function",
    "l_squared_integral",
    "validate_kernel",
]

QUAD_TOL = 1e-9


class QuadratureError(RuntimeError):
    pass


@dataclass(frozen=True)
class KernelSpec:
    """A kernel ``K`` with its support.

    ``support`` is ``(lo, hi)`` for compactly supported kernels and ``None``
    when the support is the whole line.  ``breakpoints`` lists points where
    ``K`` or its derivative is discontinuous; quadrature splits there.
    """

    name: str
    func: Callable[[np.ndarray], np.ndarray] = field(repr=False, compare=False)
    support: tuple[float, float] | None = None
    breakpoints: tuple[float, ...] = ()

    def __call__(self, x):
        return self.func(np.asarray(x, dtype=float))

    @property
    def bounded_support(self) -> bool:
        return self.support is not None


def _exponential(x):
    return 0.5 * np.exp(-np.abs(x))


def _uniform2(x):
    return np.where(np.abs(x) <= 1.0, 0.5, 0.0)


def _quartic(x):
    return np.where(np.abs(x) <= 1.0, (15.0 / 16.0) * (1.0 - x * x) ** 2, 0.0)


EXPONENTIAL = KernelSpec("exponential", _exponential, None, (0.0,))
UNIFORM2 = KernelSpec("uniform2", _uniform2, (-1.0, 1.0), (-1.0, 1.0))
QUARTIC_K3 = KernelSpec("quartic_k3", _quartic, (-1.0, 1.0), (-1.0, 1.0))

BUILTIN_KERNELS = {k.name: k for k in (EXPONENTIAL, UNIFORM2, QUARTIC_K3)}
_ALIASES = {"exp": "exponential", "unif": "uniform2", "uniform": "uniform2",
            "k3": "quartic_k3", "quartic": "quartic_k3"}


def get_kernel(name: str) -> KernelSpec:
    """Look up a built-in kernel by name (short aliases accepted)."""
    key = _ALIASES.get(name, name)
    try:
        return BUILTIN_KERNELS[key]
    except KeyError:
        raise ValueError(
            f"unknown kernel {name!r}; choose from {sorted(BUILTIN_KERNELS)}") from None


def tabulated_kernel(xs, ks, name: str = "custom") -> KernelSpec:
    """Kernel defined by linear interpolation of ``(x, K(x))`` samples.

    The kernel is zero outside ``[xs[0], xs[-1]]``.  Interpolation makes this
    an approximation of whatever density produced the table; it is not
    renormalised.
    """
    xs = np.asarray(xs, dtype=float)
    ks = np.asarray(ks, dtype=float)
    if xs.ndim != 1 or xs.shape != ks.shape or len(xs) < 2:
        raise ValueError("need matching 1-d arrays with at least two nodes")
    if np.any(np.diff(xs) <= 0):
        raise ValueError("x nodes must be strictly increasing")
    lo, hi = float(xs[0]), float(xs[-1])

    def func(x):
        return np.interp(x, xs, ks, left=0.0, right=0.0)

    return KernelSpec(name, func, (lo, hi), tuple(float(v) for v in xs))


def load_kernel_csv(path, name: str | None = None) -> KernelSpec:
    """Read a tabulated kernel from a two-column CSV (header optional)."""
    path = Path(path)
    with path.open() as fh:
        first = fh.readline()
    skip = 0 if _is_numeric_row(first) else 1
    data = np.loadtxt(path, delimiter=",", skiprows=skip, ndmin=2)
    return tabulated_kernel(data[:, 0], data[:, 1], name or path.stem)


def _is_numeric_row(line: str) -> bool:
    try:
        [float(tok) for tok in line.split(",")]
    except ValueError:
        return False
    return True


def eval_scaled(kernel: KernelSpec, b: float, u):
    """``K_b(u) = K(u / b) / b``."""
    if not b > 0:
        raise ValueError(f"bandwidth must be > 0, got {b}")
    return kernel(np.asarray(u, dtype=float) / b) / b


def _pieces(kernel: KernelSpec, lo=-math.inf, hi=math.inf):
    """Split ``[lo, hi]`` at the kernel's support ends and breakpoints."""
    if kernel.support is not None:
        lo = max(lo, kernel.support[0])
        hi = min(hi, kernel.support[1])
    if lo >= hi:
        return []
    cuts = sorted({p for p in kernel.breakpoints if lo < p < hi})
    edges = [lo, *cuts, hi]
    return list(zip(edges[:-1], edges[1:]))


def _quad(f, a, b, tol=QUAD_TOL):
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            val, err = integrate.quad(f, a, b, epsabs=tol, epsrel=1e-12, limit=500)
        except integrate.IntegrationWarning as exc:
            raise QuadratureError(f"quadrature on [{a}, {b}] did not converge: {exc}") from exc
    return val


def _piecewise_quad(kernel, g, lo=-math.inf, hi=math.inf, tol=QUAD_TOL):
    return sum(_quad(g, a, b, tol) for a, b in _pieces(kernel, lo, hi))


def integrate_kernel(kernel: KernelSpec, lo=-math.inf, hi=math.inf) -> float:
    """``int_lo^hi K(x) dx``."""
    return _piecewise_quad(kernel, lambda x: float(kernel(x)), lo, hi)


def k_squared_integral(kernel: KernelSpec) -> float:
    """``int K(x)^2 dx``."""
    return _piecewise_quad(kernel, lambda x: float(kernel(x)) ** 2)


def l_function(kernel: KernelSpec, t: float) -> float:
    """Upper tail mass for ``t >= 0``, negative lower tail mass for ``t < 0``."""
    if t >= 0:
        return integrate_kernel(kernel, t, math.inf)
    return -integrate_kernel(kernel, -math.inf, t)


def l_squared_integral(kernel: KernelSpec) -> float:
    """``int L(t)^2 dt``."""
    def g(t):
        return l_function(kernel, t) ** 2

    lo, hi = kernel.support if kernel.support is not None else (-math.inf, math.inf)
    # L is zero beyond the support, except on the stretch between it and 0
    lo, hi = min(lo, 0.0), max(hi, 0.0)
    cuts = sorted({0.0, *(p for p in kernel.breakpoints if lo < p < hi)} - {lo, hi})
    edges = [lo, *cuts, hi]
    return sum(_quad(g, a, b) for a, b in zip(edges[:-1], edges[1:]))


@dataclass
class KernelCheck:
    name: str
    passed: bool
    residual: float
    detail: str = ""


@dataclass
class ValidationReport:
    kernel: str
    checks: list[KernelCheck]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name: str) -> KernelCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "kernel": self.kernel,
            "passed": self.passed,
            "checks": [c.__dict__.copy() for c in self.checks],
        }


def _probe_grid(kernel: KernelSpec) -> np.ndarray:
    if kernel.support is not None:
        lo, hi = kernel.support
        pad = 0.1 * (hi - lo)
        grid = np.linspace(lo - pad, hi + pad, 20001)
    else:
        grid = np.concatenate([np.linspace(-50.0, 50.0, 20001),
                               -np.logspace(2, 6, 200), np.logspace(2, 6, 200)])
    return np.sort(grid)


def validate_kernel(kernel: KernelSpec, tol: float = 1e-8) -> ValidationReport:
    """Numerically check the kernel conditions; never raises on failure."""
    checks = []

    def run(name, fn):
        try:
            checks.append(fn())
        except Exception as exc:  # reported, not propagated
            checks.append(KernelCheck(name, False, math.nan, f"{type(exc).__name__}: {exc}"))

    def normalization():
        mass = integrate_kernel(kernel)
        res = abs(mass - 1.0)
        return KernelCheck("normalization", res <= tol, res, f"integral = {mass:.12g}")

    grid = _probe_grid(kernel)

    def nonnegative():
        vals = kernel(grid)
        worst = float(min(vals.min(), 0.0))
        return KernelCheck("nonnegative", worst >= 0.0, abs(worst))

    def bounded():
        vals = kernel(grid)
        top = float(np.max(vals))
        return KernelCheck("bounded", math.isfinite(top), top, f"max on probe grid = {top:.6g}")

    def lipschitz():
        # slopes between neighbouring probe points, skipping declared breakpoints
        dense = grid[np.abs(grid) <= 60]
        vals = kernel(dense)
        slopes = np.abs(np.diff(vals) / np.diff(dense))
        mids = 0.5 * (dense[1:] + dense[:-1])
        h = np.diff(dense)
        keep = np.ones_like(mids, dtype=bool)
        for p in kernel.breakpoints:
            keep &= np.abs(mids - p) > h
        worst = float(slopes[keep].max()) if keep.any() else 0.0
        return KernelCheck("lipschitz", worst < 1e6, worst, "max slope off breakpoints")

    def first_moment():
        m1 = _piecewise_quad(kernel, lambda x: abs(x) * float(kernel(x)))
        return KernelCheck("first_moment", math.isfinite(m1), m1, "int |x K(x)| dx")

    def tail_decay():
        ys = np.array([1e3, -1e3, 1e6, -1e6])
        vals = np.abs(kernel(ys) * ys ** 2)
        worst = float(vals.max())
        return KernelCheck("tail_decay", worst <= tol, worst, "|K(y) y^2| at |y| = 1e3, 1e6")

    run("normalization", normalization)
    run("nonnegative", nonnegative)
    run("bounded", bounded)
    run("lipschitz", lipschitz)
    run("first_moment", first_moment)
    run("tail_decay", tail_decay)
    return ValidationReport(kernel.name, checks)

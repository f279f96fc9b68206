from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from spotvol.kernels import (
    BUILTIN_KERNELS,
    EXPONENTIAL,
    QUARTIC_K3,
    UNIFORM2,
    KernelSpec,
    eval_scaled,
    get_kernel,
    k_squared_integral,
    l_function,
    l_squared_integral,
    load_kernel_csv,
    tabulated_kernel,
    validate_kernel,
)

KERNELS = list(BUILTIN_KERNELS.values())


def test_eval_scaled_examples():
    assert eval_scaled(EXPONENTIAL, 1.0, 0.0) == 0.5
    assert eval_scaled(UNIFORM2, 0.5, 0.6) == 0.0
    assert eval_scaled(QUARTIC_K3, 2.0, 0.0) == pytest.approx(15 / 32, abs=1e-15)
    with pytest.raises(ValueError):
        eval_scaled(EXPONENTIAL, 0.0, 1.0)


@pytest.mark.parametrize("kernel,expected", [
    (EXPONENTIAL, 0.25),
    (UNIFORM2, 0.5),
    (QUARTIC_K3, 5 / 7),
])
def test_k_squared_analytic(kernel, expected):
    assert k_squared_integral(kernel) == pytest.approx(expected, abs=1e-9)


def test_l_function_values():
    assert l_function(EXPONENTIAL, 0.0) == pytest.approx(0.5, abs=1e-12)
    assert l_function(EXPONENTIAL, 40.0) < 1e-15
    for kern in KERNELS:
        for t in (0.1, 0.5, 0.9, 2.0):
            assert l_function(kern, -t) == pytest.approx(-l_function(kern, t), abs=1e-12)


def test_l_function_jump_and_monotonicity():
    for kern in KERNELS:
        assert l_function(kern, 0.0) - l_function(kern, -1e-12) == pytest.approx(1.0, abs=1e-9)
        ts = np.linspace(0, 3, 31)
        vals = [l_function(kern, t) for t in ts]
        assert np.all(np.diff(vals) <= 1e-12)


def test_l_squared_integrals():
    assert l_squared_integral(EXPONENTIAL) == pytest.approx(0.25, abs=1e-9)
    # L(t) = (1 - |t|)/2 on [-1, 1] gives 2 * int_0^1 (1 - t)^2 / 4 dt = 1/6
    assert l_squared_integral(UNIFORM2) == pytest.approx(1 / 6, abs=1e-9)
    assert l_squared_integral(QUARTIC_K3) > 0


@pytest.mark.parametrize("kernel", KERNELS, ids=lambda k: k.name)
def test_builtins_validate(kernel):
    report = validate_kernel(kernel)
    assert report.passed, report.to_dict()


def test_validate_reports_unnormalised_kernels():
    ramp = KernelSpec("ramp", lambda x: np.where((x >= 0) & (x <= 1), x, 0.0), (0.0, 1.0),
                      (0.0, 1.0))
    rep = validate_kernel(ramp)
    assert not rep.passed
    assert rep["normalization"].residual == pytest.approx(0.5, abs=1e-9)

    gauss2 = KernelSpec("gauss2", lambda x: 2 * np.exp(-x * x / 2) / math.sqrt(2 * math.pi))
    rep = validate_kernel(gauss2)
    assert rep["normalization"].residual == pytest.approx(1.0, abs=1e-8)


def test_validate_reports_negative_values():
    wiggle = KernelSpec("wiggle", lambda x: np.where(np.abs(x) <= 1, 0.5 + 0.75 * np.cos(np.pi * x), 0.0),
                        (-1.0, 1.0), (-1.0, 1.0))
    rep = validate_kernel(wiggle)
    assert not rep["nonnegative"].passed
    assert rep["nonnegative"].residual == pytest.approx(0.25, abs=1e-6)


def test_get_kernel_aliases_and_errors():
    assert get_kernel("exp") is EXPONENTIAL
    assert get_kernel("k3") is QUARTIC_K3
    with pytest.raises(ValueError, match="unknown kernel"):
        get_kernel("gaussian")


def test_tabulated_kernel_csv(tmp_path):
    xs = np.linspace(-1, 1, 401)
    dest = tmp_path / "tri.csv"
    dest.write_text("x,k\n" + "\n".join(f"{x:.17g},{1 - abs(x):.17g}" for x in xs) + "\n")
    kern = load_kernel_csv(dest)
    assert kern.name == "tri"
    assert kern(0.25) == pytest.approx(0.75, abs=1e-12)
    assert kern(1.5) == 0.0
    # triangle: int K^2 = 2/3 exactly; linear interpolation is exact for it
    assert k_squared_integral(kern) == pytest.approx(2 / 3, abs=1e-8)
    assert validate_kernel(kern).passed
    with pytest.raises(ValueError):
        tabulated_kernel([0, 0], [1, 1])


@settings(max_examples=30, deadline=None)
@given(b=st.floats(0.05, 20.0), idx=st.integers(0, 2))
def test_scaled_kernel_integrates_to_one(b, idx):
    kern = KERNELS[idx]
    pts = [b * p for p in kern.breakpoints]
    lo, hi = (-math.inf, math.inf) if kern.support is None else (b * kern.support[0], b * kern.support[1])
    edges = [lo, *sorted(set(pts) - {lo, hi}), hi]
    total = sum(integrate.quad(lambda u: float(eval_scaled(kern, b, u)), a, c, limit=200)[0]
                for a, c in zip(edges[:-1], edges[1:]))
    assert total == pytest.approx(1.0, abs=1e-6)


@settings(max_examples=20, deadline=None)
@given(b=st.floats(0.1, 10.0), idx=st.integers(0, 2))
def test_k_squared_scaling_identity(b, idx):
    kern = KERNELS[idx]
    lo, hi = (-math.inf, math.inf) if kern.support is None else (b * kern.support[0], b * kern.support[1])
    edges = [lo, *sorted({b * p for p in kern.breakpoints} - {lo, hi}), hi]
    val = sum(integrate.quad(lambda u: float(eval_scaled(kern, b, u)) ** 2, a, c, limit=200)[0]
              for a, c in zip(edges[:-1], edges[1:]))
    assert val * b == pytest.approx(k_squared_integral(kern), abs=1e-6)

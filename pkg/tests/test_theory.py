from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import special

from spotvol.kernels import EXPONENTIAL, UNIFORM2
from spotvol.sim import stable_increments
from spotvol.theory import (
    JumpActivityParams,
    bias_A,
    c_coeff,
    d_coeff,
    difference_clt_variance,
    feasible_ci,
    mc_truncated_moment_oracle,
    stable_levy_constant,
    stable_scale_from_levy,
    truncated_moment_difference,
    truncated_moment_expansion,
    u_rate,
    z1_variance,
    z2_variance,
)


def params(y=1.5, c=0.5, chi=1.0, sigma2=1.0):
    return JumpActivityParams(y=y, c_plus=c, c_minus=c, chi=chi, sigma2=sigma2)


def test_param_validation():
    with pytest.raises(ValueError):
        params(y=1.0)
    with pytest.raises(ValueError):
        JumpActivityParams(y=1.5, c_plus=0.0, c_minus=1.0)


def test_c_coeff_examples():
    assert c_coeff(1, params()) == pytest.approx(2.0)
    assert c_coeff(3, params(chi=0.0)) == 0.0
    got = c_coeff(2, JumpActivityParams(y=0.5, c_plus=1, c_minus=1, chi=2.0))
    assert got == pytest.approx(2 * 2 ** 0.5 / 3.5, rel=1e-14)
    assert got == pytest.approx(0.8081, abs=1e-4)
    with pytest.raises(ValueError):
        c_coeff(1, params(y=1.5 + 0.6))


def test_d_coeff_examples():
    assert d_coeff(params()) == pytest.approx(2.5 * 3.5 / 3, rel=1e-14)
    assert d_coeff(params()) == pytest.approx(2.9167, abs=1e-4)
    assert d_coeff(params(sigma2=0.0)) == 0.0
    assert d_coeff(params(chi=0.0)) == 0.0


def test_expansion_without_jumps():
    dt = 1e-4
    assert truncated_moment_expansion(1, params(chi=0.0, sigma2=0.16), dt, 0.1) == pytest.approx(
        0.16 * dt, rel=1e-15)
    assert truncated_moment_expansion(2, params(chi=0.0), dt, 0.1) == pytest.approx(3 * dt * dt)
    with pytest.raises(ValueError):
        truncated_moment_expansion(1, params(), dt, 0.5 * math.sqrt(dt))


def test_levy_constant_matches_stable_tail():
    # P(S > x) ~ Gamma(y) sin(pi y / 2) / pi * x^-y for cf exp(-|u|^y); the density tail is C x^-1-y
    for y in (0.5, 0.8, 1.2, 1.5, 1.75):
        tail = special.gamma(y) * math.sin(0.5 * math.pi * y) / math.pi
        assert stable_levy_constant(y, 1.0) / y == pytest.approx(tail, rel=1e-12)
    assert stable_scale_from_levy(1.6, stable_levy_constant(1.6, 0.5)) == pytest.approx(0.5)


def test_levy_constant_against_simulated_tail():
    y, c = 1.5, 0.5
    draws = stable_increments(y, c, 1.0, 400_000, np.random.default_rng(3))
    x = 20.0
    emp = np.mean(np.abs(draws) > x)
    expect = 2 * stable_levy_constant(y, c) / y * x ** -y
    se = math.sqrt(expect / len(draws))
    assert abs(emp - expect) <= 4 * se + 0.03 * expect


def test_oracle_gaussian_moment():
    dt = 1e-4
    m, se = mc_truncated_moment_oracle(1, params(chi=0.0, sigma2=0.16), dt, math.inf, 10 ** 5,
                                       np.random.default_rng(0))
    assert abs(m - 0.16 * dt) <= 3 * se
    with pytest.raises(ValueError):
        mc_truncated_moment_oracle(1, params(), dt, 0.1, 100, np.random.default_rng(0))
    with pytest.raises(ValueError):
        mc_truncated_moment_oracle(1, JumpActivityParams(1.5, 1.0, 2.0), dt, 0.1, 10 ** 4,
                                   np.random.default_rng(0))


@pytest.mark.parametrize("y", [1.2, 1.5])
def test_oracle_pure_jump_level_and_band(y):
    dt = 1e-6
    v = dt ** (5 / 12)
    p = JumpActivityParams.from_stable(y, 0.5)
    m, se = mc_truncated_moment_oracle(1, p, dt, v, 10 ** 6, np.random.default_rng(11))
    assert abs(m - c_coeff(1, p) * dt * v ** (2 - y)) <= 3 * se
    md, sed = mc_truncated_moment_oracle(1, p, dt, v, 10 ** 6, np.random.default_rng(12), zeta=1.5)
    assert abs(md - truncated_moment_difference(p, dt, v, 1.5)) <= 3 * sed


def test_bias_A_constant_coefficients():
    p = JumpActivityParams.from_stable(1.6, 0.5, sigma2=0.16)
    dt = 1e-4
    v = dt ** (5 / 12)
    got = bias_A(v, dt ** -0.5, EXPONENTIAL, [p] * 10_000, 0.5, dt)
    closed = c_coeff(1, p) * v ** (2 - p.y) + d_coeff(p) * dt * v ** (-p.y)
    assert got == pytest.approx(closed, rel=1e-12)
    assert bias_A(v, 100, EXPONENTIAL, [params(chi=0.0)] * 1000, 0.5, 1e-3) == 0.0
    # v >> sqrt(dt): the C_1 term dominates the D_1 term
    first = c_coeff(1, p) * v ** (2 - p.y)
    second = d_coeff(p) * dt * v ** (-p.y)
    assert first > 10 * second


def test_u_rate_examples():
    assert u_rate(1.0, 1.0, 1.5) == 1.0
    assert u_rate(1e-4, 1e-4 ** (5 / 12), 1.5) == pytest.approx(0.825, abs=1e-3)


@pytest.mark.parametrize("y", [0.5, 1.2, 1.5, 1.59])
def test_u_rate_vanishes_along_default_threshold(y):
    # along v = dt^(5/12) the rate is dt^(1/3 - 5y/24), which decays for y < 8/5
    dts = 2.0 ** -np.arange(10, 60, 5)
    rates = [u_rate(d, d ** (5 / 12), y) for d in dts]
    assert np.all(np.diff(rates) < 0)
    assert rates[-1] < rates[0]


def test_difference_variance_examples():
    p = JumpActivityParams(y=1.5, c_plus=0.5, c_minus=0.5)
    got = difference_clt_variance(2.0, p, EXPONENTIAL)
    assert got == pytest.approx((2 ** 2.5 - 1) / 2.5 * 0.25, rel=1e-9)
    assert got == pytest.approx(0.4657, abs=1e-4)
    assert difference_clt_variance(1 + 1e-12, p, EXPONENTIAL) < 1e-10
    assert difference_clt_variance(2.0, p, UNIFORM2) == pytest.approx(2 * got, rel=1e-9)


@settings(max_examples=40, deadline=None)
@given(z1=st.floats(1.01, 3), z2=st.floats(1.01, 3), chi1=st.floats(0.1, 3), chi2=st.floats(0.1, 3),
       y=st.floats(0.2, 1.9))
def test_difference_variance_monotone(z1, z2, chi1, chi2, y):
    if abs(y - 1) < 1e-6:
        return
    base = dict(y=y, c_plus=1.0, c_minus=1.0)
    lo, hi = sorted((z1, z2))
    a = difference_clt_variance(lo, JumpActivityParams(**base), EXPONENTIAL)
    b = difference_clt_variance(hi, JumpActivityParams(**base), EXPONENTIAL)
    assert a <= b
    clo, chi_ = sorted((chi1, chi2))
    a = difference_clt_variance(2.0, JumpActivityParams(**base, chi=clo), EXPONENTIAL)
    b = difference_clt_variance(2.0, JumpActivityParams(**base, chi=chi_), EXPONENTIAL)
    assert a <= b


def test_z_variances():
    assert z1_variance(0.16, EXPONENTIAL) == pytest.approx(2 * 0.16 ** 2 * 0.25)
    assert z2_variance(0.5, EXPONENTIAL) == pytest.approx(0.5 * 0.25)


def test_feasible_ci_examples():
    assert feasible_ci(0.0, 100, EXPONENTIAL) == (0.0, 0.0)
    lo, hi = feasible_ci(1.0, 100, EXPONENTIAL, 0.95)
    half = 1.959963984540054 * math.sqrt(2 * 0.25 / 100)
    assert (lo, hi) == (pytest.approx(1 - half, abs=1e-12), pytest.approx(1 + half, abs=1e-12))
    assert half == pytest.approx(0.1386, abs=1e-4)
    with pytest.raises(ValueError):
        feasible_ci(-1.0, 100, EXPONENTIAL)


@settings(max_examples=50, deadline=None)
@given(c=st.floats(0.01, 10), m=st.floats(1, 1e4), k=st.floats(1.01, 100))
def test_feasible_ci_width_scaling(c, m, k):
    lo1, hi1 = feasible_ci(c, m, EXPONENTIAL, k2=0.25)
    lo2, hi2 = feasible_ci(c, k * m, EXPONENTIAL, k2=0.25)
    assert (hi2 - lo2) * math.sqrt(k) == pytest.approx(hi1 - lo1, rel=1e-12)

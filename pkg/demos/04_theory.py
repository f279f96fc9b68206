"""Small-time expansion against the Monte Carlo oracle, and a confidence interval.

Run with ``python3 demos/04_theory.py``. Takes a few seconds.
"""
import numpy as np

from spotvol import EXPONENTIAL
from spotvol.theory import (
    JumpActivityParams,
    feasible_ci,
    mc_truncated_moment_oracle,
    truncated_moment_expansion,
)

dt = 1e-6
v = dt ** (5 / 12)
for y in (1.2, 1.5):
    p = JumpActivityParams.from_stable(y, 0.5)
    expect = truncated_moment_expansion(1, p, dt, v)
    mc, se = mc_truncated_moment_oracle(1, p, dt, v, 10 ** 6, np.random.default_rng(1))
    print(f"Y={y}: expansion {expect:.4e}  mc {mc:.4e} +- {se:.1e}  z = {(mc - expect) / se:+.2f}")

# pointwise 95% interval for an estimate of 0.16 with bandwidth multiplier m = 100
lo, hi = feasible_ci(0.16, 100, EXPONENTIAL)
print(f"95% CI around 0.16 with m = 100: [{lo:.4f}, {hi:.4f}]")

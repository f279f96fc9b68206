"""Kernel spot-volatility estimation with jump truncation and debiasing.

Modules
-------
sim        Heston log-price with symmetric stable jumps; per-path RNG streams.
kernels    Smoothing kernels, their integral functionals and numeric checks.
estimate   Truncated kernel estimator, debiasing stages, CF competitors.
theory     Small-time expansions, bias and variance constants, confidence intervals.
harness    Monte Carlo experiments, metrics and grid search.
config     INI configuration and named presets.
cli        ``python -m spotvol`` front end.
"""
__version__ = "0.1.0"

from .estimate import (  # noqa: E402
    CFTuning,
    EstimatorConfig,
    SpotEstimate,
    ThresholdRule,
    bipower_variation,
    cf_spot_vol,
    cf_spot_vol_debiased,
    debias_step,
    spot_vol_debiased_practical,
    spot_vol_debiased_theoretical,
    spot_vol_truncated,
    threshold_v,
)
from .kernels import EXPONENTIAL, QUARTIC_K3, UNIFORM2, get_kernel  # noqa: E402
from .sim import ModelSpec, PathSample, path_rng, simulate_path  # noqa: E402

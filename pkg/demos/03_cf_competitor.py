"""Characteristic-function estimators next to the truncated one.

Run with ``python3 demos/03_cf_competitor.py``.
"""
from spotvol import (
    EstimatorConfig,
    bipower_variation,
    cf_spot_vol,
    cf_spot_vol_debiased,
    path_rng,
    simulate_path,
    spot_vol_truncated,
    threshold_v,
)
from spotvol.config import preset_sections, resolve
from spotvol.estimate import cf_default_frequency

config, _ = resolve(preset_sections("liu2018", 1.2))
path = simulate_path(config.model, path_rng(11, 0))
cfg = EstimatorConfig()
u, h = cf_default_frequency(path, cfg.cf)
v = threshold_v(bipower_variation(path), path.dt, cfg.v_rule)
print(f"u = {u:.3f}, h = {h:.4f}")
print(" tau    truth  trunc     cf   cf-deb")
for tau in (0.2, 0.4, 0.6, 0.8):
    truth = path.v[round(tau / path.dt)]
    tr = spot_vol_truncated(path, tau, cfg.m(path.dt), v, cfg.kernel).value
    cf = cf_spot_vol(path, tau, u, h, cfg.cf.kernel)
    cfd = cf_spot_vol_debiased(path, tau, cfg)
    print(f"{tau:4.1f} {truth:8.4f} {tr:6.4f} {cf:6.4f} {cfd:8.4f}")

"""Simulate one path of the realistic design and look at its jumps.

Run with ``python3 demos/01_simulate.py``.
"""
import numpy as np

from spotvol import path_rng, simulate_path
from spotvol.config import preset_sections, resolve

config, _ = resolve(preset_sections("realistic", 1.6))
model = config.model
path = simulate_path(model, path_rng(7, 0))

dx = path.increments
print(f"n = {path.n} steps, dt = {path.dt:.3e}, T = {model.horizon_T:.4f}")
print(f"spot variance: start {path.v[0]:.4f}, min {path.v.min():.4f}, max {path.v.max():.4f}")

# increments larger than 6 local standard deviations are almost surely jumps
local_sd = np.sqrt(path.v[:-1] * path.dt)
big = np.abs(dx) > 6 * local_sd
print(f"{big.sum()} increments exceed 6 local sd; largest |dx| = {np.abs(dx).max():.4f}")
print(f"the cap on one-step jumps is {model.jump_cap}")

# the same (seed, index) always gives the same path
again = simulate_path(model, path_rng(7, 0))
print("reproducible:", np.array_equal(again.x, path.x))

"""Coarse grid search for the stage-1 tuning on common pilot paths.

Run with ``python3 demos/06_grid_search.py``.
"""
from dataclasses import replace

from spotvol.config import preset_sections, resolve
from spotvol.harness import grid_search

config, _ = resolve(preset_sections("liu2018", 1.6))
config = replace(config, n_paths=10)
res = grid_search(config, names=["c1_exp"], zeta_grid=(1.3, 1.6, 1.9), p_grid=(0.3, 0.6, 0.9),
                  pilot_paths=10)
for tuning, rmse in res.surface["c1_exp"]:
    print(tuning, f"{rmse:.4f}")
spec, rmse = res.best["c1_exp"]
print("best:", spec.tuning(), f"{rmse:.4f}")

"""A small Monte Carlo experiment and its report.

Run with ``python3 demos/05_experiment.py``. The full tables use 1000 paths via the CLI.
"""
from dataclasses import replace

from spotvol.config import preset_sections, resolve
from spotvol.harness import run_experiment
from spotvol.reporting import summary_csv

config, _ = resolve(preset_sections("liu2018", 1.6))
keep = {"sigma_hat", "sigma_tilde", "c0_exp", "c1_exp", "c2_exp"}
config = replace(config, n_paths=20,
                 estimators=tuple(s for s in config.estimators if s.name in keep))
report = run_experiment(config)
print(summary_csv(report.summary_rows()))
for note in report.to_dict()["notes"]:
    print("note:", note)

"""
Discrete attractors approaching the continuous one
==================================================

The laminar configuration again, now with the full study: attractor samples
for each step on the ladder, their distance to a fine-step reference, the
error on a single trajectory and the interpolant residual. A few minutes.
"""

from pathlib import Path

from mvns.attractor import fit_trajectory_constant
from mvns.cli import STUDY_COLUMNS, converge_study
from mvns.config import RunConfig
from mvns.dissipativity import calibrate_dissipativity

cfg = RunConfig.load(Path(__file__).resolve().parents[1] / "configs" / "laminar.json")
f = cfg.forcing()
c = calibrate_dissipativity(cfg.N, cfg.nu, f, cfg.calibration_plan())
c = fit_trajectory_constant(c, f, cfg.study_value("T_star", 10.0), cfg.ladder)

rows, samples = converge_study(cfg, c)
print(" | ".join(STUDY_COLUMNS[:6]))
for r in rows:
    print(" | ".join(f"{x:.4g}" if isinstance(x, float) else str(x) for x in r[:6]))

# The ensemble clouds are plain arrays of H-coordinates.
ref = samples[0.0]
print("reference cloud:", ref.cloud.points.shape, "time grid", ref.times[:3], "...")

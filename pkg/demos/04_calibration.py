"""
Absorbing balls for a laminar flow
==================================

Viscosity 1 and a weak shear force: every trajectory settles on the shear
equilibrium of amplitude 0.1. Calibration measures the absorbing radii and
the time-step thresholds derived from them. Takes well under a minute.
"""

from mvns.dissipativity import (CalibrationPlan, calibrate_dissipativity, check_v_absorbing,
                                uniqueness_threshold)
from mvns.spectral import shear_mode, space

sp = space(16)
f = shear_mode(sp, 0.1)
c = calibrate_dissipativity(16, 1.0, f, CalibrationPlan())

print(f"R0 = {c.R0:.4f}   R_star = {c.R_star:.4f}   R1 = {c.R1:.4f}")
print(f"kappa0 = {c.kappa0:.4g}  kappa1 = {c.kappa1:.4g}  kappa2 = {c.kappa2:.4g}")
for R in (0.5, 1.0, 2.0):
    print(f"  t1({R}) = {c.t1(R):.3f}")
print("uniqueness threshold at R1:", uniqueness_threshold(c.R1, c))

rep = check_v_absorbing(c, 16, f, 0.05, n_traj=5, n_steps=1000)
print(f"{rep.violations} of {rep.checked_states} late states leave the V-ball,"
      f" largest ratio {rep.max_ratio:.3f}")

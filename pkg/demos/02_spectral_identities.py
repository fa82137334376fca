"""
Spectral building blocks on the periodic torus
==============================================

Random divergence-free fields on a 16 x 16 grid, the skew symmetry of the
convective form and the equilibrium of a single shear mode.
"""

import numpy as np

from mvns.spectral import (nonlinear_term, norms, random_velocity, shear_mode, space,
                           trilinear)

sp = space(16)
print(sp)
rng = np.random.default_rng(42)
u, v, w = (random_velocity(sp, rng) for _ in range(3))

# Energy, enstrophy-type and dual norms of a unit field.
print("norms of u:", norms(u))

# b(u, v, v) vanishes and b(u, v, w) = -b(u, w, v) up to roundoff.
print("b(u,v,v)          =", trilinear(u, v, v))
print("b(u,v,w)+b(u,w,v) =", trilinear(u, v, w) + trilinear(u, w, v))

# A shear flow does not advect itself.
s = shear_mode(sp, 1.0, 2)
print("max |B(s,s)| =", np.abs(nonlinear_term(s, s).dofs).max())

# Spectral coefficients back out to a real periodic velocity field.
phys = u.physical()
print("physical field shape", phys.shape, "mean", phys.mean(axis=(1, 2)))

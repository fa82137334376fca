"""
Attractors of set-valued maps on a box grid
===========================================

Three one-dimensional toy maps, each iterated on a cover of the interval by
cells of width 2**-10: a single contraction, a two-branch iterated function
system and a map whose two branches point in opposite directions.
"""

import numpy as np

from mvns.mvds import PointCloud, covering_diameter, run_demo

res = 2.0**-10

# The contraction x -> x/2 collapses everything onto the cells touching 0.
A, rep = run_demo("contraction", res)
print("contraction:", len(A), "cells, total diameter", A.total_diameter())

# The two halving maps of [0, 1] jointly fill the whole interval back in,
# so the attractor is every cell.
A, rep = run_demo("ifs", res)
print("ifs:", len(A), "cells, extent", rep["extent"])

# x -> {x/2, -x/2} is still contracting, just multivalued.
A, rep = run_demo("plusminus", res)
print("plusminus:", len(A), "cells, invariant:", rep["invariant"])

# Kuratowski-style measure of a point cloud: best split into m balls.
x = np.random.default_rng(0).uniform(0, 1, 200)
for m in (1, 2, 4, 8):
    print(f"covering diameter with {m} pieces: {covering_diameter(PointCloud(x), m):.4f}")

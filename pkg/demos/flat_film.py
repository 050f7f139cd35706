"""Flat film: the stray field prefers in-plane magnetization.

For a slab between two flat surfaces the anisotropy tensor reduces to
e3 x e3, so any in-plane direction costs nothing and the normal direction
costs one unit per area.  The general four-term formula reproduces this.
"""
import numpy as np

from roughfilm import compute_general, easy_axis, flat_slab

geom = flat_slab()
a = compute_general(geom)

np.set_printoptions(precision=6, suppress=True)
print("A_hom for the unit slab")
print(a.total)
for i, t in enumerate(a.terms, 1):
    print(f"term {i}: diagonal {np.diag(t)}")

ax = easy_axis(a)
print("spectrum", ax.spectrum)
print("easy axis", ax.axis, "(degenerate:", ax.degenerate, ")")

# The thickness only rescales the tensor by the volume per area.
thin = compute_general(flat_slab(0.25))
print("thickness 0.25 ->", thin.total[2, 2])

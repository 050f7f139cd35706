"""How surface roughness shifts the cost between in-plane and normal directions.

Both surfaces carry the same sine profile, shifted apart by the gap a.  As
the gap shrinks relative to the roughness amplitude the normal direction
gets cheaper and the in-plane directions across the corrugation get more
expensive.  For a one-dimensional corrugation the direction along the
ridges stays free, so it remains the easy axis.
"""
import numpy as np

from roughfilm import Profile, compute_parallel, easy_axis, parallel_film

np.set_printoptions(precision=5, suppress=True)

for kind in ("sine2_1d", "sine2_2d"):
    print(f"\n{kind} roughness")
    print(f"{'gap':>6} {'A11':>9} {'A22':>9} {'A33':>9}  easy axis")
    for a in (2.0, 1.0, 0.5, 0.25, 0.1):
        t = compute_parallel(parallel_film(Profile(kind), a))
        ax = easy_axis(t)
        d = np.diag(t.sym) / a
        print(f"{a:6.2f} {d[0]:9.5f} {d[1]:9.5f} {d[2]:9.5f}  {ax.axis}")

# A sampled surface without symmetry also couples in-plane and normal directions.
rng = np.random.default_rng(3)
n = 24
x1, x2 = np.meshgrid(np.arange(n) / n, np.arange(n) / n, indexing="ij")
g = sum(rng.normal(scale=0.1) * np.cos(2 * np.pi * (k1 * x1 + k2 * x2) + rng.uniform(0, 2 * np.pi))
        for k1, k2 in [(1, 0), (0, 1), (1, 1), (2, -1)])
t = compute_parallel(parallel_film(Profile.sampled(g), 0.5))
print("\nrandom sampled surface, gap 0.5")
print(t.sym)
print("easy axis", easy_axis(t).axis)

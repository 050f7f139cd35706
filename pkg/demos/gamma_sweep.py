"""Finite-eps stray-field energy approaching the homogenized limit.

The film is rough on the scale eps and the energy of a constant
magnetization is integrated directly.  The flat slab shows the slow
eps log(1/eps) boundary-layer correction; a rough film converges to the
value predicted by the anisotropy tensor.
"""
import numpy as np

from roughfilm import Profile, compute_parallel, flat_slab, parallel_film, sweep

eps = [1 / 4, 1 / 8, 1 / 16, 1 / 32]

s = sweep(flat_slab(), [0, 0, 1.0], eps)
print("flat slab, m = e3, target", s.target)
for r in s.records:
    print(f"  eps = 1/{round(1 / r.eps):<3d} I = {r.I_eps:.6f}  rel. error {r.rel_error:.3f}"
          f"  (2/pi) eps log(1/eps) = {2 / np.pi * r.eps * np.log(1 / r.eps):.3f}")
print(f"  extrapolated {s.extrapolated:.5f}, first-order fit {s.extrapolated_first_order:.5f}")

geom = parallel_film(Profile.sine2_1d(), 0.5)
target = compute_parallel(geom)
for label, m in (("e1", [1.0, 0, 0]), ("e3", [0, 0, 1.0])):
    s = sweep(geom, m, eps[1:], anisotropy=target)
    print(f"\nsine2_1d, gap 0.5, m = {label}, target {s.target:.6f}")
    for r in s.records:
        print(f"  eps = 1/{round(1 / r.eps):<3d} I = {r.I_eps:.6f}  abs. error {r.abs_error:.2e}")
    print(f"  extrapolated {s.extrapolated:.6f}")

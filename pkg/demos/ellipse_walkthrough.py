"""Critical point of the distance to an ellipse, and why it is non-degenerate.

Run:  python demos/ellipse_walkthrough.py
"""
import numpy as np

from critfield.conditions import assemble_B_form, condition_report, mu_scan
from critfield.critical import classify_index, manifold_critical_points
from critfield.distfield import generalized_gradient, project
from critfield.scenarios import get_scenario

sc = get_scenario("ellipse:2,1")

# The origin is equidistant from (0, 1) and (0, -1) and is their midpoint,
# so the generalized gradient vanishes there.
ps = project(sc, (0, 0))
print("projections of the origin:", np.round(ps.points, 12).tolist(), "distance", round(ps.distance, 12))
print("gradient norm at the origin:", generalized_gradient(sc, (0, 0)).norm)
print("gradient norm at (0.5, 0):  ", round(generalized_gradient(sc, (0.5, 0)).norm, 6))

cs = manifold_critical_points(sc)
cp = cs[0]
print(f"\n{len(cs)} critical point: z = {np.round(cp.z, 12).tolist()}, r = {cp.r:.12f}, s = {cp.s}")

rep = condition_report(sc, cs)
pt = rep["critical_points"][0]
print("\nconditions")
print(f"  P1 simplex volume {pt['P1']['simplex_volume']:.6f}, smallest weight {pt['P1']['min_barycentric']:.6f}")
print(f"  P2 count {rep['P2']['count']}")
print(f"  P3 alpha = {pt['P3']['alpha']:.6f}  (curvature 1/4 at both projections)")
print(f"  P4 B-form min |eigenvalue| = {pt['P4']['min_abs_eigenvalue']:.6f}")

form = assemble_B_form(sc, cp)
print("\nB-form matrix on the x-axis:", form.matrix.tolist(), " (4/9 =", 4 / 9, ")")
for eps in (1e-2, 1e-3, 1e-4):
    print(f"  volume oracle at eps={eps:g}: {form.volume_oracle((1.0, 0.0), eps):.8f}")

# Along the core medial axis (the x-axis) the gradient grows linearly.
scan = mu_scan(sc, cp)
print(f"\ngradient vs distance along the core axis: slope {scan.fit.slope:.4f}")
for d, g in list(zip(scan.distances, scan.gradient_norms))[::2]:
    print(f"  |z - z0| = {d:.4f}   |grad| = {g:.6f}")

print("\nindex (s - 1, restricted):", classify_index(cp, sc))

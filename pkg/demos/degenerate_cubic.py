"""A critical point that satisfies P1-P3 but not P4, and what that costs.

The two branches y = +-(1 + x^3) face each other with zero curvature at
x = 0.  The origin is critical, but the gradient only grows like 3 x^2 along
the medial axis, and a tilt of the branches removes the critical point
altogether.

Run:  python demos/degenerate_cubic.py
"""
import numpy as np

from critfield.conditions import check_point, mu_scan
from critfield.critical import manifold_critical_points
from critfield.experiments import reproduce_counterexample_P4, run_perturbation_study
from critfield.scenarios import get_scenario

sc = get_scenario("paper_cubic")
cs = manifold_critical_points(sc)
z0 = cs.within((0, 0), 0.5)[0]
rep = check_point(sc, z0)
print(f"critical point near the origin: {np.round(z0.z, 8).tolist()}, r = {z0.r:.10f}")
print("P1", rep["P1"]["pass"], " P3", rep["P3"]["pass"], " P4", rep["P4"]["pass"],
      f"(min |eig| {rep['P4']['min_abs_eigenvalue']:.2e} below {rep['P4']['threshold']:.2e})")

ce = reproduce_counterexample_P4()
print("\npoints p(x) = (x + 3x^2 + 3x^5, 0) and their two projections (x, +-(1 + x^3))")
print("       x      |grad|    |grad|/(3x^2)   d(p(x), z0)/x")
for r in ce["rows"]:
    print(f"  {r['x']:8.3g}  {r['gradient_norm']:10.3e}   {r['ratio_to_3x2']:8.5f}      {r['distance_ratio']:.5f}")
print(f"log-log slope {ce['fit']['slope']:.3f}")

scan = mu_scan(sc, z0)
print(f"core-axis scan slope {scan.fit.slope:.3f} (a non-degenerate point gives 1)")

study = run_perturbation_study(sc, [0.1])
res = study.results[0]
print(f"\nafter tilting to {res['scenario']}:")
print("  critical points within distance 1 of the origin:",
      sum(np.linalg.norm(p["z"]) < 1 for p in res["critical_points"]))
for w in res["witnesses"]:
    print("  witness:", w["kind"], "at", np.round(w["z"], 6).tolist())

"""Samples of an ellipse: their critical points cluster near the curve or near its centre.

Also scans the offsets of the ellipse: the hole closes exactly at the
critical value r = 1.

Run:  python demos/sampling_and_offsets.py
"""
import warnings

from critfield.experiments import offset_betti_scan, run_sampling_study

with warnings.catch_warnings():
    warnings.simplefilter("ignore")  # the coarsest eps is above the reach bound on purpose
    study = run_sampling_study("ellipse:2,1", [0.2, 0.1, 0.05, 0.025])

print("   eps   samples  near  far   max d_M(near)   max dist(far)")
for r in study.runs:
    near = max((p["d_M"] for p in r.near), default=float("nan"))
    far = max((p["distance"] for p in r.far), default=float("nan"))
    print(f"  {r.eps:5.3f}  {r.n_sample:6d}  {len(r.near):4d} {len(r.far):4d}   {near:12.3e}   {far:12.3e}")
print(f"near points approach the curve like eps^{study.near_fit.slope:.2f}")
print(f"far points approach the centre like eps^{study.far_fit.slope:.2f}")
for name, check in study.checks.items():
    print(f"  {name:26s} {'ok' if check['pass'] else 'FAILED'}")

scan = offset_betti_scan("ellipse:2,1", grid_step=0.01)
print("\noffset  components  holes")
for a, b0, b1 in zip(scan.offsets, scan.betti0, scan.betti1):
    if abs(a - 1) < 0.035 or a in (0.01, 0.5, 1.5):
        print(f"  {a:5.2f}  {b0:6d}  {b1:6d}")
print("topology changes at", scan.change_radii)

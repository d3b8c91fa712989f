"""Genericity checks P1-P4 at critical points of a manifold scenario.

P1  the projections span a non-degenerate simplex containing ``z`` in its
    relative interior;
P2  the critical set is finite (isolated, non-singular Newton solutions);
P3  the critical sphere does not osculate the manifold at any projection;
P4  mu-critical points stay within ``C mu`` of the critical set, checked
    through the B-form: ``B(h) = sum_ij det(A_i(h)^T A_j(h))`` on ``E^perp``,
    where ``A_i(h)`` is ``X = [x_1 - z0, ..., x_s - z0]`` with column ``i``
    replaced by ``dp_i(h) - h``.  ``B`` is stored as the symmetric matrix
    ``M`` with ``B(h) = h^T M h`` in an orthonormal basis of ``E^perp``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .critical import CriticalPoint, CriticalSet
from .distfield import project
from .fits import ScalingFit, fit_loglog
from .geom import INTERIOR_TOL, convex_membership, gram_volume, simplex_volume, smallest_enclosing_ball
from .manifold import GeometryError, Scenario, local_projection, osculation_check, projection_differential

log = logging.getLogger(__name__)

VOL_TOL = 1e-10
BSP_TOL = 1e-8
COND_MAX = 1e10
SLOPE_CUT = 1.25
L_FUDGE = 0.1


def _canonical_sign(B: np.ndarray) -> np.ndarray:
    B = B.copy()
    for k in range(B.shape[1]):
        col = B[:, k]
        i = int(np.argmax(np.abs(col) > 1e-12))
        if col[i] < 0:
            B[:, k] = -col
    return B


def frames(cp: CriticalPoint):
    """Orthonormal bases (columns) of ``E = span{x_j - x_1}`` and of ``E^perp``."""
    X = cp.projections
    D = X.shape[1]
    diffs = (X[1:] - X[0]).T
    if diffs.size == 0:
        return np.zeros((D, 0)), np.eye(D)
    U, sv, _ = np.linalg.svd(diffs, full_matrices=True)
    k = int((sv > 1e-10 * max(sv.max(), 1e-300)).sum())
    return _canonical_sign(U[:, :k]), _canonical_sign(U[:, k:])


# -- P1 ----------------------------------------------------------------------------------

def check_P1(cp, vol_tol: float = VOL_TOL, interior_tol: float = INTERIOR_TOL) -> dict:
    if isinstance(cp, dict):  # a rejected candidate from manifold_critical_points
        return {"pass": False, "reason": cp.get("reason", "not a critical point"),
                "simplex_volume": None, "min_barycentric": None}
    D, s = cp.D, cp.s
    if s > D + 1:
        return {"pass": False, "reason": f"s={s} exceeds D+1={D + 1}", "simplex_volume": None,
                "min_barycentric": None}
    P = cp.projections
    scale = max(float(np.ptp(P, axis=0).max()), 1e-300)
    vol = simplex_volume(P)
    bary = convex_membership(cp.z, P, interior_tol)
    lam_min = float(bary.weights.min()) if bary is not None else None
    ok_vol = vol > vol_tol * scale ** (s - 1)
    ok_int = bary is not None and bary.relative_interior
    reason = None if ok_vol and ok_int else ("degenerate simplex" if not ok_vol else "not in relative interior")
    return {"pass": bool(ok_vol and ok_int), "reason": reason, "simplex_volume": vol, "min_barycentric": lam_min}


# -- P2 ----------------------------------------------------------------------------------

def check_P2(cs: CriticalSet, sep_tol: float | None = None) -> dict:
    sep_tol = cs.dedup_radius if sep_tol is None else sep_tol
    reasons = []
    bad = [r for r in cs.rejected if r.get("reason") in ("continuum suspected", "newton diverged")]
    if bad:
        reasons.append(f"{len(bad)} seed cluster(s) without an isolated solution ({bad[0]['reason']})")
    conds = [p.jacobian_cond for p in cs if p.jacobian_cond is not None]
    if any(c >= COND_MAX for c in conds):
        reasons.append("singular Newton Jacobian")
    Z = cs.locations
    min_sep = None
    if len(Z) > 1:
        d = np.sqrt(((Z[:, None] - Z[None]) ** 2).sum(-1))
        min_sep = float(d[np.triu_indices(len(Z), 1)].min())
        if min_sep <= sep_tol:
            reasons.append("critical points closer than the separation tolerance")
    return {"pass": not reasons, "count": len(cs), "min_separation": min_sep,
            "max_jacobian_cond": max(conds) if conds else None, "reasons": reasons}


# -- P3 ----------------------------------------------------------------------------------

def check_P3(scenario: Scenario, cp: CriticalPoint) -> dict:
    vals, lams = [], []
    for c, u in cp.params:
        res = osculation_check(scenario, (int(c), np.asarray(u, float)), cp.z, verify=False)
        vals.append(res.raw_alpha)
        lams.append(res.lambda_max)
        if res.osculating:
            return {"pass": False, "one_minus_lambda_max": vals, "lambda_max": lams, "alpha": 0.0,
                    "reason": "osculating"}
    return {"pass": True, "one_minus_lambda_max": vals, "lambda_max": lams, "alpha": float(min(vals))}


# -- B-form / P4 -----------------------------------------------------------------------------

@dataclass
class BSPForm:
    scenario: Scenario
    cp: CriticalPoint
    E_basis: np.ndarray
    Eperp_basis: np.ndarray
    matrix: np.ndarray  # B(h) = c^T M c for h = Eperp_basis @ c
    dps: list  # ambient D x D differentials of the local projections

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.matrix) if self.matrix.size else np.zeros(0)

    @property
    def min_abs_eigenvalue(self) -> float:
        ev = self.eigenvalues
        return float(np.abs(ev).min()) if ev.size else math.inf

    @property
    def L_estimate(self) -> float:
        ev = self.eigenvalues
        if not ev.size:
            return math.inf
        return math.sqrt(max(ev.min(), 0.0)) / math.factorial(self.cp.s) * (1 - L_FUDGE)

    def value(self, h) -> float:
        """B at an ambient vector ``h`` (projected onto ``E^perp``)."""
        return float(_b_direct(self.cp, self.dps, np.asarray(h, float)))

    def volume_oracle(self, h, eps: float = 1e-4) -> float:
        """``(s!)^2 Vol_s(Delta(eps h))^2 / eps^2`` from actual local projections."""
        h = np.asarray(h, float)
        z = self.cp.z + eps * h
        verts = [z] + [local_projection(self.scenario, (c, u), z).point for c, u in self.cp.params]
        vol = gram_volume(np.array(verts))
        return (math.factorial(self.cp.s) * vol) ** 2 / eps**2

    def to_dict(self) -> dict:
        return {
            "E_basis": self.E_basis.T.tolist(),
            "Eperp_basis": self.Eperp_basis.T.tolist(),
            "B_matrix": self.matrix.tolist(),
            "eigenvalues": self.eigenvalues.tolist(),
            "min_abs_eigenvalue": None if not self.matrix.size else self.min_abs_eigenvalue,
            "L_estimate": None if not self.matrix.size else self.L_estimate,
            "convention": "B(h) = c^T M c, h = sum_k c_k e_k over the orthonormal E^perp basis",
        }


def _b_direct(cp: CriticalPoint, dps, h) -> float:
    X = (cp.projections - cp.z).T
    s = cp.s
    A = []
    for i in range(s):
        Ai = X.copy()
        Ai[:, i] = dps[i] @ h - h
        A.append(Ai)
    return sum(np.linalg.det(A[i].T @ A[j]) for i in range(s) for j in range(s))


def assemble_B_form(scenario: Scenario, cp: CriticalPoint) -> BSPForm:
    if scenario.m == 0 or cp.params is None:
        raise ValueError("intrinsic dim 0")
    dps = [projection_differential(scenario, cp.z, (int(c), np.asarray(u, float))) for c, u in cp.params]
    E, Ep = frames(cp)
    k = Ep.shape[1]
    M = np.zeros((k, k))
    for a in range(k):
        for b in range(a, k):
            ea, eb = Ep[:, a], Ep[:, b]
            if a == b:
                M[a, a] = _b_direct(cp, dps, ea)
            else:
                M[a, b] = M[b, a] = 0.25 * (_b_direct(cp, dps, ea + eb) - _b_direct(cp, dps, ea - eb))
    return BSPForm(scenario, cp, E, Ep, M, dps)


def check_P4(scenario: Scenario, cp: CriticalPoint, form: BSPForm | None = None, bsp_tol: float = BSP_TOL) -> dict:
    form = assemble_B_form(scenario, cp) if form is None else form
    if form.matrix.size == 0:
        return {"pass": True, "min_abs_eigenvalue": None, "L_estimate": None, "reason": "E^perp is trivial",
                "B": form.to_dict()}
    tol = bsp_tol * scenario.diameter ** (2 * (cp.s - 1))
    ok = form.min_abs_eigenvalue > tol
    return {"pass": bool(ok), "min_abs_eigenvalue": form.min_abs_eigenvalue, "L_estimate": form.L_estimate,
            "threshold": tol, "reason": None if ok else "B-form degenerate on E^perp", "B": form.to_dict()}


# -- core medial axis tracing -----------------------------------------------------------

@dataclass(frozen=True)
class CoreTrace:
    h: np.ndarray
    z: np.ndarray
    r: float
    projections: np.ndarray
    params: tuple
    gradient_norm: float


def _core_system(scenario, cp, Ep, target, x, s, m, D):
    charts = [c for c, _ in cp.params]
    us = [x[j * m : (j + 1) * m] for j in range(s)]
    z = x[s * m :]
    n = s * m + D
    F = np.zeros(n)
    J = np.zeros((n, n))
    fs = []
    row = 0
    for j, (c, u) in enumerate(zip(charts, us)):
        ch = scenario.charts[c]
        f, Jc, H = ch.eval(u[None])[0], ch.jac(u[None])[0], ch.hess(u[None])[0]
        fs.append((f, Jc))
        d = f - z
        F[row : row + m] = Jc.T @ d
        J[row : row + m, j * m : (j + 1) * m] = np.einsum("dab,d->ab", H, d) + Jc.T @ Jc
        J[row : row + m, s * m :] = -Jc.T
        row += m
    f1, J1 = fs[0]
    d1 = f1 - z
    for j in range(1, s):
        f, Jc = fs[j]
        d = f - z
        F[row] = d @ d - d1 @ d1
        J[row, j * m : (j + 1) * m] = 2 * d @ Jc
        J[row, 0:m] = -2 * d1 @ J1
        J[row, s * m :] = -2 * d + 2 * d1
        row += 1
    F[row:] = Ep.T @ (z - cp.z) - target
    J[row:, s * m :] = Ep.T
    return F, J


def _newton_core(scenario, cp, Ep, target, x0, tol=1e-14, max_iter=60):
    s, m, D = cp.s, scenario.m, scenario.D
    charts = [c for c, _ in cp.params]
    x = x0.copy()
    F, J = _core_system(scenario, cp, Ep, target, x, s, m, D)
    nrm = np.linalg.norm(F)
    for _ in range(max_iter):
        if nrm <= tol * (1 + scenario.diameter) ** 2:
            return x, nrm
        step = np.linalg.lstsq(J, -F, rcond=None)[0]
        t = 1.0
        for _h in range(30):
            xn = x + t * step
            for j, c in enumerate(charts):
                xn[j * m : (j + 1) * m] = scenario.charts[c].normalize(xn[j * m : (j + 1) * m][None])[0]
            Fn, Jn = _core_system(scenario, cp, Ep, target, xn, s, m, D)
            nn = np.linalg.norm(Fn)
            if nn < nrm:
                break
            t *= 0.5
        else:
            return x, nrm
        x, F, J, nrm = xn, Fn, Jn, nn
    return x, nrm


def trace_core(scenario: Scenario, cp: CriticalPoint, h, x0=None, steps: int = 32) -> CoreTrace:
    """Point of the core medial axis with ``pi_{E^perp}(z - z0) = h``.

    Continuation from ``z0`` in ``steps`` equal increments unless a starting
    state ``x0`` (from a previous trace) is supplied.
    """
    _, Ep = frames(cp)
    s, m = cp.s, scenario.m
    h = np.asarray(h, float)
    target = Ep.T @ h
    if x0 is None:
        x = np.concatenate([np.concatenate([np.asarray(u, float) for _, u in cp.params]), cp.z])
        start = np.zeros_like(target)
    else:
        x, start = x0
    nrm = 0.0
    for t in np.linspace(0, 1, steps + 1)[1:]:
        x, nrm = _newton_core(scenario, cp, Ep, start + t * (target - start), x)
    if nrm > 1e-9 * (1 + scenario.diameter) ** 2:
        raise GeometryError(f"core trace diverged at |h|={np.linalg.norm(h):.3e} (residual {nrm:.2e})")
    params = tuple((c, x[j * m : (j + 1) * m].copy()) for j, (c, _) in enumerate(cp.params))
    z = x[s * m :].copy()
    pts = np.array([scenario.point(c, u) for c, u in params])
    r = float(np.linalg.norm(pts[0] - z))
    ball = smallest_enclosing_ball(pts)
    g = float(np.linalg.norm(z - ball.center) / r)
    out = CoreTrace(h, z, r, pts, params, g)
    object.__setattr__(out, "_state", (x, target))
    return out


def _scan_direction(scenario, cp) -> np.ndarray | None:
    _, Ep = frames(cp)
    if Ep.shape[1] == 0:
        return None
    try:
        form = assemble_B_form(scenario, cp)
        ev, V = np.linalg.eigh(form.matrix)
        c = V[:, int(np.argmin(np.abs(ev)))]
    except GeometryError:
        c = np.eye(Ep.shape[1])[0]
    v = Ep @ c
    i = int(np.argmax(np.abs(v) > 1e-12))
    return v if v[i] > 0 else -v


@dataclass(frozen=True)
class MuScan:
    fit: ScalingFit | None
    distances: list
    gradient_norms: list
    pinning_C: float | None
    truncated_at: float | None
    direction: list | None

    def to_dict(self) -> dict:
        return {"fit": None if self.fit is None else self.fit.to_dict(), "distances": self.distances,
                "gradient_norms": self.gradient_norms, "pinning_C": self.pinning_C,
                "truncated_at": self.truncated_at, "direction": self.direction}


def mu_scan(scenario: Scenario, cp: CriticalPoint, h_values=None, verify: bool = True) -> MuScan:
    """Gradient norm along the traced core medial axis versus distance to ``z0``.

    ``h`` runs along the least non-degenerate direction of the B-form in
    ``E^perp``.  A point whose traced projections are not the true nearest
    points truncates the scan.
    """
    h_values = np.logspace(-3, -1, 9) if h_values is None else np.sort(np.asarray(h_values, float))
    v = _scan_direction(scenario, cp)
    if v is None:
        return MuScan(None, [], [], None, None, None)
    E, _ = frames(cp)
    dists, norms, pins = [], [], []
    state = None
    truncated = None
    for hv in h_values:
        if hv == 0:
            dists.append(0.0)
            norms.append(0.0)
            continue
        try:
            tr = trace_core(scenario, cp, hv * v, x0=state)
        except GeometryError:
            truncated = float(hv)
            break
        if verify:
            ps = project(scenario, tr.z)
            if tr.r > ps.distance * (1 + 1e-8) + 1e-12:
                truncated = float(hv)
                break
        state = tr._state
        dz = float(np.linalg.norm(tr.z - cp.z))
        dists.append(dz)
        norms.append(tr.gradient_norm)
        if E.shape[1]:
            pins.append(float(np.linalg.norm(E.T @ (tr.z - cp.z))) / dz**2)
    pos = [(d, g) for d, g in zip(dists, norms) if d > 0 and g > 0]
    fit = fit_loglog(*zip(*pos)) if len(pos) >= 2 else None
    return MuScan(fit, dists, norms, max(pins) if pins else None, truncated, v.tolist())


def slope_class(fit: ScalingFit | None) -> str:
    if fit is None:
        return "n/a"
    return "linear" if fit.slope < SLOPE_CUT else "superlinear"


# -- eta_M ----------------------------------------------------------------------------------

@dataclass(frozen=True)
class EtaTable:
    mu: list
    eta: list
    unbounded: list
    n_samples: int
    box_radius: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def estimate_eta(scenario: Scenario, mu_grid, cs: CriticalSet | None = None, step: float | None = None,
                 pad: float = 0.25) -> EtaTable:
    """Largest distance to the critical set among sampled points with gradient norm <= mu.

    Samples: a grid over the padded bounding box (2-D) or random box points
    (3-D), plus core-medial-axis traces through each critical point.  The
    table is made monotone in ``mu`` by a running maximum.
    """
    from .critical import manifold_critical_points
    from .distfield import gradient_from_projections, project_many

    cs = manifold_critical_points(scenario) if cs is None else cs
    P = scenario.discretize(256)[0]
    lo, hi = P.min(0) - pad, P.max(0) + pad
    box_radius = 0.5 * float(np.linalg.norm(hi - lo))
    D = scenario.D
    if step is None:
        step = float((hi - lo).max()) / 60
    if D == 2:
        axes = [np.arange(lo[k], hi[k] + step / 2, step) for k in range(D)]
        G = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, D)
    else:
        G = lo + (hi - lo) * np.random.default_rng(0).random((4000, D))
    ps = project_many(scenario, G)
    off = np.array([p.distance > 1e-9 * scenario.diameter for p in ps])
    norms = np.array([gradient_from_projections(p).norm for p, o in zip(ps, off) if o])
    samples = [(G[off], norms)]
    for cp in cs:
        v = _scan_direction(scenario, cp)
        if v is None:
            continue
        zs, gs = [], []
        for sign in (1.0, -1.0):
            state = None
            for hv in np.logspace(-4, -0.5, 15):
                try:
                    tr = trace_core(scenario, cp, sign * hv * v, x0=state)
                except GeometryError:
                    break
                state = tr._state
                zs.append(tr.z)
                gs.append(tr.gradient_norm)
        if zs:
            samples.append((np.array(zs), np.array(gs)))
    Z = np.vstack([s[0] for s in samples])
    g = np.concatenate([s[1] for s in samples])
    locs = cs.locations
    if len(locs):
        dZ = np.sqrt(((Z[:, None, :] - locs[None]) ** 2).sum(-1)).min(1)
    else:
        dZ = np.full(len(Z), box_radius)
    on_box = np.any((Z <= lo + 1e-9) | (Z >= hi - 1e-9), axis=1)
    eta, unb = [], []
    running = 0.0
    for mu in sorted(mu_grid):
        sel = g <= mu
        val = float(dZ[sel].max()) if sel.any() else 0.0
        running = max(running, min(val, box_radius))
        eta.append(running)
        unb.append(bool((sel & on_box).any()))
    return EtaTable(sorted(map(float, mu_grid)), eta, unb, len(Z), box_radius)


# -- reports ---------------------------------------------------------------------------------

def check_point(scenario: Scenario, cp: CriticalPoint, scan: bool = False) -> dict:
    out = {"z": cp.z.tolist(), "r": cp.r, "s": cp.s}
    p1 = check_P1(cp)
    out["P1"] = p1
    if not p1["pass"]:
        out["P3"] = {"pass": False, "evaluated": False, "reason": "requires P1"}
        out["P4"] = {"pass": False, "evaluated": False, "reason": "requires P1"}
        out["overall"] = False
        return out
    p3 = check_P3(scenario, cp)
    out["P3"] = p3
    if not p3["pass"]:
        out["P4"] = {"pass": False, "evaluated": False, "reason": "requires P3"}
        out["overall"] = False
        return out
    p4 = check_P4(scenario, cp)
    if scan:
        ms = mu_scan(scenario, cp)
        p4["slope_fit"] = None if ms.fit is None else ms.fit.to_dict()
        p4["slope_class"] = slope_class(ms.fit)
        p4["pinning_C"] = ms.pinning_C
        if ms.fit is not None:
            p4["consistent_with_scan"] = (slope_class(ms.fit) == "linear") == p4["pass"]
    out["P4"] = p4
    out["overall"] = bool(p1["pass"] and p3["pass"] and p4["pass"])
    return out


def condition_report(scenario: Scenario, cs: CriticalSet, scan: bool = True) -> dict:
    """ConditionReport as a JSON-ready dict."""
    points = [check_point(scenario, cp, scan=scan) for cp in cs]
    for rej in cs.rejected:
        if rej.get("reason") == "continuum suspected":
            points.append({"z": rej["z"], "r": rej["r"], "s": None, "P1": check_P1(rej),
                           "P3": {"pass": False, "evaluated": False, "reason": "requires P1"},
                           "P4": {"pass": False, "evaluated": False, "reason": "requires P1"}, "overall": False})
    p2 = check_P2(cs)
    overall = p2["pass"] and all(p["overall"] for p in points)
    failed = {k for p in points for k in ("P1", "P3", "P4") if not p[k]["pass"] and p[k].get("evaluated", True)}
    if not p2["pass"]:
        failed.add("P2")
    failed = sorted(failed)
    return {"scenario": scenario.name, "critical_points": points, "P2": p2, "overall": bool(overall),
            "failed": failed}

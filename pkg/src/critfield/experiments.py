"""Desk-scale experiments: sampling stability, perturbation stability,
the degenerate cubic example and offset topology scans."""
from __future__ import annotations

import logging
import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from .conditions import condition_report, frames, trace_core
from .critical import CriticalSet, cloud_critical_points, manifold_critical_points
from .distfield import distances, generalized_gradient, project
from .fits import ScalingFit, fit_loglog
from .geom import packing_count
from .manifold import GeometryError, Scenario
from .scenarios import get_scenario

__all__ = [
    "ScalingFit", "Sampling", "farthest_point_sampling", "SamplingRun", "SamplingStudy", "run_sampling_study",
    "PerturbationStudy", "run_perturbation_study", "OffsetTopologyScan", "offset_betti_scan",
    "reproduce_counterexample_P4",
]

log = logging.getLogger(__name__)

NEAR_FACTOR = 10.0
DENSE_PER_CHART = 8192


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("CRITFIELD_THREADS", "1")))
    except ValueError:
        return 1


def _map(fn, items):
    items = list(items)
    n = min(_threads(), len(items))
    if n <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(n) as ex:
        return list(ex.map(fn, items))


# -- farthest point sampling ---------------------------------------------------------------

@dataclass(frozen=True)
class Sampling:
    points: np.ndarray
    indices: np.ndarray
    eps: float
    delta: float  # measured minimum pairwise separation
    covering_radius: float  # Hausdorff distance to the dense input


def farthest_point_sampling(dense, eps: float) -> Sampling:
    """Greedy farthest-point subset of ``dense`` with covering radius ``<= eps``.

    Starts at the lexicographically smallest point.  Every added point is
    more than ``eps`` away from those already chosen, so the result is
    ``eps``-separated as well.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    P = np.asarray(dense, float)
    tree = cKDTree(P)
    gap = float(tree.query(P, k=2)[0][:, 1].max()) if len(P) > 1 else 0.0
    # the dense set must itself be an eps/4 sample; its covering radius is about half its largest gap
    if gap / 2 > eps / 4 * (1 + 1e-9):
        raise ValueError(f"dense set too sparse for eps={eps}: neighbour gap {gap:.3g} exceeds eps/2")
    first = int(np.lexsort(P.T[::-1])[0])
    chosen = [first]
    dmin = np.linalg.norm(P - P[first], axis=1)
    while True:
        i = int(np.argmax(dmin))
        if dmin[i] <= eps:
            break
        chosen.append(i)
        dmin = np.minimum(dmin, np.linalg.norm(P - P[i], axis=1))
    idx = np.array(chosen)
    S = P[idx]
    if len(S) > 1:
        delta = float(cKDTree(S).query(S, k=2)[0][:, 1].min())
    else:
        delta = math.inf
    return Sampling(S, idx, float(eps), delta, float(dmin.max()))


# -- sampling study ---------------------------------------------------------------------------

@dataclass
class SamplingRun:
    eps: float
    delta: float
    n_sample: int
    n_critical: int
    near: list  # {"z", "d_M"}
    far: list  # {"z", "match", "distance", "d_M", "projection_offsets", "mu", "mu_bound"}
    unclassified: list
    notes: list = field(default_factory=list)
    sample: np.ndarray | None = None

    def to_dict(self) -> dict:
        return {"eps": self.eps, "delta": self.delta, "n_sample": self.n_sample, "n_critical": self.n_critical,
                "near": self.near, "far": self.far, "unclassified": self.unclassified, "notes": self.notes}


@dataclass
class SamplingStudy:
    scenario: str
    tau: float
    R: float
    runs: list
    near_fit: ScalingFit | None
    far_fit: ScalingFit | None
    constants: dict
    checks: dict

    @property
    def passed(self) -> bool:
        return all(v["pass"] for v in self.checks.values())

    def to_dict(self) -> dict:
        return {"scenario": self.scenario, "tau": self.tau, "R": self.R,
                "runs": [r.to_dict() for r in self.runs],
                "near_fit": None if self.near_fit is None else self.near_fit.to_dict(),
                "far_fit": None if self.far_fit is None else self.far_fit.to_dict(),
                "constants": self.constants, "checks": self.checks, "passed": self.passed}

    def csv_rows(self) -> list[dict]:
        rows = []
        for r in self.runs:
            rows.append({
                "eps": r.eps, "delta": r.delta, "n_sample": r.n_sample, "n_near": len(r.near), "n_far": len(r.far),
                "n_unclassified": len(r.unclassified),
                "max_near_dM": max((p["d_M"] for p in r.near), default=""),
                "max_far_dist": max((p["distance"] for p in r.far), default=""),
                "near_slope": "" if self.near_fit is None else self.near_fit.slope,
                "far_slope": "" if self.far_fit is None else self.far_fit.slope,
                "mu_bound_ok": all(p["mu"] <= p["mu_bound"] for p in r.far),
                "count_bound_ok": self.checks["count_bound"]["per_eps"].get(str(r.eps), True),
            })
        return rows


def core_samples(scenario: Scenario, cp, h_max: float, n: int = 128, n_dirs: int = 8):
    """Verified points of the core medial axis of ``cp`` with ``|pi_Eperp(z - z0)| <= h_max``.

    Returns ``(points, gradient_norms)``, starting with ``z0`` itself.  A
    branch stops where the traced projections stop being nearest points.
    """
    _, Ep = frames(cp)
    pts, norms = [cp.z.copy()], [0.0]
    k = Ep.shape[1]
    if k == 0:
        return np.array(pts), np.array(norms)
    if k == 1:
        dirs = [Ep[:, 0], -Ep[:, 0]]
    else:
        ang = np.linspace(0, 2 * np.pi, n_dirs, endpoint=False)
        dirs = [Ep[:, 0] * np.cos(a) + Ep[:, 1] * np.sin(a) for a in ang]
    hs = np.linspace(h_max / n, h_max, n)
    for v in dirs:
        state = None
        for h in hs:
            try:
                tr = trace_core(scenario, cp, h * v, x0=state, steps=4)
            except GeometryError:
                break
            if tr.r > project(scenario, tr.z).distance * (1 + 1e-8) + 1e-12:
                break
            state = tr._state
            pts.append(tr.z)
            norms.append(tr.gradient_norm)
    return np.array(pts), np.array(norms)


def _ball_mu(scenario, z, eps, cores) -> tuple[float, str]:
    """Smallest gradient norm found within ``eps`` of ``z``: at ``z`` or on a traced core."""
    best, how = generalized_gradient(scenario, z).norm, "at z"
    for P, g in cores:
        sel = np.linalg.norm(P - z, axis=1) <= eps
        if sel.any() and g[sel].min() < best:
            best, how = float(g[sel].min()), "core medial axis"
    return float(best), how


def _classify_run(scenario, cs, tau, R, cores, eps, sample: Sampling) -> SamplingRun:
    ZA = cloud_critical_points(sample.points)
    run = SamplingRun(eps, sample.delta, len(sample.points), len(ZA), [], [], [], sample=sample.points)
    if len(ZA) == 0:
        return run
    Z = ZA.locations
    dM = distances(scenario, Z)
    cutoff = NEAR_FACTOR * eps**2 / tau
    locs = cs.locations
    for cp, d in zip(ZA, dM):
        if d <= cutoff:
            run.near.append({"z": cp.z.tolist(), "d_M": float(d)})
            continue
        if not len(locs):
            run.unclassified.append({"z": cp.z.tolist(), "d_M": float(d), "reason": "no critical point of M"})
            continue
        dist = np.linalg.norm(locs - cp.z, axis=1)
        k = int(np.argmin(dist))
        xs = cs[k].projections
        offs = np.linalg.norm(cp.projections[:, None] - xs[None], axis=-1)
        mu, how = _ball_mu(scenario, cp.z, eps, cores)
        run.far.append({
            "z": cp.z.tolist(), "d_M": float(d), "match": k, "distance": float(dist[k]),
            "projections": cp.projections.tolist(),
            "projection_ball": offs.argmin(1).tolist(), "projection_offsets": offs.min(1).tolist(),
            "mu": mu, "mu_witness": how, "mu_bound": float(eps / d * (1 + R / (2 * tau))),
        })
    if not run.far:
        run.notes.append("no far critical points at this eps")
    return run


def run_sampling_study(scenario, eps_list, dense_per_chart: int = DENSE_PER_CHART, tau: float | None = None,
                       cs: CriticalSet | None = None) -> SamplingStudy:
    """Critical points of farthest-point samples of ``scenario`` at each ``eps``.

    Each sample critical point is either *near* (``d_M <= 10 eps^2 / tau``)
    or *far*, in which case it is matched to the nearest critical point of
    the manifold.  For far points, ``mu`` is the smallest gradient norm
    found within ``eps`` (on traced core medial axes), compared against
    ``(eps / d_M)(1 + R / (2 tau))`` with ``R = diam``.
    """
    scenario = get_scenario(scenario) if not isinstance(scenario, Scenario) else scenario
    eps_list = [float(e) for e in eps_list]
    if not eps_list:
        raise ValueError("empty eps list")
    if any(a <= b for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("eps list must be strictly decreasing")
    tau = scenario.reach if tau is None else tau
    if tau is None:
        raise ValueError("scenario has no declared reach; pass tau explicitly")
    if eps_list[0] > tau / 8:
        warnings.warn(f"eps={eps_list[0]} exceeds tau/8={tau / 8:.4g}; the sampling theorem needs smaller eps",
                      stacklevel=2)
    R = float(scenario.diameter)
    cs = manifold_critical_points(scenario) if cs is None else cs
    dense = scenario.discretize(dense_per_chart)[0]
    samples = [farthest_point_sampling(dense, e) for e in eps_list]
    # mu-critical witnesses for the sampling bound live on the core medial axes
    cores = [core_samples(scenario, cp, 2 * eps_list[0] + 0.5 * R / 2) for cp in cs]
    runs = _map(lambda es: _classify_run(scenario, cs, tau, R, cores, *es), list(zip(eps_list, samples)))

    near_pts = [(r.eps, max(p["d_M"] for p in r.near)) for r in runs if r.near]
    far_pts = [(r.eps, max(p["distance"] for p in r.far)) for r in runs if r.far]
    near_fit = fit_loglog(*zip(*near_pts)) if len(near_pts) >= 2 else None
    far_fit = fit_loglog(*zip(*far_pts)) if len(far_pts) >= 2 else None

    C1 = max((d / e**2 for e, d in near_pts), default=None)
    C4 = max((d / e for e, d in far_pts), default=None)
    C5 = max((max(max(p["projection_offsets"]) for p in r.far) / r.eps for r in runs if r.far), default=None)

    checks = {}
    checks["unclassified"] = {"pass": all(not r.unclassified for r in runs),
                              "witnesses": [w for r in runs for w in r.unclassified]}
    checks["near_slope"] = {"pass": near_fit is None or 1.8 <= near_fit.slope <= 2.2,
                            "slope": None if near_fit is None else near_fit.slope, "target": [1.8, 2.2]}
    checks["far_slope"] = {"pass": far_fit is None or far_fit.slope <= 1.2,
                           "slope": None if far_fit is None else far_fit.slope, "target": "<= 1.2"}
    checks["far_within_C4"] = {"pass": all(p["distance"] <= C4 * r.eps * (1 + 1e-12) for r in runs for p in r.far),
                               "C4": C4}

    # every projection falls in one C5*eps ball around the matched x_j, and every ball gets one
    one_per_ball = []
    for r in runs:
        for p in r.far:
            xs = cs[p["match"]].projections
            radius = C5 * r.eps
            P = np.array(p["projections"])
            d = np.linalg.norm(P[:, None] - xs[None], axis=-1)
            hits = (d <= radius * (1 + 1e-12)).sum(1)
            balls = np.unique(np.array(p["projection_ball"]))
            ok = bool(np.all(hits == 1) and len(balls) == len(xs))
            if not ok:
                one_per_ball.append({"eps": r.eps, "z": p["z"], "hits": hits.tolist(), "balls": balls.tolist()})
    checks["projections_one_per_ball"] = {"pass": not one_per_ball, "C5": C5, "witnesses": one_per_ball}

    per_eps, count_detail = {}, []
    for r in runs:
        if not r.far:
            continue
        ok = True
        for k, cp in enumerate(cs):
            n_far = sum(p["match"] == k for p in r.far)
            if n_far == 0:
                continue
            N = max(packing_count(r.sample, x, r.delta, C5 * r.eps) for x in cp.projections)
            bound = 2.0 ** (N * cp.s)
            ok &= n_far <= bound
            count_detail.append({"eps": r.eps, "critical_point": k, "n_far": n_far, "N": N, "bound": bound})
        per_eps[str(r.eps)] = bool(ok)
    checks["count_bound"] = {"pass": all(per_eps.values()), "per_eps": per_eps, "detail": count_detail}
    violations = [{"eps": r.eps, "z": p["z"], "mu": p["mu"], "bound": p["mu_bound"]}
                  for r in runs for p in r.far if p["mu"] > p["mu_bound"]]
    checks["mu_bound"] = {"pass": not violations, "violations": violations, "tau": tau, "R": R}
    return SamplingStudy(scenario.name, float(tau), R, runs, near_fit, far_fit,
                         {"C1_hat": C1, "C4_hat": C4, "C5_hat": C5, "near_cutoff_factor": NEAR_FACTOR}, checks)


# -- perturbation study -------------------------------------------------------------------

@dataclass
class PerturbationStudy:
    scenario: str
    match_radius: float
    base: list
    results: list

    @property
    def passed(self) -> bool:
        return all(r["bijection"] and r["conditions_preserved"] for r in self.results)

    def to_dict(self) -> dict:
        return {"scenario": self.scenario, "match_radius": self.match_radius, "base": self.base,
                "results": self.results, "passed": self.passed}


def _match(base: CriticalSet, other: CriticalSet, radius: float):
    pairs, witnesses = [], []
    used = set()
    B, O = base.locations, other.locations
    for i in range(len(base)):
        if not len(O):
            witnesses.append({"kind": "critical point vanished", "z": B[i].tolist(), "radius": radius})
            continue
        d = np.linalg.norm(O - B[i], axis=1)
        cand = np.flatnonzero(d < radius)
        if len(cand) == 0:
            witnesses.append({"kind": "critical point vanished", "z": B[i].tolist(), "radius": radius,
                              "nearest": O[int(np.argmin(d))].tolist(), "nearest_distance": float(d.min())})
        elif len(cand) > 1:
            witnesses.append({"kind": "ambiguous match", "z": B[i].tolist(),
                              "candidates": O[cand].tolist()})
        else:
            j = int(cand[0])
            if j in used:
                witnesses.append({"kind": "ambiguous match", "z": B[i].tolist(), "candidates": [O[j].tolist()]})
            used.add(j)
            pairs.append((i, j, float(d[j])))
    for j in range(len(other)):
        if j not in used:
            witnesses.append({"kind": "new critical point", "z": O[j].tolist()})
    return pairs, witnesses


def run_perturbation_study(scenario, amplitudes, match_radius: float | None = None) -> PerturbationStudy:
    """Recompute critical points after each perturbation and match them to the unperturbed ones.

    Perturbations come from ``scenario.perturbed(a)``.  A base critical
    point matches when exactly one perturbed critical point lies within
    ``match_radius`` (default: the smaller of 1 and half the least
    separation of the base critical points).
    """
    scenario = get_scenario(scenario) if not isinstance(scenario, Scenario) else scenario
    base = manifold_critical_points(scenario)
    base_rep = condition_report(scenario, base, scan=False)
    if match_radius is None:
        L = base.locations
        sep = min((np.linalg.norm(L[i] - L[j]) for i in range(len(L)) for j in range(i)), default=math.inf)
        match_radius = min(1.0, sep / 2)

    def one(a):
        pert = scenario if a == 0 else scenario.perturbed(a)
        cs = base if a == 0 else manifold_critical_points(pert)
        rep = base_rep if a == 0 else condition_report(pert, cs, scan=False)
        pairs, witnesses = _match(base, cs, match_radius)
        proj = []
        for i, j, _ in pairs:
            X, Y = base[i].projections, cs[j].projections
            d = np.linalg.norm(Y[:, None] - X[None], axis=-1)
            proj.append({"base": i, "max_offset": float(d.min(1).max()) if len(Y) else None,
                         "one_per_ball": len(X) == len(Y) and len(set(d.argmin(1).tolist())) == len(X)})
        bij = not witnesses and all(p["one_per_ball"] for p in proj)
        return {
            "amplitude": float(a),
            "scenario": pert.name,
            "count": len(cs),
            "pairs": [{"base": i, "perturbed": j, "displacement": d} for i, j, d in pairs],
            "max_displacement": max((d for *_, d in pairs), default=0.0),
            "projection_matching": proj,
            "witnesses": witnesses,
            "bijection": bool(bij),
            "conditions_preserved": bool(rep["overall"] or not base_rep["overall"]),
            "conditions_overall": rep["overall"],
            "critical_points": [p.to_dict() for p in cs],
        }

    results = _map(one, [float(a) for a in amplitudes])
    return PerturbationStudy(scenario.name, float(match_radius), [p.to_dict() for p in base], results)


# -- offset topology ----------------------------------------------------------------------------

@dataclass
class OffsetTopologyScan:
    scenario: str
    grid_step: float
    offsets: list
    betti0: list
    betti1: list
    change_radii: list
    warnings: list
    dense_points: int

    def to_dict(self) -> dict:
        return dict(self.__dict__)


_FG = ndimage.generate_binary_structure(2, 1)  # 4-connected foreground
_BG = ndimage.generate_binary_structure(2, 2)  # 8-connected background


def _betti(mask: np.ndarray) -> tuple[int, int]:
    b0 = ndimage.label(mask, _FG)[1]
    lab, n = ndimage.label(~mask, _BG)
    border = np.unique(np.concatenate([lab[0], lab[-1], lab[:, 0], lab[:, -1]]))
    outer = set(border.tolist()) - {0}
    return int(b0), int(n - len(outer))


def offset_betti_scan(scenario, grid_step: float = 0.01, offsets=None, dense_per_chart: int = 16384) -> OffsetTopologyScan:
    """Betti numbers of the rasterised offsets ``{d_M <= a}`` of a plane curve."""
    scenario = get_scenario(scenario) if not isinstance(scenario, Scenario) else scenario
    if scenario.D != 2:
        raise ValueError("offset scans need a curve in the plane")
    if offsets is None:
        offsets = np.round(np.arange(grid_step, 1.5 + grid_step / 2, grid_step), 12)
    offsets = np.sort(np.asarray(offsets, float))
    dense = scenario.discretize(dense_per_chart)[0]
    pad = offsets.max() + 3 * grid_step
    lo, hi = dense.min(0) - pad, dense.max(0) + pad
    # align the grid with the origin so that symmetric shapes are sampled symmetrically
    lo = np.floor(lo / grid_step) * grid_step
    hi = np.ceil(hi / grid_step) * grid_step
    xs = np.arange(lo[0], hi[0] + grid_step / 2, grid_step)
    ys = np.arange(lo[1], hi[1] + grid_step / 2, grid_step)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    d = cKDTree(dense).query(np.column_stack([X.ravel(), Y.ravel()]))[0].reshape(X.shape)
    b0, b1 = [], []
    for a in offsets:
        p, q = _betti(d <= a)
        b0.append(p)
        b1.append(q)
    changes, warns = [], []
    for k in range(1, len(offsets)):
        if (b0[k], b1[k]) != (b0[k - 1], b1[k - 1]):
            changes.append(float(offsets[k]))
            if offsets[k] - offsets[k - 1] > 2 * grid_step * (1 + 1e-9):
                warns.append(f"change between {offsets[k - 1]:.4g} and {offsets[k]:.4g} spans more than two grid cells")
    for w in warns:
        warnings.warn(w, stacklevel=2)
    return OffsetTopologyScan(scenario.name, float(grid_step), offsets.tolist(), b0, b1, changes, warns, len(dense))


# -- the degenerate cubic ---------------------------------------------------------------------

def reproduce_counterexample_P4(xs=(1e-3, 2e-3, 5e-3, 1e-2, 2e-2, 5e-2, 1e-1)) -> dict:
    """Gradient along ``p(x) = (x + 3x^2 + 3x^5, 0)`` on the cubic scenario.

    The two projections of ``p(x)`` are ``(x, +-(1 + x^3))`` and the
    gradient norm behaves like ``3 x^2``, so ``mu``-critical points sit at
    distance ``~ sqrt(mu / 3)`` from the critical point.
    """
    sc = get_scenario("paper_cubic")
    cs = manifold_critical_points(sc)
    near = cs.within((0.0, 0.0), 0.5)
    z0 = near[0].z if near else np.zeros(2)
    rows = []
    for x in xs:
        p = np.array([x + 3 * x**2 + 3 * x**5, 0.0])
        ps = project(sc, p)
        g = generalized_gradient(sc, p)
        expected = np.array([[x, -(1 + x**3)], [x, 1 + x**3]])
        err = float(np.abs(ps.points - expected).max()) if len(ps) == 2 else math.inf
        d0 = float(np.linalg.norm(p - z0))
        rows.append({"x": float(x), "p": p.tolist(), "n_projections": len(ps), "projection_error": err,
                     "gradient_norm": g.norm, "ratio_to_3x2": g.norm / (3 * x**2), "distance_to_z0": d0,
                     "distance_ratio": d0 / x})
    small = [r for r in rows if r["x"] <= 0.01 + 1e-15]
    g0 = generalized_gradient(sc, z0).norm
    checks = {
        "projections_closed_form": all(r["projection_error"] <= 1e-8 for r in rows),
        "ratio_within_5pct": all(0.95 <= r["ratio_to_3x2"] <= 1.05 for r in small),
        "distance_ratio_to_1": all(abs(r["distance_ratio"] - 1) <= 0.05 for r in small),
        "gradient_zero_at_z0": g0 <= 1e-6,
    }
    fit = fit_loglog([r["distance_to_z0"] for r in rows], [r["gradient_norm"] for r in rows])
    return {"scenario": sc.name, "z0": z0.tolist(), "gradient_at_z0": g0, "rows": rows,
            "fit": fit.to_dict(), "checks": checks, "passed": all(checks.values())}


"""Critical points of distance functions.

For finite clouds a critical point is the circumcentre ``z`` (inside its own
affine hull) of a subset ``sigma`` such that ``sigma`` is contained in the
nearest-point set ``pi(z)`` and ``z`` lies in ``conv(pi(z))``.  Two routes
compute them:

* :func:`cloud_critical_points_bruteforce` enumerates every subset of size
  2..D+1 and checks the definition with dense distance computations and a
  non-negative least-squares hull test;
* :func:`cloud_critical_points` only examines faces of the Delaunay
  triangulation (every critical point is the circumcentre of a Delaunay
  face containing it), filters with a KD-tree empty-ball query and confirms
  with the smallest enclosing ball of ``pi(z)``.

For manifolds, :func:`manifold_critical_points` seeds from the critical
points of a dense discretisation and refines each seed with Newton on the
square system (local projections, equidistance, barycentric closure).
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from scipy.spatial import Delaunay, QhullError, cKDTree
from scipy.sparse.csgraph import connected_components
from scipy.sparse import coo_matrix

from .distfield import CLOUD_TIE_TOL, PointCloud, project
from .geom import as_points, batched_circumcenters, convex_membership, smallest_enclosing_ball
from .manifold import Scenario, locate

log = logging.getLogger(__name__)

BRUTEFORCE_MAX_N = 40
CLOUD_MAX_N = 5000
DEDUP_REL = 1e-6
HULL_TOL = 1e-10


@dataclass(frozen=True)
class CriticalPoint:
    z: np.ndarray
    r: float
    projections: np.ndarray  # (s, D)
    weights: np.ndarray  # barycentric, sums to 1
    residual: float
    source: str  # "cloud_exact" | "manifold_newton"
    params: tuple | None = None  # ((chart, u), ...) for manifolds
    flags: tuple = ()
    jacobian_cond: float | None = None

    @property
    def s(self) -> int:
        return len(self.projections)

    @property
    def D(self) -> int:
        return len(self.z)

    def to_dict(self) -> dict:
        out = {
            "z": self.z.tolist(),
            "r": self.r,
            "s": self.s,
            "projections": self.projections.tolist(),
            "weights": self.weights.tolist(),
            "residual": self.residual,
            "source": self.source,
            "flags": list(self.flags),
        }
        if self.params is not None:
            out["chart_params"] = [{"chart": c, "u": np.asarray(u).tolist()} for c, u in self.params]
        if self.jacobian_cond is not None:
            out["jacobian_cond"] = self.jacobian_cond
        return out


@dataclass
class CriticalSet:
    points: list
    dedup_radius: float
    rejected: list = field(default_factory=list)  # dicts describing dropped / suspect candidates
    complete: bool = False  # True only for exhaustive (cloud) enumeration

    def __len__(self):
        return len(self.points)

    def __iter__(self):
        return iter(self.points)

    def __getitem__(self, i):
        return self.points[i]

    @property
    def locations(self) -> np.ndarray:
        if not self.points:
            return np.zeros((0, 0))
        return np.array([p.z for p in self.points])

    def within(self, center, radius) -> list:
        c = np.asarray(center, float)
        return [p for p in self.points if np.linalg.norm(p.z - c) < radius]

    def to_dict(self) -> dict:
        return {
            "count": len(self.points),
            "complete": self.complete,
            "dedup_radius": self.dedup_radius,
            "points": [p.to_dict() for p in self.points],
            "rejected": self.rejected,
        }


def _canonical(points: list, dedup: float) -> list:
    """Sort by (value, location) and drop points within ``dedup`` of an earlier kept one."""
    points = sorted(points, key=lambda p: (round(p.r, 12), tuple(np.round(p.z, 12)), p.residual))
    if len(points) < 2:
        return points
    Z = np.array([p.z for p in points])
    neighbours: dict[int, list[int]] = {}
    for i, j in cKDTree(Z).query_pairs(dedup):
        neighbours.setdefault(max(i, j), []).append(min(i, j))
    kept = np.zeros(len(points), dtype=bool)
    for i in range(len(points)):
        kept[i] = not any(kept[j] for j in neighbours.get(i, ()))
    out = [p for p, k in zip(points, kept) if k]
    return sorted(out, key=lambda p: (round(p.r, 12), tuple(np.round(p.z, 12))))


def _scale(P: np.ndarray) -> float:
    return float(np.ptp(P, axis=0).max()) if len(P) > 1 else 1.0


# -- clouds: brute force oracle -----------------------------------------------------------

def cloud_critical_points_bruteforce(cloud) -> CriticalSet:
    """Exhaustive enumeration over all subsets of size 2..D+1 (n <= 40)."""
    P = np.unique(as_points(cloud), axis=0)
    n, D = P.shape
    if n > BRUTEFORCE_MAX_N:
        raise ValueError(f"size guard exceeded: {n} > {BRUTEFORCE_MAX_N} points")
    scale = _scale(P)
    dedup = DEDUP_REL * scale
    found = []
    for k in range(2, min(D + 1, n) + 1):
        combos = np.array(list(combinations(range(n), k)))
        centers, radii, ok = batched_circumcenters(P[combos])
        for ci in np.flatnonzero(ok):
            z, r = centers[ci], float(radii[ci])
            if r <= 1e-12 * (1 + scale):
                continue
            dist = np.sqrt(((P - z) ** 2).sum(1))
            d = dist.min()
            # sigma must be among the nearest points
            if dist[combos[ci]].max() > d + CLOUD_TIE_TOL * (1 + d):
                continue
            near = P[dist <= d + CLOUD_TIE_TOL * (1 + d)]
            bary = convex_membership(z, near)
            if bary is None:
                continue
            found.append((z, near, bary.weights))
    pts = []
    for z, near, w in found:
        order = np.lexsort(near.T[::-1])
        r = float(np.linalg.norm(near[0] - z))
        pts.append(_cloud_point(z, near[order], w[order], r))
    return CriticalSet(_canonical(pts, dedup), dedup, complete=True)


def _cloud_point(z, near, weights, r) -> CriticalPoint:
    D = len(z)
    resid = float(np.linalg.norm(weights @ near - z))
    flags = ("s_exceeds_D_plus_1",) if len(near) > D + 1 else ()
    return CriticalPoint(np.asarray(z, float), r, near, weights, resid, "cloud_exact", flags=flags)


# -- clouds: Delaunay route ---------------------------------------------------------------

def _affine_frame(P: np.ndarray):
    """Orthonormal coordinates of the affine hull of ``P``: (origin, basis (k, D))."""
    origin = P.mean(axis=0)
    _, sv, Vt = np.linalg.svd(P - origin, full_matrices=False)
    k = int((sv > 1e-10 * max(sv.max(), 1e-300)).sum()) if len(sv) else 0
    return origin, Vt[:k]


def _delaunay_faces(P: np.ndarray) -> list[np.ndarray]:
    """Index arrays of all Delaunay faces of dimension >= 1, grouped by vertex count."""
    n, D = P.shape
    origin, basis = _affine_frame(P)
    k = len(basis)
    if k == 0:
        return []
    Q = (P - origin) @ basis.T
    if k == 1:
        order = np.argsort(Q[:, 0], kind="stable")
        return [np.stack([order[:-1], order[1:]], 1)]
    try:
        # joggled input: exact Qhull stalls on large cospherical sets (sphere samples).  The
        # faces found are re-evaluated on the original coordinates and verified afterwards.
        tri = Delaunay(Q, qhull_options="QJ Qbb Qc") if n > k + 1 else Delaunay(Q)
    except QhullError:  # pragma: no cover - degenerate after the rank test
        return [np.array(list(combinations(range(n), 2)))]
    simplices = np.sort(tri.simplices, axis=1)
    faces = []
    for size in range(2, k + 2):
        sub = np.vstack([simplices[:, list(c)] for c in combinations(range(k + 1), size)])
        faces.append(np.unique(sub, axis=0))
    return faces


def cloud_critical_points(cloud, max_n: int | None = CLOUD_MAX_N) -> CriticalSet:
    """All critical points of the distance to a finite cloud (n <= 5000 unless ``max_n`` says otherwise)."""
    P = np.unique(as_points(cloud), axis=0)
    n, D = P.shape
    if max_n is not None and n > max_n:
        raise ValueError(f"cloud too large: {n} > {max_n}")
    scale = _scale(P)
    dedup = DEDUP_REL * scale
    tree = cKDTree(P)
    # Jung's theorem bounds the circumradius of any critical point
    jung = scale * math.sqrt(D / (2.0 * (D + 1))) * math.sqrt(D) * (1 + 1e-9)
    cand = []  # (z, face indices, barycentric weights)
    for faces in _delaunay_faces(P):
        centers, radii, ok = batched_circumcenters(P[faces])
        edges = P[faces[:, 1:]] - P[faces[:, :1]]
        rel = centers - P[faces[:, 0]]
        gram = np.einsum("bid,bjd->bij", edges, edges)
        safe = np.where(ok[:, None, None], gram, np.eye(gram.shape[1]))
        c = np.linalg.solve(safe, np.einsum("bid,bd->bi", edges, rel)[..., None])[..., 0]
        lam = np.column_stack([1.0 - c.sum(1), c])
        good = ok & (lam.min(1) >= -HULL_TOL) & (radii > 1e-12 * (1 + scale)) & (radii <= jung)
        if not good.any():
            continue
        z, r = centers[good], radii[good]
        dnear, _ = tree.query(z)
        empty = dnear >= r - CLOUD_TIE_TOL * (1 + r)
        cand.extend(zip(z[empty], faces[good][empty], lam[good][empty]))
    if not cand:
        return CriticalSet([], dedup, complete=True)
    Z = np.array([c[0] for c in cand])
    # merge duplicate candidates (co-spherical configurations) before the costly checks
    key = np.round(Z / max(dedup, 1e-300)).astype(np.int64)
    _, first = np.unique(key, axis=0, return_index=True)
    first = np.sort(first)
    Z = Z[first]
    dnear, _ = tree.query(Z)
    tie = dnear + CLOUD_TIE_TOL * (1 + dnear)
    counts = tree.query_ball_point(Z, tie, return_length=True)
    pc = PointCloud(P)
    out = []
    for j, (k, z) in enumerate(zip(first, Z)):
        _, face, lam = cand[k]
        if dnear[j] <= 1e-12 * (1 + scale):
            continue
        fd = np.linalg.norm(P[face] - z, axis=1)
        if counts[j] == len(face) and fd.max() <= tie[j] and lam.min() > 1e-9:
            # the tie set is exactly this face and z is well inside it: z is its MEB centre
            order = np.lexsort(P[face].T[::-1])
            out.append(_cloud_point(z, P[face][order], lam[order], float(dnear[j])))
            continue
        ps = project(pc, z)
        ball = smallest_enclosing_ball(ps.points)
        if np.linalg.norm(ball.center - z) > 1e-9 * (1 + ps.distance):
            continue
        bary = convex_membership(z, ps.points)
        if bary is None:
            continue
        out.append(_cloud_point(z, ps.points, bary.weights, ps.distance))
    return CriticalSet(_canonical(out, dedup), dedup, complete=True)


# -- manifolds ----------------------------------------------------------------------------

def _clusters(points: np.ndarray, link: float) -> np.ndarray:
    """Single-linkage cluster labels with linkage distance ``link``."""
    if len(points) == 1:
        return np.zeros(1, dtype=int)
    pairs = cKDTree(points).query_pairs(link, output_type="ndarray")
    g = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(len(points),) * 2)
    return connected_components(g, directed=False)[1]


@dataclass
class _Seed:
    z: np.ndarray
    r: float
    params: list  # [(chart, u)]


def _square_system(scenario, params, z, r, lam):
    """Residual and Jacobian of the critical-point system.

    Unknowns: (u_1..u_s, z, r, lambda).  Equations: tangential components of
    f(u_j) - z, |f(u_j) - z|^2 - r^2, sum lambda_j f(u_j) - z, sum lambda - 1.
    """
    s = len(params)
    m, D = scenario.m, scenario.D
    nu = s * m + D + 1 + s
    F = np.zeros(nu)
    Jm = np.zeros((nu, nu))
    row = 0
    fs = []
    for j, (c, u) in enumerate(params):
        ch = scenario.charts[c]
        f = ch.eval(u[None])[0]
        J = ch.jac(u[None])[0]
        H = ch.hess(u[None])[0]
        fs.append((f, J))
        d = f - z
        cu = slice(j * m, (j + 1) * m)
        cz = slice(s * m, s * m + D)
        F[row : row + m] = J.T @ d
        Jm[row : row + m, cu] = np.einsum("dab,d->ab", H, d) + J.T @ J
        Jm[row : row + m, cz] = -J.T
        row += m
    for j, (f, J) in enumerate(fs):
        d = f - z
        F[row] = d @ d - r * r
        Jm[row, j * m : (j + 1) * m] = 2 * d @ J
        Jm[row, s * m : s * m + D] = -2 * d
        Jm[row, s * m + D] = -2 * r
        row += 1
    lam_off = s * m + D + 1
    comb = sum(lam[j] * fs[j][0] for j in range(s)) - z
    F[row : row + D] = comb
    for j, (f, J) in enumerate(fs):
        Jm[row : row + D, j * m : (j + 1) * m] = lam[j] * J
        Jm[row : row + D, lam_off + j] = f
    Jm[row : row + D, s * m : s * m + D] = -np.eye(D)
    row += D
    F[row] = lam.sum() - 1
    Jm[row, lam_off:] = 1.0
    return F, Jm


def _unpack(x, s, m, D, charts):
    params = [(c, x[j * m : (j + 1) * m]) for j, c in enumerate(charts)]
    z = x[s * m : s * m + D]
    r = x[s * m + D]
    lam = x[s * m + D + 1 :]
    return params, z, r, lam


def refine_critical_point(scenario: Scenario, params, z, r, max_iter: int = 80, tol: float = 1e-13):
    """Damped Newton on the square system from the given seeds.

    Returns ``(params, z, r, lam, residual, jacobian_cond)`` or ``None``.
    """
    s, m, D = len(params), scenario.m, scenario.D
    charts = [c for c, _ in params]
    pts = np.array([scenario.point(c, u) for c, u in params])
    lam = np.linalg.lstsq(np.vstack([pts.T, np.ones(s)]), np.append(z, 1.0), rcond=None)[0]
    x = np.concatenate([np.concatenate([np.asarray(u, float) for _, u in params]), z, [r], lam])
    scale = 1.0 + scenario.diameter

    def residual(xv):
        p, zz, rr, ll = _unpack(xv, s, m, D, charts)
        return _square_system(scenario, p, zz, rr, ll)

    F, Jm = residual(x)
    nrm = np.linalg.norm(F)
    for _ in range(max_iter):
        if nrm <= tol * scale**2:
            break
        step = np.linalg.lstsq(Jm, -F, rcond=None)[0]
        t = 1.0
        for _h in range(30):
            xn = x + t * step
            for j, c in enumerate(charts):
                ch = scenario.charts[c]
                xn[j * m : (j + 1) * m] = ch.normalize(xn[j * m : (j + 1) * m][None])[0]
            Fn, Jn = residual(xn)
            nn = np.linalg.norm(Fn)
            if nn < nrm or nn <= tol * scale**2:
                break
            t *= 0.5
        else:
            break
        x, F, Jm, nrm = xn, Fn, Jn, nn
    if not np.isfinite(nrm) or nrm > 1e-9 * scale**2:
        return None
    p, zz, rr, ll = _unpack(x, s, m, D, charts)
    cond = float(np.linalg.cond(Jm))
    return p, zz.copy(), abs(float(rr)), ll.copy(), float(nrm), cond


def _seeds_from_cloud(scenario, P, idx, U, cs: CriticalSet, link: float):
    seeds, suspects = [], []
    D = scenario.D
    tree = cKDTree(P)
    for cp in cs:
        if float(np.ptp(cp.projections, axis=0).max()) <= link:
            continue  # all projections adjacent: a near-manifold critical point
        ids = np.array(tree.query_ball_point(cp.z, cp.r * (1 + CLOUD_TIE_TOL) + 1e-300))
        labels = _clusters(P[ids], link)
        nclus = labels.max() + 1
        extent = float(np.ptp(P[ids], axis=0).max()) if len(ids) > 1 else 0.0
        if cp.s > D + 1 and nclus < 2 or (nclus > D + 1):
            suspects.append({"z": cp.z.tolist(), "r": cp.r, "reason": "continuum suspected",
                             "samples_on_sphere": int(cp.s), "extent": extent})
            continue
        if nclus < 2:
            continue
        params = []
        for k in range(nclus):
            members = ids[labels == k]
            # the sample closest to the cluster mean stands for the cluster
            mean = P[members].mean(0)
            i = members[np.argmin(np.linalg.norm(P[members] - mean, axis=1))]
            params.append((int(idx[i]), U[i].copy()))
        seeds.append(_Seed(cp.z.copy(), cp.r, params))
    return seeds, suspects


def _relocate(scenario, params):
    out = []
    for c, u in params:
        x = scenario.point(c, u)
        out.append(locate(scenario, x))
    return out


def manifold_critical_points(scenario: Scenario, n_per_chart: int = 2048, link_factor: float = 3.0) -> CriticalSet:
    """Critical points of the distance to a parametric manifold (seeded, Newton-refined)."""
    P, idx, U = scenario.discretize(n_per_chart)
    cs = cloud_critical_points(P, max_n=None)
    nn = cKDTree(P).query(P, k=2)[0][:, 1]
    link = link_factor * float(nn.max())
    seeds, suspects = _seeds_from_cloud(scenario, P, idx, U, cs, link)
    dedup = DEDUP_REL * scenario.diameter
    found: list[CriticalPoint] = []
    rejected = list(suspects)
    # many sample critical points can seed the same solution; refine distinct seeds only
    seen: list[np.ndarray] = []
    for seed in sorted(seeds, key=lambda sd: (sd.r, tuple(np.round(sd.z, 9)))):
        if any(np.linalg.norm(seed.z - q) <= 0.25 * link for q in seen):
            continue
        seen.append(seed.z)
        cp = _refine_and_verify(scenario, seed, rejected)
        if cp is not None:
            found.append(cp)
    for sus in suspects:
        log.info("continuum suspected at %s", sus["z"])
    return CriticalSet(_canonical(found, dedup), dedup, rejected=rejected, complete=False)


def _refine_and_verify(scenario: Scenario, seed: _Seed, rejected: list, depth: int = 0):
    D = scenario.D
    params = _relocate(scenario, seed.params)
    res = refine_critical_point(scenario, params, seed.z, seed.r)
    if res is None:
        rejected.append({"z": seed.z.tolist(), "r": seed.r, "reason": "newton diverged"})
        log.info("Newton diverged from seed %s", seed.z)
        return None
    params, z, r, lam, resid, cond = res
    if lam.min() < -1e-9:
        rejected.append({"z": z.tolist(), "r": r, "reason": "negative barycentric weight"})
        return None
    ps = project(scenario, z)
    if r > ps.distance * (1 + 1e-8) + 1e-12:
        rejected.append({"z": z.tolist(), "r": r, "reason": "not a global projection",
                         "true_distance": ps.distance})
        return None
    if ps.continuum_suspected:
        rejected.append({"z": z.tolist(), "r": r, "reason": "continuum suspected"})
        return None
    pts = np.array([scenario.point(c, u) for c, u in params])
    # a projection missed by the seeds: re-seed from the full projection set once
    if len(ps) > len(pts) and depth == 0:
        return _refine_and_verify(scenario, _Seed(z, r, list(ps.params)), rejected, depth + 1)
    order = np.lexsort(pts.T[::-1])
    pts, lam = pts[order], lam[order]
    params = tuple((int(params[i][0]), np.asarray(params[i][1]).copy()) for i in order)
    flags = ("s_exceeds_D_plus_1",) if len(pts) > D + 1 else ()
    if r <= 1e-12 * (1 + scenario.diameter):
        return None
    return CriticalPoint(z, r, pts, lam, resid, "manifold_newton", params, flags, cond)


# -- index -----------------------------------------------------------------------------------

def classify_index(cp: CriticalPoint, handle=None, step: float = 1e-3, band: float = 1e-5):
    """``(s - 1, restricted index)`` for a critical point satisfying P1-P4.

    The restricted index counts negative eigenvalues of the finite-difference
    Hessian of ``h -> d(core(h))`` where ``core`` is the traced core medial
    axis over ``E^perp``.  Cloud critical points only need P1 (a finite set has
    no curvature); their core is ``z0 + h``.
    """
    from . import conditions

    p1 = conditions.check_P1(cp)
    if not p1["pass"]:
        raise ValueError("classification requires P1-P4")
    if cp.source == "manifold_newton":
        if handle is None:
            raise ValueError("manifold critical points need their scenario")
        rep = conditions.check_point(handle, cp)
        if not rep["overall"]:
            raise ValueError("classification requires P1-P4")
    Eperp = conditions.frames(cp)[1]
    k = Eperp.shape[1]
    if k == 0:
        return cp.s - 1, 0

    def value(h):
        if cp.source == "cloud_exact":
            return float(np.linalg.norm(cp.z + Eperp @ h - cp.projections[0]))
        tr = conditions.trace_core(handle, cp, Eperp @ h)
        return tr.r

    H = np.zeros((k, k))
    f0 = value(np.zeros(k))
    for a in range(k):
        for b in range(a, k):
            ea = np.eye(k)[a] * step
            eb = np.eye(k)[b] * step
            if a == b:
                H[a, a] = (value(ea) - 2 * f0 + value(-ea)) / step**2
            else:
                H[a, b] = H[b, a] = (value(ea + eb) - value(ea - eb) - value(-ea + eb) + value(-ea - eb)) / (4 * step**2)
    eig = np.linalg.eigvalsh(H)
    if np.any(np.abs(eig) <= band):
        raise ValueError(f"degenerate restricted Hessian: eigenvalues {eig.tolist()}")
    return cp.s - 1, int((eig < 0).sum())

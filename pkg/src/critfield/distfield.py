"""Distance-function queries: projection sets, generalized gradient, mu-criticality.

A compact set is either a :class:`PointCloud` or a manifold
:class:`~critfield.manifold.Scenario`; :func:`as_handle` converts arrays
and scenario names.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .geom import as_points, smallest_enclosing_ball
from .manifold import ProjectionError, Scenario, newton_project

CLOUD_TIE_TOL = 1e-9
MANIFOLD_TIE_TOL = 1e-6
N_STARTS = 256
MAX_SEEDS = 12
HAUSDORFF_DENSITY = 4096


class PointCloud:
    """Finite point set with a cached KD-tree."""

    def __init__(self, points, tie_tol: float = CLOUD_TIE_TOL):
        self.points = as_points(points)
        self.tie_tol = float(tie_tol)
        self.tree = cKDTree(self.points)
        self.D = self.points.shape[1]

    def __len__(self):
        return len(self.points)

    @property
    def diameter(self) -> float:
        from .manifold import _diameter

        return _diameter(self.points) if len(self.points) > 1 else 0.0


def as_handle(obj):
    if isinstance(obj, (PointCloud, Scenario)):
        return obj
    if isinstance(obj, str):
        from .scenarios import get_scenario

        return get_scenario(obj)
    return PointCloud(obj)


@dataclass(frozen=True)
class ProjectionSet:
    query: np.ndarray
    distance: float
    points: np.ndarray  # (k, D), canonically sorted
    params: tuple | None  # ((chart, u), ...) for manifolds
    tie_tol: float
    continuum_suspected: bool = False

    def __len__(self):
        return len(self.points)


@dataclass(frozen=True)
class GradientInfo:
    meb_center: np.ndarray
    vector: np.ndarray
    norm: float
    projections: ProjectionSet


def _lexsort_rows(P):
    return np.lexsort(P.T[::-1])


# -- clouds -----------------------------------------------------------------------

def _project_cloud(cloud: PointCloud, z: np.ndarray) -> ProjectionSet:
    d, _ = cloud.tree.query(z)
    d = float(d)
    idx = cloud.tree.query_ball_point(z, d + cloud.tie_tol * (1.0 + d) + 1e-300)
    P = cloud.points[idx]
    dist = np.linalg.norm(P - z, axis=1)
    P = P[dist <= d + cloud.tie_tol * (1.0 + d)]
    P = P[_lexsort_rows(P)]
    return ProjectionSet(z, d, P, None, cloud.tie_tol, len(P) > cloud.D + 1)


# -- manifolds -----------------------------------------------------------------------

def _local_minima(d: np.ndarray, periodic) -> np.ndarray:
    """Boolean mask of grid local minima (non-strict) for ``d`` of shape ``(N, k[, k])``."""
    mask = np.ones(d.shape, dtype=bool)
    for ax, per in enumerate(periodic, start=1):
        for shift in (1, -1):
            if per:
                nb = np.roll(d, shift, axis=ax)
            else:
                pad = [(0, 0)] * d.ndim
                pad[ax] = (1, 0) if shift == 1 else (0, 1)
                padded = np.pad(d, pad, constant_values=np.inf)
                sl = [slice(None)] * d.ndim
                sl[ax] = slice(0, -1) if shift == 1 else slice(1, None)
                nb = padded[tuple(sl)]
            mask &= d <= nb
    return mask


def _chart_seeds(chart, Z, n_starts, max_seeds):
    G = chart.grid(n_starts, sample=False)
    P = chart.eval(G)
    shape = chart.grid_shape(n_starts)
    qs, us = [], []
    for lo in range(0, len(Z), 2048):
        Zc = Z[lo : lo + 2048]
        d = np.sqrt(((Zc[:, None, :] - P[None]) ** 2).sum(-1))
        lm = _local_minima(d.reshape(len(Zc), *shape), chart.periodic).reshape(len(Zc), -1)
        dm = np.where(lm, d, np.inf)
        k = min(max_seeds, dm.shape[1])
        order = np.argsort(dm, axis=1, kind="stable")[:, :k]
        valid = np.isfinite(np.take_along_axis(dm, order, axis=1))
        q, j = np.nonzero(valid)
        qs.append(q + lo)
        us.append(G[order[q, j]])
    return np.concatenate(qs), np.vstack(us)


def _manifold_candidates(scenario: Scenario, Z: np.ndarray, n_starts: int, max_seeds: int):
    """All converged Newton critical points of ``u -> |f(u) - z|`` from grid seeds."""
    out = []
    for c, chart in enumerate(scenario.charts):
        q, U0 = _chart_seeds(chart, Z, n_starts, max_seeds)
        if len(q) == 0:
            continue
        U, F, res, conv = newton_project(chart, U0, Z[q])
        keep = conv
        dist = np.linalg.norm(F - Z[q], axis=1)
        out.append((q[keep], np.full(keep.sum(), c), U[keep], F[keep], dist[keep]))
    if not out:
        return (np.zeros(0, int),) * 2 + (np.zeros((0, 1)), np.zeros((0, scenario.D)), np.zeros(0))
    q = np.concatenate([o[0] for o in out])
    ch = np.concatenate([o[1] for o in out])
    U = [u for o in out for u in o[2]]
    F = np.vstack([o[3] for o in out])
    dist = np.concatenate([o[4] for o in out])
    return q, ch, U, F, dist


def _assemble(scenario, z, ch, U, F, dist, tie_tol, dedup):
    d = float(dist.min())
    sel = np.flatnonzero(dist <= d + tie_tol * (1.0 + d))
    # deepest-inside chart first so that it wins the dedup
    from .manifold import _interior_margin

    margins = np.array([_interior_margin(scenario.charts[ch[i]], U[i]) for i in sel])
    sel = sel[np.argsort(-margins, kind="stable")]
    kept = []
    for i in sel:
        if all(np.linalg.norm(F[i] - F[j]) > dedup for j in kept):
            kept.append(i)
    kept = np.array(kept)
    P = F[kept]
    order = _lexsort_rows(P)
    kept = kept[order]
    params = tuple((int(ch[i]), np.asarray(U[i])) for i in kept)
    return ProjectionSet(z, d, F[kept], params, tie_tol, len(kept) > scenario.D + 1)


def project_many(handle, Z, tie_tol: float | None = None, n_starts: int = N_STARTS,
                 max_seeds: int = MAX_SEEDS) -> list[ProjectionSet]:
    """:func:`project` for an ``(N, D)`` batch of queries."""
    handle = as_handle(handle)
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    if not np.all(np.isfinite(Z)):
        raise ValueError("non-finite query")
    if isinstance(handle, PointCloud):
        if tie_tol is not None:
            handle = PointCloud(handle.points, tie_tol)
        return [_project_cloud(handle, z) for z in Z]
    tie = MANIFOLD_TIE_TOL if tie_tol is None else tie_tol
    q, ch, U, F, dist = _manifold_candidates(handle, Z, n_starts, max_seeds)
    dedup = 1e-6 * handle.diameter
    out = []
    order = np.argsort(q, kind="stable")
    bounds = np.searchsorted(q[order], np.arange(len(Z) + 1))
    for k, z in enumerate(Z):
        idx = order[bounds[k] : bounds[k + 1]]
        if len(idx) == 0:
            raise ProjectionError(f"projection search failed for z={z.tolist()} on {handle.name}: "
                                  f"no Newton start converged ({len(handle.charts)} charts, {n_starts} starts each)")
        out.append(_assemble(handle, z, ch[idx], [U[i] for i in idx], F[idx], dist[idx], tie, dedup))
    return out


def project(handle, z, tie_tol: float | None = None) -> ProjectionSet:
    """Nearest points of ``handle`` to ``z`` (all of them, up to the tie tolerance)."""
    return project_many(handle, np.asarray(z, dtype=float)[None], tie_tol)[0]


def distances(handle, Z) -> np.ndarray:
    """d_S at each row of ``Z``."""
    handle = as_handle(handle)
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    if isinstance(handle, PointCloud):
        return handle.tree.query(Z)[0]
    return np.array([p.distance for p in project_many(handle, Z)])


def _onset_tol(handle) -> float:
    scale = handle.diameter if isinstance(handle, Scenario) else 1.0 + float(np.abs(handle.points).max())
    return 1e-12 * (1.0 + scale)


def gradient_from_projections(ps: ProjectionSet, onset_tol: float = 0.0) -> GradientInfo:
    z = ps.query
    if ps.distance <= onset_tol:
        return GradientInfo(z.copy(), np.zeros_like(z), 0.0, ps)
    ball = smallest_enclosing_ball(ps.points)
    vec = (z - ball.center) / ps.distance
    return GradientInfo(ball.center, vec, float(np.linalg.norm(vec)), ps)


def generalized_gradient(handle, z) -> GradientInfo:
    """``(z - m(pi(z))) / d(z)``, with ``m`` the smallest-enclosing-ball centre; zero on the set."""
    handle = as_handle(handle)
    return gradient_from_projections(project(handle, z), _onset_tol(handle))


def gradient_norms(handle, Z) -> np.ndarray:
    handle = as_handle(handle)
    tol = _onset_tol(handle)
    return np.array([gradient_from_projections(p, tol).norm for p in project_many(handle, Z)])


def mu_classify(handle, z, mu: float) -> str:
    if not 0.0 <= mu <= 1.0:
        raise ValueError("mu must lie in [0, 1]")
    handle = as_handle(handle)
    g = generalized_gradient(handle, z)
    if g.projections.distance <= _onset_tol(handle):
        return "regular"
    return "mu_critical" if g.norm <= mu else "regular"


@dataclass(frozen=True)
class HausdorffResult:
    value: float
    n_a: int
    n_b: int
    density: int | None  # samples per chart when a side is a manifold

    def __float__(self):
        return self.value


def _finite(handle, n_per_chart):
    if isinstance(handle, Scenario):
        return handle.discretize(n_per_chart)[0], n_per_chart
    return handle.points, None


def hausdorff_distance(a, b, n_per_chart: int = HAUSDORFF_DENSITY) -> HausdorffResult:
    """Symmetric Hausdorff distance; manifolds are replaced by dense discretisations."""
    A, da = _finite(as_handle(a), n_per_chart)
    B, db = _finite(as_handle(b), n_per_chart)
    h1 = cKDTree(B).query(A)[0].max()
    h2 = cKDTree(A).query(B)[0].max()
    return HausdorffResult(float(max(h1, h2)), len(A), len(B), da or db)
